#pragma once

// Analytic multiply-add and parameter accounting for stem / C2..C5 / PAFPN
// neck / shared head detectors. Bias, normalization and activation costs are
// not counted as MACs; normalization affine parameters are counted as params.

#include <array>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "redist/arch.hpp"

namespace redist {

using Macs = std::int64_t;

/// out_h * out_w * out_ch * (in_ch / groups) * kernel^2.
inline Macs conv_macs(std::int64_t in_ch, std::int64_t out_ch, std::int64_t kernel, std::int64_t out_h,
                      std::int64_t out_w, std::int64_t groups = 1) {
    if (in_ch <= 0 || out_ch <= 0 || kernel <= 0 || out_h <= 0 || out_w <= 0 || groups <= 0)
        throw std::invalid_argument("conv_macs: all dimensions must be positive");
    if (in_ch % groups != 0 || out_ch % groups != 0)
        throw std::invalid_argument("conv_macs: channels not divisible by groups");
    return out_h * out_w * out_ch * (in_ch / groups) * kernel * kernel;
}

enum class Component : std::uint8_t { Stem, C2, C3, C4, C5, Neck, Head };
inline constexpr std::size_t kNumComponents = 7;
inline constexpr std::array<Component, kNumComponents> kComponents = {
    Component::Stem, Component::C2, Component::C3, Component::C4, Component::C5, Component::Neck, Component::Head};

inline std::string_view component_name(Component c) {
    static constexpr std::array<std::string_view, kNumComponents> kNames = {"stem", "C2", "C3", "C4",
                                                                            "C5",   "neck", "head"};
    return kNames[static_cast<std::size_t>(c)];
}

struct Conv {
    int in_ch = 0;
    int out_ch = 0;
    int kernel = 1;
    int stride = 1;
    int groups = 1;
    int out_h = 0;
    int out_w = 0;
    bool normalized = true;  // followed by BN/GN with affine parameters

    Macs macs() const { return conv_macs(in_ch, out_ch, kernel, out_h, out_w, groups); }
    std::int64_t weights() const {
        return static_cast<std::int64_t>(out_ch) * (in_ch / groups) * kernel * kernel;
    }
    std::int64_t params() const { return weights() + (normalized ? 2 * static_cast<std::int64_t>(out_ch) : 0); }
};

/// Where a conv sits. `role` always points at a string literal.
struct LayerSite {
    Component component;
    int block = -1;  // block index within a stage, -1 elsewhere
    int level = -1;  // pyramid level stride for neck/head layers, -1 in the backbone
    std::string_view role;
};

enum class Expansion {
    Compact,   // identical repeated blocks visited once with a repeat count
    Expanded,  // every layer visited individually
};

namespace detail {

struct Res {
    int h;
    int w;
};

inline Res at_stride(const InputSize& in, int stride) { return {in.height / stride, in.width / stride}; }

/// One residual/separable block. `first` blocks downsample by 2.
template <class F>
void visit_block(BlockKind kind, int cin, int width, bool first, Res out, Component comp, int block,
                 std::int64_t repeat, F& f) {
    const int stride = first ? 2 : 1;
    auto emit = [&](std::string_view role, Conv c) { f(LayerSite{comp, block, -1, role}, c, repeat, true); };
    switch (kind) {
        case BlockKind::BasicResidual:
            emit("conv1", {cin, width, 3, stride, 1, out.h, out.w});
            emit("conv2", {width, width, 3, 1, 1, out.h, out.w});
            break;
        case BlockKind::BottleneckResidual: {
            const int mid = width / kBottleneckExpansion;
            // Stride sits on the 3x3 conv, so the reducing 1x1 runs at input resolution.
            const Res in = first ? Res{out.h * 2, out.w * 2} : out;
            emit("conv1", {cin, mid, 1, 1, 1, in.h, in.w});
            emit("conv2", {mid, mid, 3, stride, 1, out.h, out.w});
            emit("conv3", {mid, width, 1, 1, 1, out.h, out.w});
            break;
        }
        case BlockKind::DepthwiseSeparable:
            emit("dw", {cin, cin, 3, stride, cin, out.h, out.w});
            emit("pw", {cin, width, 1, 1, 1, out.h, out.w});
            break;
    }
    if (first && kind != BlockKind::DepthwiseSeparable) emit("shortcut", {cin, width, 1, 2, 1, out.h, out.w});
}

}  // namespace detail

/// Calls f(const LayerSite&, const Conv&, repeat, owns_params) for every
/// conv of the detector. Head layers are visited once per pyramid level;
/// only the stride-8 visit owns the shared weights.
template <class F>
void visit_layers(const DetectorArch& arch, const InputSize& input, Expansion mode, F&& f) {
    using detail::at_stride;
    using detail::Res;
    const auto& bb = arch.backbone;

    // stem, at stride 2
    {
        const Res r = at_stride(input, 2);
        auto emit = [&](std::string_view role, Conv c) { f(LayerSite{Component::Stem, -1, -1, role}, c, 1, true); };
        const int w1 = bb.stages[0].width;
        if (bb.block == BlockKind::DepthwiseSeparable) {
            const int q = w1 / 4;
            emit("conv1", {3, q, 3, 2, 1, r.h, r.w});
            emit("dw", {q, q, 3, 1, q, r.h, r.w});
            emit("pw", {q, w1 / 2, 1, 1, 1, r.h, r.w});
        } else {
            const int s = stem_width(bb);
            emit("conv1", {3, s / 2, 3, 2, 1, r.h, r.w});
            emit("conv2", {s / 2, s / 2, 3, 1, 1, r.h, r.w});
            emit("conv3", {s / 2, s, 3, 1, 1, r.h, r.w});
        }
    }

    int cin = stem_width(bb);
    for (int i = 0; i < 4; ++i) {
        const auto comp = static_cast<Component>(i + 1);
        const Res r = at_stride(input, 1 << (i + 2));
        const auto& st = bb.stages[i];
        detail::visit_block(bb.block, cin, st.width, true, r, comp, 0, 1, f);
        if (st.depth > 1) {
            if (mode == Expansion::Compact) {
                detail::visit_block(bb.block, st.width, st.width, false, r, comp, 1, st.depth - 1, f);
            } else {
                for (int b = 1; b < st.depth; ++b)
                    detail::visit_block(bb.block, st.width, st.width, false, r, comp, b, 1, f);
            }
        }
        cin = st.width;
    }

    // PAFPN neck over C3..C5: lateral 1x1 per level, top-down 3x3 fusion at
    // strides 8/16, bottom-up stride-2 transfer + 3x3 fusion at strides 16/32.
    const int n = arch.neck.channels;
    auto neck = [&](int level, std::string_view role, Conv c) {
        f(LayerSite{Component::Neck, -1, level, role}, c, 1, true);
    };
    for (int l = 0; l < 3; ++l) {
        const Res r = at_stride(input, kLevelStrides[l]);
        neck(kLevelStrides[l], "lateral", {bb.stages[l + 1].width, n, 1, 1, 1, r.h, r.w});
    }
    for (int l = 1; l >= 0; --l) {
        const Res r = at_stride(input, kLevelStrides[l]);
        neck(kLevelStrides[l], "td_fuse", {n, n, 3, 1, 1, r.h, r.w});
    }
    for (int l = 1; l < 3; ++l) {
        const Res r = at_stride(input, kLevelStrides[l]);
        neck(kLevelStrides[l], "bu_down", {n, n, 3, 2, 1, r.h, r.w});
        neck(kLevelStrides[l], "bu_fuse", {n, n, 3, 1, 1, r.h, r.w});
    }

    // Shared head: m stacked convs then class (1/anchor) and box (4/anchor) predictors.
    const auto& hd = arch.head;
    constexpr int kAnchorsPerLoc = 2;
    for (int l = 0; l < 3; ++l) {
        const Res r = at_stride(input, kLevelStrides[l]);
        const bool owns = l == 0;
        auto head = [&](int block, std::string_view role, Conv c) {
            f(LayerSite{Component::Head, block, kLevelStrides[l], role}, c, 1, owns);
        };
        for (int b = 0; b < hd.depth; ++b) {
            const int ci = b == 0 ? n : hd.channels;
            if (hd.depthwise) {
                head(b, "dw", {ci, ci, 3, 1, ci, r.h, r.w});
                head(b, "pw", {ci, hd.channels, 1, 1, 1, r.h, r.w});
            } else {
                head(b, "conv", {ci, hd.channels, 3, 1, 1, r.h, r.w});
            }
        }
        head(-1, "cls", {hd.channels, kAnchorsPerLoc * 1, 3, 1, 1, r.h, r.w, false});
        head(-1, "reg", {hd.channels, kAnchorsPerLoc * 4, 3, 1, 1, r.h, r.w, false});
    }
}

struct ComponentCost {
    Macs macs = 0;
    std::int64_t params = 0;
    friend bool operator==(const ComponentCost&, const ComponentCost&) = default;
};

struct FlopsBreakdown {
    std::array<ComponentCost, kNumComponents> parts{};

    ComponentCost& operator[](Component c) { return parts[static_cast<std::size_t>(c)]; }
    const ComponentCost& operator[](Component c) const { return parts[static_cast<std::size_t>(c)]; }

    Macs total_macs() const {
        Macs t = 0;
        for (const auto& p : parts) t += p.macs;
        return t;
    }
    std::int64_t total_params() const {
        std::int64_t t = 0;
        for (const auto& p : parts) t += p.params;
        return t;
    }
    Macs backbone_macs() const {
        return (*this)[Component::Stem].macs + (*this)[Component::C2].macs + (*this)[Component::C3].macs +
               (*this)[Component::C4].macs + (*this)[Component::C5].macs;
    }
    double ratio(Component c) const {
        const Macs t = total_macs();
        return t > 0 ? static_cast<double>((*this)[c].macs) / static_cast<double>(t) : 0.0;
    }
    friend bool operator==(const FlopsBreakdown&, const FlopsBreakdown&) = default;
};

inline FlopsBreakdown detector_flops(const DetectorArch& arch, const InputSize& input = kVgaInput) {
    validate_structure(arch);
    validate_input(input);
    FlopsBreakdown out;
    visit_layers(arch, input, Expansion::Compact,
                 [&](const LayerSite& site, const Conv& c, std::int64_t repeat, bool owns) {
                     auto& part = out[site.component];
                     part.macs += c.macs() * repeat;
                     if (owns) part.params += c.params() * repeat;
                 });
    return out;
}

/// Stem and C2..C5 entries only.
inline FlopsBreakdown backbone_flops(const DetectorArch& arch, const InputSize& input = kVgaInput) {
    FlopsBreakdown b = detector_flops(arch, input);
    b[Component::Neck] = {};
    b[Component::Head] = {};
    return b;
}

inline ComponentCost neck_flops(const DetectorArch& arch, const InputSize& input = kVgaInput) {
    return detector_flops(arch, input)[Component::Neck];
}

inline ComponentCost head_flops(const DetectorArch& arch, const InputSize& input = kVgaInput) {
    return detector_flops(arch, input)[Component::Head];
}

inline std::array<std::int64_t, kNumComponents> params_count(const DetectorArch& arch) {
    const auto b = detector_flops(arch);
    std::array<std::int64_t, kNumComponents> out{};
    for (std::size_t i = 0; i < kNumComponents; ++i) out[i] = b.parts[i].params;
    return out;
}

struct ComponentRatios {
    double backbone = 0, neck = 0, head = 0;           // of detector total
    std::array<double, 5> stages{};                    // stem, C2..C5 of backbone total
    double shallow = 0, deep = 0;                      // stem+C2+C3 / C4+C5 of backbone total
};

inline ComponentRatios component_ratios(const FlopsBreakdown& b) {
    const Macs total = b.total_macs();
    if (total <= 0) throw std::invalid_argument("component_ratios: total macs must be positive");
    const Macs bb = b.backbone_macs();
    ComponentRatios r;
    const auto t = static_cast<double>(total);
    r.backbone = static_cast<double>(bb) / t;
    r.neck = static_cast<double>(b[Component::Neck].macs) / t;
    r.head = static_cast<double>(b[Component::Head].macs) / t;
    if (bb > 0) {
        for (int i = 0; i < 5; ++i)
            r.stages[i] = static_cast<double>(b.parts[i].macs) / static_cast<double>(bb);
        const Macs shallow = b.parts[0].macs + b.parts[1].macs + b.parts[2].macs;
        r.shallow = static_cast<double>(shallow) / static_cast<double>(bb);
        r.deep = static_cast<double>(bb - shallow) / static_cast<double>(bb);
    }
    return r;
}

/// Ratio of one named component: stem, C2..C5, shallow, deep, backbone, neck, head.
inline double named_ratio(const ComponentRatios& r, std::string_view name) {
    static constexpr std::array<std::string_view, 5> kStages = {"stem", "C2", "C3", "C4", "C5"};
    for (std::size_t i = 0; i < kStages.size(); ++i)
        if (name == kStages[i]) return r.stages[i];
    if (name == "shallow") return r.shallow;
    if (name == "deep") return r.deep;
    if (name == "backbone") return r.backbone;
    if (name == "neck") return r.neck;
    if (name == "head") return r.head;
    throw std::invalid_argument("unknown component: " + std::string(name));
}

struct LayerRecord {
    std::string name;
    Component component;
    Conv conv;
    Macs macs;
    std::int64_t params;
};

/// Debug listing of every conv; macs and params sum to detector_flops.
inline std::vector<LayerRecord> list_layers(const DetectorArch& arch, const InputSize& input = kVgaInput) {
    validate_structure(arch);
    validate_input(input);
    std::vector<LayerRecord> out;
    visit_layers(arch, input, Expansion::Expanded,
                 [&](const LayerSite& s, const Conv& c, std::int64_t, bool owns) {
                     std::string name(component_name(s.component));
                     if (s.level > 0) name += ".p" + std::to_string(s.level);
                     if (s.block >= 0) name += ".b" + std::to_string(s.block);
                     name += ".";
                     name += s.role;
                     out.push_back({std::move(name), s.component, c, c.macs(), owns ? c.params() : 0});
                 });
    return out;
}

inline void write_layers_csv(std::ostream& os, const std::vector<LayerRecord>& layers) {
    os << "layer_name,in_ch,out_ch,kernel,stride,out_h,out_w,macs,params\n";
    for (const auto& l : layers)
        os << l.name << ',' << l.conv.in_ch << ',' << l.conv.out_ch << ',' << l.conv.kernel << ','
           << l.conv.stride << ',' << l.conv.out_h << ',' << l.conv.out_w << ',' << l.macs << ',' << l.params
           << '\n';
}

}  // namespace redist
