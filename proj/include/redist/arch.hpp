#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"
#include "redist/errors.hpp"
#include "redist/random.hpp"

namespace redist {

enum class BlockKind : std::uint8_t { BasicResidual, BottleneckResidual, DepthwiseSeparable };

inline constexpr int kBottleneckExpansion = 4;

inline std::string_view block_kind_name(BlockKind k) {
    switch (k) {
        case BlockKind::BasicResidual: return "basic";
        case BlockKind::BottleneckResidual: return "bottleneck";
        case BlockKind::DepthwiseSeparable: return "depthwise";
    }
    return "?";
}

inline std::optional<BlockKind> parse_block_kind(std::string_view s) {
    if (s == "basic") return BlockKind::BasicResidual;
    if (s == "bottleneck") return BlockKind::BottleneckResidual;
    if (s == "depthwise") return BlockKind::DepthwiseSeparable;
    return std::nullopt;
}

struct Stage {
    int depth = 1;
    int width = 8;
    friend bool operator==(const Stage&, const Stage&) = default;
};

/// Four stages C2..C5. The stem width is derived from the first stage.
struct BackboneConfig {
    std::array<Stage, 4> stages{};
    BlockKind block = BlockKind::BasicResidual;
    friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

struct NeckConfig {
    int channels = 32;
    friend bool operator==(const NeckConfig&, const NeckConfig&) = default;
};

struct HeadConfig {
    int channels = 96;
    int depth = 2;
    bool depthwise = false;
    friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

/// Stride-8/16/32 levels with two square anchors each; these are fixed.
inline constexpr std::array<int, 3> kLevelStrides = {8, 16, 32};
inline constexpr std::array<std::array<int, 2>, 3> kAnchorSides = {{{16, 32}, {64, 128}, {256, 512}}};
inline constexpr double kAnchorRatio = 1.0;

struct DetectorArch {
    BackboneConfig backbone;
    NeckConfig neck;
    HeadConfig head;
    friend bool operator==(const DetectorArch&, const DetectorArch&) = default;
};

struct InputSize {
    int width = 640;
    int height = 480;
    friend bool operator==(const InputSize&, const InputSize&) = default;
};

inline constexpr InputSize kVgaInput{640, 480};

/// Bounds of the sampled search space. Hand-written architectures (the
/// published baselines) may exceed them; see validate_structure.
struct ArchLimits {
    int d_max = 24;
    int w_max = 512;
    int w_step = 8;
    int n_max = 256;
    int h_max = 256;
    int m_max = 6;
};

/// Channels of the stem output. Bottleneck stems match the first block's
/// internal width; depthwise stems end at half of w1.
inline int stem_width(const BackboneConfig& b) {
    const int w1 = b.stages[0].width;
    switch (b.block) {
        case BlockKind::BasicResidual: return w1;
        case BlockKind::BottleneckResidual: return w1 / kBottleneckExpansion;
        case BlockKind::DepthwiseSeparable: return w1 / 2;
    }
    return w1;
}

/// Invariants every architecture must satisfy to be costed.
inline void validate_structure(const DetectorArch& a) {
    const auto& st = a.backbone.stages;
    for (int i = 0; i < 4; ++i) {
        const std::string p = "backbone.stages[" + std::to_string(i) + "]";
        if (st[i].depth < 1) throw ConfigError(p + ".depth", "must be >= 1");
        if (a.backbone.block == BlockKind::BottleneckResidual && st[i].width % kBottleneckExpansion != 0)
            throw ConfigError(p + ".width", "bottleneck width must be divisible by 4");
        if (st[i].width < 8 || st[i].width % 8 != 0)
            throw ConfigError(p + ".width", "must be a positive multiple of 8");
        if (i > 0 && st[i].width < st[i - 1].width)
            throw ConfigError(p + ".width", "stage widths must be non-decreasing");
    }
    if (a.neck.channels < 8 || a.neck.channels % 8 != 0)
        throw ConfigError("neck.n", "must be a positive multiple of 8");
    if (a.head.channels < 8 || a.head.channels % 8 != 0)
        throw ConfigError("head.h", "must be a positive multiple of 8");
    if (a.head.depth < 1) throw ConfigError("head.m", "must be >= 1");
}

/// Structure plus the search-space bounds.
inline void validate_limits(const DetectorArch& a, const ArchLimits& lim = {}) {
    validate_structure(a);
    for (int i = 0; i < 4; ++i) {
        const auto& s = a.backbone.stages[i];
        const std::string p = "backbone.stages[" + std::to_string(i) + "]";
        if (s.depth > lim.d_max) throw ConfigError(p + ".depth", "exceeds d_max");
        if (s.width > lim.w_max) throw ConfigError(p + ".width", "exceeds w_max");
        if (s.width % lim.w_step != 0) throw ConfigError(p + ".width", "not a multiple of w_step");
    }
    if (a.neck.channels > lim.n_max) throw ConfigError("neck.n", "exceeds n_max");
    if (a.head.channels > lim.h_max) throw ConfigError("head.h", "exceeds h_max");
    if (a.head.depth > lim.m_max) throw ConfigError("head.m", "exceeds m_max");
}

inline void validate_input(const InputSize& in) {
    if (in.width <= 0 || in.height <= 0 || in.width % 32 != 0 || in.height % 32 != 0)
        throw ConfigError("input", "dimensions must be positive multiples of 32");
}

// JSON: {backbone:{block,stages:[[d,w]x4]}, neck:{n}, head:{h,m,depthwise}}

inline nlohmann::json to_json(const DetectorArch& a) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : a.backbone.stages) stages.push_back({s.depth, s.width});
    return {
        {"backbone", {{"block", block_kind_name(a.backbone.block)}, {"stages", stages}}},
        {"neck", {{"n", a.neck.channels}}},
        {"head", {{"h", a.head.channels}, {"m", a.head.depth}, {"depthwise", a.head.depthwise}}},
    };
}

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::string& path,
                           std::initializer_list<std::string_view> known) {
    if (!obj.is_object()) throw ConfigError(path, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (auto k : known) ok = ok || it.key() == k;
        if (!ok) throw ConfigError(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
    }
}

inline const nlohmann::json& require(const nlohmann::json& obj, const std::string& path, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(path.empty() ? key : path + "." + key, "missing required key");
    return *it;
}

inline int as_int(const nlohmann::json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
    return v.get<int>();
}

}  // namespace detail

inline DetectorArch arch_from_json(const nlohmann::json& j) {
    using namespace detail;
    reject_unknown(j, "", {"backbone", "neck", "head"});
    DetectorArch a;

    const auto& bb = require(j, "", "backbone");
    reject_unknown(bb, "backbone", {"block", "stages"});
    const auto& block = require(bb, "backbone", "block");
    if (!block.is_string()) throw ConfigError("backbone.block", "expected a string");
    auto kind = parse_block_kind(block.get<std::string>());
    if (!kind) throw ConfigError("backbone.block", "expected basic|bottleneck|depthwise");
    a.backbone.block = *kind;
    const auto& stages = require(bb, "backbone", "stages");
    if (!stages.is_array() || stages.size() != 4) throw ConfigError("backbone.stages", "expected 4 [depth, width] pairs");
    for (std::size_t i = 0; i < 4; ++i) {
        const std::string p = "backbone.stages[" + std::to_string(i) + "]";
        if (!stages[i].is_array() || stages[i].size() != 2) throw ConfigError(p, "expected [depth, width]");
        a.backbone.stages[i] = {as_int(stages[i][0], p + ".depth"), as_int(stages[i][1], p + ".width")};
    }

    const auto& neck = require(j, "", "neck");
    reject_unknown(neck, "neck", {"n"});
    a.neck.channels = as_int(require(neck, "neck", "n"), "neck.n");

    const auto& head = require(j, "", "head");
    reject_unknown(head, "head", {"h", "m", "depthwise"});
    a.head.channels = as_int(require(head, "head", "h"), "head.h");
    a.head.depth = as_int(require(head, "head", "m"), "head.m");
    if (auto it = head.find("depthwise"); it != head.end()) {
        if (!it->is_boolean()) throw ConfigError("head.depthwise", "expected a boolean");
        a.head.depthwise = it->get<bool>();
    }
    validate_structure(a);
    return a;
}

/// Canonical text form; object keys are emitted sorted.
inline std::string canonical_json(const DetectorArch& a) { return to_json(a).dump(); }

/// Content hash of the canonical JSON, as 16 hex digits.
inline std::string arch_id(const DetectorArch& a) {
    const std::string text = canonical_json(a);
    const std::uint64_t h = fnv1a64(text.data(), text.size());
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) out[static_cast<std::size_t>(15 - i)] = kHex[(h >> (4 * i)) & 0xF];
    return out;
}

}  // namespace redist
