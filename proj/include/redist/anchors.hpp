#pragma once

// Training-time geometry: face scales at the VGA bound, square crop
// augmentation, anchor tiling and ATSS positive assignment.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "redist/arch.hpp"
#include "redist/errors.hpp"
#include "redist/random.hpp"
#include "redist/widerface.hpp"

namespace redist {

struct Box {
    double x = 0, y = 0, w = 0, h = 0;  // top-left corner and size
    double cx() const { return x + w / 2; }
    double cy() const { return y + h / 2; }
    double area() const { return w * h; }
    friend bool operator==(const Box&, const Box&) = default;
};

inline double iou(const Box& a, const Box& b) {
    if (a.w <= 0 || a.h <= 0 || b.w <= 0 || b.h <= 0) return 0.0;
    const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
    const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

struct Anchor {
    double cx = 0, cy = 0;
    int side = 0;
    int stride = 0;
    Box box() const { return {cx - side / 2.0, cy - side / 2.0, double(side), double(side)}; }
};

inline constexpr std::array<int, 6> kAnchorScales = {16, 32, 64, 128, 256, 512};

inline int anchor_scale_index(int side) {
    for (std::size_t i = 0; i < kAnchorScales.size(); ++i)
        if (kAnchorScales[i] == side) return static_cast<int>(i);
    return -1;
}

/// Anchors for a square canvas, ordered by level, then location (row-major), then scale.
inline std::vector<Anchor> tile_anchors(int canvas = 640) {
    std::vector<Anchor> out;
    for (std::size_t l = 0; l < kLevelStrides.size(); ++l) {
        const int s = kLevelStrides[l];
        const int g = canvas / s;
        for (int i = 0; i < g; ++i)
            for (int j = 0; j < g; ++j)
                for (int side : kAnchorSides[l]) out.push_back({(j + 0.5) * s, (i + 0.5) * s, side, s});
    }
    return out;
}

struct AtssOptions {
    int k = 9;  // candidates per level
};

struct AtssResult {
    std::vector<int> assigned;                   // per anchor: gt index or -1
    std::vector<std::vector<std::size_t>> raw;   // per gt: positives before cross-gt resolution
    std::size_t positives() const {
        return static_cast<std::size_t>(std::count_if(assigned.begin(), assigned.end(), [](int g) { return g >= 0; }));
    }
};

namespace detail {

struct Candidate {
    double d2;
    std::size_t index;
    bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
};

inline double dist2(const Anchor& a, double x, double y) {
    const double dx = a.cx - x, dy = a.cy - y;
    return dx * dx + dy * dy;
}

inline bool center_inside(const Anchor& a, const Box& g) {
    return a.cx > g.x && a.cx < g.x + g.w && a.cy > g.y && a.cy < g.y + g.h;
}

/// Threshold and positives for one gt from its pooled candidates; ties on
/// IoU across gts are settled by the caller.
inline void select_positives(std::span<const Anchor> anchors, const Box& gt, std::vector<Candidate>& pooled,
                             std::vector<std::size_t>& out, std::vector<double>& ious) {
    out.clear();
    if (pooled.empty()) return;
    ious.resize(pooled.size());
    double sum = 0;
    for (std::size_t i = 0; i < pooled.size(); ++i) sum += ious[i] = iou(anchors[pooled[i].index].box(), gt);
    const double n = static_cast<double>(pooled.size());
    const double mean = sum / n;
    double ss = 0;
    for (double v : ious) ss += (v - mean) * (v - mean);
    const double sd = pooled.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    const double thr = mean + sd;
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        const auto& a = anchors[pooled[i].index];
        if (ious[i] >= thr && center_inside(a, gt)) out.push_back(pooled[i].index);
    }
    std::sort(out.begin(), out.end());
}

/// Gives each anchor to the claiming gt with the highest IoU (then lower gt index).
inline void resolve_claims(std::span<const Anchor> anchors, std::span<const Box> gts, AtssResult& r) {
    std::vector<double> best(anchors.size(), -1.0);
    for (std::size_t g = 0; g < gts.size(); ++g) {
        for (std::size_t a : r.raw[g]) {
            const double v = iou(anchors[a].box(), gts[g]);
            if (v > best[a]) {
                best[a] = v;
                r.assigned[a] = static_cast<int>(g);
            }
        }
    }
}

}  // namespace detail

/// ATSS over an arbitrary anchor list; levels are the distinct strides.
inline AtssResult atss_assign(std::span<const Anchor> anchors, std::span<const Box> gts, const AtssOptions& opt = {}) {
    if (opt.k < 1) throw ConfigError("atss.k", "must be >= 1");
    AtssResult r;
    r.assigned.assign(anchors.size(), -1);
    r.raw.resize(gts.size());
    std::vector<int> strides;
    for (const auto& a : anchors) strides.push_back(a.stride);
    std::sort(strides.begin(), strides.end());
    strides.erase(std::unique(strides.begin(), strides.end()), strides.end());

    std::vector<detail::Candidate> level, pooled;
    std::vector<double> ious;
    for (std::size_t g = 0; g < gts.size(); ++g) {
        const double gx = gts[g].cx(), gy = gts[g].cy();
        pooled.clear();
        for (int s : strides) {
            level.clear();
            for (std::size_t i = 0; i < anchors.size(); ++i)
                if (anchors[i].stride == s) level.push_back({detail::dist2(anchors[i], gx, gy), i});
            const std::size_t k = std::min<std::size_t>(opt.k, level.size());
            std::partial_sort(level.begin(), level.begin() + static_cast<std::ptrdiff_t>(k), level.end());
            pooled.insert(pooled.end(), level.begin(), level.begin() + static_cast<std::ptrdiff_t>(k));
        }
        detail::select_positives(anchors, gts[g], pooled, r.raw[g], ious);
    }
    detail::resolve_claims(anchors, gts, r);
    return r;
}

/// Anchors tiled on a square canvas with a windowed nearest-candidate search.
/// Gives the same result as the generic atss_assign on the same anchors.
class AnchorGrid {
public:
    explicit AnchorGrid(int canvas = 640) : canvas_(canvas), anchors_(tile_anchors(canvas)) {
        std::size_t offset = 0;
        for (std::size_t l = 0; l < kLevelStrides.size(); ++l) {
            offsets_[l] = offset;
            offset += static_cast<std::size_t>(cells(l) * cells(l)) * kAnchorSides[l].size();
        }
    }

    const std::vector<Anchor>& anchors() const { return anchors_; }
    int canvas() const { return canvas_; }

    AtssResult assign(std::span<const Box> gts, const AtssOptions& opt = {}) const {
        if (opt.k < 1) throw ConfigError("atss.k", "must be >= 1");
        AtssResult r;
        r.assigned.assign(anchors_.size(), -1);
        r.raw.resize(gts.size());
        std::vector<detail::Candidate> level, pooled;
        std::vector<double> ious;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            pooled.clear();
            for (std::size_t l = 0; l < kLevelStrides.size(); ++l) nearest(l, gts[g], opt.k, level, pooled);
            detail::select_positives(anchors_, gts[g], pooled, r.raw[g], ious);
        }
        detail::resolve_claims(anchors_, gts, r);
        return r;
    }

private:
    int cells(std::size_t l) const { return canvas_ / kLevelStrides[l]; }

    void nearest(std::size_t l, const Box& gt, int k, std::vector<detail::Candidate>& buf,
                 std::vector<detail::Candidate>& pooled) const {
        const int s = kLevelStrides[l];
        const int g = cells(l);
        const std::size_t per = kAnchorSides[l].size();
        const std::size_t total = static_cast<std::size_t>(g * g) * per;
        const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), total);
        const double gx = gt.cx(), gy = gt.cy();
        const bool on_grid = gx >= 0 && gy >= 0 && gx < g * s && gy < g * s;
        const int ci = on_grid ? static_cast<int>(gy / s) : 0;
        const int cj = on_grid ? static_cast<int>(gx / s) : 0;
        for (int radius = 2;; radius *= 2) {
            const bool full = !on_grid || radius >= g;
            const int i0 = full ? 0 : std::max(0, ci - radius), i1 = full ? g - 1 : std::min(g - 1, ci + radius);
            const int j0 = full ? 0 : std::max(0, cj - radius), j1 = full ? g - 1 : std::min(g - 1, cj + radius);
            buf.clear();
            for (int i = i0; i <= i1; ++i)
                for (int j = j0; j <= j1; ++j)
                    for (std::size_t a = 0; a < per; ++a) {
                        const std::size_t idx = offsets_[l] + (static_cast<std::size_t>(i * g + j)) * per + a;
                        buf.push_back({detail::dist2(anchors_[idx], gx, gy), idx});
                    }
            if (buf.size() >= kk) {
                std::partial_sort(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(kk), buf.end());
                // Cells outside the window are at least (radius + 0.5) * s away.
                const double bound = (radius + 0.5) * s;
                if (full || (kk > 0 && buf[kk - 1].d2 < bound * bound)) {
                    pooled.insert(pooled.end(), buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(kk));
                    return;
                }
            }
        }
    }

    int canvas_;
    std::vector<Anchor> anchors_;
    std::array<std::size_t, 3> offsets_{};
};

// ---------------------------------------------------------------------------
// Crop augmentation

struct CropPolicy {
    std::string name;
    std::vector<double> scale_choices;  // fractions of the short edge
    int output_size = 640;

    static CropPolicy baseline() { return {"baseline", {0.3, 0.45, 0.6, 0.8, 1.0}, 640}; }
    static CropPolicy sample_redistribution() {
        return {"sr", {0.3, 0.45, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0}, 640};
    }

    void validate() const {
        if (scale_choices.empty()) throw ConfigError("crop.scale_choices", "must not be empty");
        for (double c : scale_choices)
            if (!(c > 0)) throw ConfigError("crop.scale_choices", "choices must be > 0");
        if (output_size <= 0) throw ConfigError("crop.output_size", "must be > 0");
    }
};

inline CropPolicy crop_policy_named(std::string_view name) {
    if (name == "baseline") return CropPolicy::baseline();
    if (name == "sr") return CropPolicy::sample_redistribution();
    throw ConfigError("policy", "expected baseline|sr, got '" + std::string(name) + "'");
}

inline constexpr const char* kCropOriginRule =
    "square side = choice * short edge; per axis the origin is uniform over positions keeping the crop inside the "
    "image when it fits, otherwise keeping the image inside the crop; faces kept when their center lies inside the "
    "crop, then clipped to it";

struct CropResult {
    double side = 0;           // crop side in source pixels
    double origin_x = 0, origin_y = 0;
    double scale = 1;          // output_size / side
    std::vector<Box> faces;    // on the output canvas
};

/// Applies one random crop to `image`. Faces failing `filter` are ignored.
inline CropResult simulate_crop(const ImageAnnotation& image, Rng& rng, const CropPolicy& policy,
                                const FaceFilter& filter = {}) {
    if (!image.resolved()) throw DataError("image " + image.relative_path + " has no resolved dimensions");
    const double W = *image.width, H = *image.height;
    const auto pick = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(policy.scale_choices.size()) - 1));
    CropResult r;
    r.side = policy.scale_choices[pick] * std::min(W, H);
    r.origin_x = r.side <= W ? uniform_real(rng, 0, W - r.side) : uniform_real(rng, W - r.side, 0);
    r.origin_y = r.side <= H ? uniform_real(rng, 0, H - r.side) : uniform_real(rng, H - r.side, 0);
    r.scale = policy.output_size / r.side;
    const double x1 = r.origin_x + r.side, y1 = r.origin_y + r.side;
    for (const auto& f : image.faces) {
        if (!filter.keep(f)) continue;
        const double cx = f.x + f.w / 2.0, cy = f.y + f.h / 2.0;
        if (cx < r.origin_x || cx >= x1 || cy < r.origin_y || cy >= y1) continue;
        const double bx0 = std::max<double>(f.x, r.origin_x), by0 = std::max<double>(f.y, r.origin_y);
        const double bx1 = std::min<double>(f.x + f.w, x1), by1 = std::min<double>(f.y + f.h, y1);
        if (bx1 <= bx0 || by1 <= by0) continue;
        r.faces.push_back({(bx0 - r.origin_x) * r.scale, (by0 - r.origin_y) * r.scale, (bx1 - bx0) * r.scale,
                           (by1 - by0) * r.scale});
    }
    return r;
}

// ---------------------------------------------------------------------------
// Face scale statistics

/// sqrt(w*h) of every kept face after resizing its image so the long edge is `long_edge`.
inline std::vector<double> face_scales(const FaceDataset& ds, int long_edge = 640, const FaceFilter& filter = {}) {
    std::vector<double> out;
    for (const auto& im : ds.images) {
        if (!im.resolved()) throw DataError("image " + im.relative_path + " has no resolved dimensions");
        const double f = long_edge / static_cast<double>(std::max(*im.width, *im.height));
        for (const auto& b : im.faces)
            if (filter.keep(b)) out.push_back(std::sqrt(static_cast<double>(b.w) * b.h) * f);
    }
    return out;
}

/// Fraction of faces with scale strictly below each threshold.
inline std::vector<double> face_scale_cdf(const FaceDataset& ds, std::span<const double> thresholds,
                                          int long_edge = 640, const FaceFilter& filter = {}) {
    auto scales = face_scales(ds, long_edge, filter);
    if (scales.empty()) throw DataError("no faces to measure");
    std::sort(scales.begin(), scales.end());
    std::vector<double> out;
    out.reserve(thresholds.size());
    for (double t : thresholds) {
        const auto below = std::lower_bound(scales.begin(), scales.end(), t) - scales.begin();
        out.push_back(static_cast<double>(below) / static_cast<double>(scales.size()));
    }
    return out;
}

inline void write_cdf_csv(std::ostream& os, std::span<const double> thresholds, std::span<const double> fractions) {
    os << "threshold,fraction\n";
    for (std::size_t i = 0; i < thresholds.size(); ++i)
        os << nlohmann::json(thresholds[i]).dump() << ',' << nlohmann::json(fractions[i]).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Positive anchor statistics

/// Ground-truth scale bins: <4, [4,8), ..., [256,512), >=512.
inline constexpr std::array<double, 8> kGtBinEdges = {4, 8, 16, 32, 64, 128, 256, 512};

inline std::size_t gt_bin(double scale) {
    return static_cast<std::size_t>(std::upper_bound(kGtBinEdges.begin(), kGtBinEdges.end(), scale) -
                                    kGtBinEdges.begin());
}

inline std::string gt_bin_label(std::size_t b) {
    if (b == 0) return "<4";
    if (b == kGtBinEdges.size()) return ">=512";
    return std::to_string(int(kGtBinEdges[b - 1])) + "-" + std::to_string(int(kGtBinEdges[b]));
}

struct MatchStats {
    std::array<std::uint64_t, 6> positives{};       // by anchor scale, after cross-gt resolution
    std::array<std::uint64_t, 6> raw_candidates{};  // by anchor scale, before it
    std::array<std::uint64_t, kGtBinEdges.size() + 1> gt_histogram{};
    std::uint64_t images = 0;
    std::uint64_t faces = 0;       // gt boxes on the canvas
    std::uint64_t matched_faces = 0;
    std::uint64_t epochs = 0;

    MatchStats& operator+=(const MatchStats& o) {
        for (std::size_t i = 0; i < positives.size(); ++i) positives[i] += o.positives[i];
        for (std::size_t i = 0; i < raw_candidates.size(); ++i) raw_candidates[i] += o.raw_candidates[i];
        for (std::size_t i = 0; i < gt_histogram.size(); ++i) gt_histogram[i] += o.gt_histogram[i];
        images += o.images;
        faces += o.faces;
        matched_faces += o.matched_faces;
        return *this;
    }
    std::uint64_t positives_at(int side) const { return positives.at(static_cast<std::size_t>(anchor_scale_index(side))); }
    std::uint64_t total_positives() const { return std::accumulate(positives.begin(), positives.end(), std::uint64_t{0}); }
    friend bool operator==(const MatchStats&, const MatchStats&) = default;
};

struct EpochOptions {
    std::size_t epochs = 1;
    AtssOptions atss;
    FaceFilter filter;
    unsigned threads = 1;
};

/// Crop and assign a single image; adds into `stats`.
inline void accumulate_image(const AnchorGrid& grid, const ImageAnnotation& im, Rng& rng, const CropPolicy& policy,
                             const EpochOptions& opt, MatchStats& stats) {
    const CropResult crop = simulate_crop(im, rng, policy, opt.filter);
    ++stats.images;
    stats.faces += crop.faces.size();
    for (const auto& f : crop.faces) ++stats.gt_histogram[gt_bin(std::sqrt(f.area()))];
    if (crop.faces.empty()) return;
    const AtssResult r = grid.assign(crop.faces, opt.atss);
    const auto& anchors = grid.anchors();
    for (std::size_t a = 0; a < r.assigned.size(); ++a)
        if (r.assigned[a] >= 0) ++stats.positives[static_cast<std::size_t>(anchor_scale_index(anchors[a].side))];
    for (const auto& raw : r.raw) {
        if (!raw.empty()) ++stats.matched_faces;
        for (std::size_t a : raw) ++stats.raw_candidates[static_cast<std::size_t>(anchor_scale_index(anchors[a].side))];
    }
}

/// One crop per image per epoch. Image i of epoch e draws from substream(seed, {e, i}),
/// so results do not depend on the thread count.
inline MatchStats epoch_positive_stats(const FaceDataset& ds, const CropPolicy& policy, std::uint64_t seed,
                                       const EpochOptions& opt = {}) {
    policy.validate();
    const AnchorGrid grid(policy.output_size);
    MatchStats total;
    total.epochs = opt.epochs;
    const std::size_t n = ds.images.size();
    const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    for (std::size_t e = 0; e < opt.epochs; ++e) {
        std::vector<MatchStats> part(threads);
        auto work = [&](unsigned t) {
            for (std::size_t i = t; i < n; i += threads) {
                Rng rng = substream(seed, {e, i});
                accumulate_image(grid, ds.images[i], rng, policy, opt, part[t]);
            }
        };
        if (threads == 1) {
            work(0);
        } else {
            std::vector<std::jthread> pool;
            for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
        }
        for (const auto& p : part) total += p;
    }
    return total;
}

inline nlohmann::json to_json(const MatchStats& s) {
    nlohmann::json pos = nlohmann::json::object(), raw = nlohmann::json::object(), gt = nlohmann::json::object();
    for (std::size_t i = 0; i < kAnchorScales.size(); ++i) {
        pos[std::to_string(kAnchorScales[i])] = s.positives[i];
        raw[std::to_string(kAnchorScales[i])] = s.raw_candidates[i];
    }
    for (std::size_t b = 0; b < s.gt_histogram.size(); ++b) gt[gt_bin_label(b)] = s.gt_histogram[b];
    return {{"positives", pos}, {"raw_candidates", raw}, {"gt_histogram", gt},   {"images", s.images},
            {"faces", s.faces},  {"matched_faces", s.matched_faces}, {"epochs", s.epochs}};
}

/// Rows of (histogram, bin, count). Raw candidate rows only when `raw` is set.
inline void write_match_stats_csv(std::ostream& os, const MatchStats& s, bool raw = false) {
    os << "histogram,bin,count\n";
    for (std::size_t i = 0; i < kAnchorScales.size(); ++i) os << "positives," << kAnchorScales[i] << ',' << s.positives[i] << '\n';
    if (raw)
        for (std::size_t i = 0; i < kAnchorScales.size(); ++i)
            os << "raw_candidates," << kAnchorScales[i] << ',' << s.raw_candidates[i] << '\n';
    for (std::size_t b = 0; b < s.gt_histogram.size(); ++b) os << "gt," << gt_bin_label(b) << ',' << s.gt_histogram[b] << '\n';
}

}  // namespace redist
