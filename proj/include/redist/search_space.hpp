#pragma once

// Random architectures from the reduced search space, filtered into a flop
// regime.
//
// generate_population returns samples distributed exactly as the prior
// (sample_backbone + sample_neck_head) conditioned on the regime and on the
// optional ratio constraints. To keep this tractable at small budgets, draws
// come from the prior restricted to a superset of the feasible region: width
// tuples whose depth-1 cost already exceeds the budget are dropped, and each
// stage depth is capped where it alone would overshoot. Width tuples are
// picked with weight prior(w) * prod(depth caps) and depths uniformly below
// the caps, which is the prior restricted to that region. Rejection then
// applies the exact conditions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include "redist/arch.hpp"
#include "redist/errors.hpp"
#include "redist/flops.hpp"
#include "redist/random.hpp"

namespace redist {

struct SearchSpaceSpec {
    ArchLimits limits;
    bool monotone_widths = true;
    std::optional<BlockKind> block;  // nullopt: chosen from the regime
};

/// Block policy by compute regime: depthwise up to 1 GF, basic up to 15 GF, bottleneck above.
inline BlockKind block_for_regime(double target_gmacs) {
    if (target_gmacs <= 1.0) return BlockKind::DepthwiseSeparable;
    if (target_gmacs <= 15.0) return BlockKind::BasicResidual;
    return BlockKind::BottleneckResidual;
}

struct FlopRegime {
    double target_gmacs = 2.5;
    double band = 0.05;  // relative half-width

    void validate() const {
        if (!(target_gmacs > 0)) throw ConfigError("regime.target_gflops", "must be > 0");
        if (!(band > 0 && band < 1)) throw ConfigError("regime.band", "must be in (0, 1)");
    }
    double target_macs() const { return target_gmacs * 1e9; }
    Macs upper_macs() const { return static_cast<Macs>(std::floor(target_macs() * (1 + band))); }
    bool contains(Macs total) const {
        return std::abs(static_cast<double>(total) - target_macs()) <= band * target_macs();
    }
};

struct NeckHead {
    NeckConfig neck;
    HeadConfig head;
};

struct ArchSample {
    std::string id;
    DetectorArch arch;
    FlopsBreakdown flops;
    std::optional<double> ap;
};

inline ArchSample make_sample(const DetectorArch& arch, const InputSize& input = kVgaInput) {
    return {arch_id(arch), arch, detector_flops(arch, input), std::nullopt};
}

struct RatioRange {
    double low = 0.0;
    double high = 1.0;
    bool contains(double x) const { return x >= low && x <= high; }
};

/// Allowed within-backbone ratios for stem, C2, C3, C4, C5.
using BackboneRanges = std::array<RatioRange, 5>;

inline bool backbone_within(const FlopsBreakdown& f, const BackboneRanges& ranges) {
    const auto r = component_ratios(f);
    for (std::size_t i = 0; i < 5; ++i)
        if (!ranges[i].contains(r.stages[i])) return false;
    return true;
}

/// Depths uniform on 1..d_max, widths uniform on multiples of w_step up to
/// w_max, sorted ascending when widths are monotone.
inline BackboneConfig sample_backbone(Rng& rng, const SearchSpaceSpec& spec, BlockKind kind) {
    const auto& lim = spec.limits;
    BackboneConfig b;
    b.block = kind;
    for (auto& s : b.stages) s.depth = uniform_int(rng, 1, lim.d_max);
    std::array<int, 4> w{};
    for (auto& x : w) x = lim.w_step * uniform_int(rng, 1, lim.w_max / lim.w_step);
    if (spec.monotone_widths) std::sort(w.begin(), w.end());
    for (int i = 0; i < 4; ++i) b.stages[i].width = w[i];
    return b;
}

inline NeckHead sample_neck_head(Rng& rng, const SearchSpaceSpec& spec, bool depthwise_head = false) {
    const auto& lim = spec.limits;
    NeckHead nh;
    nh.neck.channels = lim.w_step * uniform_int(rng, 1, lim.n_max / lim.w_step);
    nh.head.channels = lim.w_step * uniform_int(rng, 1, lim.h_max / lim.w_step);
    nh.head.depth = uniform_int(rng, 1, lim.m_max);
    nh.head.depthwise = depthwise_head;
    return nh;
}

struct PopulationOptions {
    std::size_t count = 320;
    std::size_t attempt_factor = 10000;  // cap = attempt_factor * count proposals
    std::optional<BackboneRanges> backbone_ranges;
    unsigned threads = 1;
};

struct PopulationStats {
    std::size_t attempts = 0;
    std::size_t accepted = 0;
    double proposal_mass = 1.0;  // prior probability of the proposal region
};

struct Population {
    std::vector<ArchSample> samples;
    PopulationStats stats;
};

class PopulationSampler {
public:
    static constexpr std::size_t kChunk = 1024;

    PopulationSampler(SearchSpaceSpec spec, FlopRegime regime, InputSize input = kVgaInput,
                      std::optional<NeckHead> fixed = std::nullopt)
        : spec_(std::move(spec)), regime_(regime), input_(input), fixed_(std::move(fixed)) {
        regime_.validate();
        validate_input(input_);
        const auto& lim = spec_.limits;
        if (lim.w_step <= 0 || lim.w_max < lim.w_step || lim.d_max < 1 || lim.m_max < 1 || lim.n_max < lim.w_step ||
            lim.h_max < lim.w_step)
            throw ConfigError("search_space", "invalid limits");
        kind_ = spec_.block.value_or(block_for_regime(regime_.target_gmacs));
        if (spec_.monotone_widths) build_table();
    }

    BlockKind block_kind() const { return kind_; }
    const FlopRegime& regime() const { return regime_; }
    const SearchSpaceSpec& spec() const { return spec_; }
    const std::optional<NeckHead>& fixed_neck_head() const { return fixed_; }
    double proposal_mass() const { return spec_.monotone_widths ? mass_ : 1.0; }

    Population generate(std::uint64_t seed, const PopulationOptions& opt) const {
        Population out;
        out.stats.proposal_mass = proposal_mass();
        const std::size_t cap = opt.attempt_factor * opt.count;
        if (opt.count == 0) return out;
        if (spec_.monotone_widths && table_.empty())
            throw SamplingError(0, 0, "no architecture in the search space reaches this regime");

        std::unordered_set<std::string> seen;
        const unsigned threads = std::max(1u, opt.threads);
        std::size_t next_chunk = 0;
        while (out.samples.size() < opt.count && out.stats.attempts < cap) {
            // Process up to `threads` chunks, then merge in chunk order.
            std::vector<std::size_t> ids;
            for (unsigned t = 0; t < threads && next_chunk * kChunk < cap; ++t) ids.push_back(next_chunk++);
            std::vector<ChunkResult> results(ids.size());
            auto work = [&](std::size_t k) {
                const std::size_t begin = ids[k] * kChunk;
                results[k] = run_chunk(seed, ids[k], std::min(kChunk, cap - begin), opt.backbone_ranges);
            };
            if (ids.size() == 1) {
                work(0);
            } else {
                std::vector<std::jthread> pool;
                for (std::size_t k = 0; k < ids.size(); ++k) pool.emplace_back(work, k);
            }
            for (auto& r : results) {
                for (auto& [attempt, sample] : r.accepted) {
                    if (out.samples.size() >= opt.count) break;
                    if (!seen.insert(sample.id).second) continue;
                    out.samples.push_back(std::move(sample));
                    out.stats.attempts = attempt + 1;
                }
                if (out.samples.size() >= opt.count) break;
                out.stats.attempts = r.end_attempt;
            }
        }
        out.stats.accepted = out.samples.size();
        if (out.samples.size() < opt.count)
            throw SamplingError(out.stats.attempts, out.samples.size(),
                                "proposal region holds " + std::to_string(proposal_mass()) + " of the prior");
        return out;
    }

    /// One proposal; exposed for tests.
    DetectorArch propose(Rng& rng) const {
        DetectorArch a;
        if (spec_.monotone_widths) {
            const double u = std::uniform_real_distribution<double>(0.0, cumulative_.back())(rng);
            const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
            const auto& e = table_[std::min<std::size_t>(it - cumulative_.begin(), table_.size() - 1)];
            a.backbone.block = kind_;
            for (int i = 0; i < 4; ++i) a.backbone.stages[i] = {uniform_int(rng, 1, e.dmax[i]), e.widths[i]};
        } else {
            a.backbone = sample_backbone(rng, spec_, kind_);
        }
        if (fixed_) {
            a.neck = fixed_->neck;
            a.head = fixed_->head;
        } else {
            auto nh = sample_neck_head(rng, spec_, kind_ == BlockKind::DepthwiseSeparable);
            a.neck = nh.neck;
            a.head = nh.head;
        }
        return a;
    }

    std::size_t table_size() const { return table_.size(); }

private:
    struct Entry {
        std::array<int, 4> widths;
        std::array<int, 4> dmax;
    };

    struct ChunkResult {
        std::vector<std::pair<std::size_t, ArchSample>> accepted;  // (global attempt index, sample)
        std::size_t end_attempt = 0;
    };

    ChunkResult run_chunk(std::uint64_t seed, std::size_t chunk, std::size_t n,
                          const std::optional<BackboneRanges>& ranges) const {
        ChunkResult r;
        Rng rng = substream(seed, {chunk});
        const std::size_t base = chunk * kChunk;
        for (std::size_t i = 0; i < n; ++i) {
            const DetectorArch a = propose(rng);
            const FlopsBreakdown f = detector_flops(a, input_);
            if (!regime_.contains(f.total_macs())) continue;
            if (ranges && !backbone_within(f, *ranges)) continue;
            r.accepted.emplace_back(base + i, ArchSample{arch_id(a), a, f, std::nullopt});
        }
        r.end_attempt = base + n;
        return r;
    }

    DetectorArch floor_arch(const std::array<int, 4>& w) const {
        DetectorArch a;
        a.backbone.block = kind_;
        for (int i = 0; i < 4; ++i) a.backbone.stages[i] = {1, w[i]};
        if (fixed_) {
            a.neck = fixed_->neck;
            a.head = fixed_->head;
        } else {
            a.neck.channels = spec_.limits.w_step;
            a.head = {spec_.limits.w_step, 1, kind_ == BlockKind::DepthwiseSeparable};
        }
        return a;
    }

    // Enumerates sorted width tuples whose cheapest completion fits under the
    // upper flop bound. Costs grow with every width, so loops stop early.
    void build_table() {
        const auto& lim = spec_.limits;
        const int k = lim.w_max / lim.w_step;
        const Macs upper = regime_.upper_macs();
        double total_weight = 0.0;

        auto floor_cost = [&](const std::array<int, 4>& w) { return detector_flops(floor_arch(w), input_).total_macs(); };
        std::array<int, 4> w{};
        auto fill = [&](int from, int v) {
            for (int j = from; j < 4; ++j) w[j] = v;
        };
        for (int a = 1; a <= k; ++a) {
            fill(0, a * lim.w_step);
            if (floor_cost(w) > upper) break;
            for (int b = a; b <= k; ++b) {
                fill(1, b * lim.w_step);
                if (floor_cost(w) > upper) break;
                for (int c = b; c <= k; ++c) {
                    fill(2, c * lim.w_step);
                    if (floor_cost(w) > upper) break;
                    for (int d = c; d <= k; ++d) {
                        w[3] = d * lim.w_step;
                        DetectorArch base = floor_arch(w);
                        const FlopsBreakdown b1 = detector_flops(base, input_);
                        const Macs lb = b1.total_macs();
                        if (lb > upper) break;
                        for (auto& s : base.backbone.stages) s.depth = 2;
                        const FlopsBreakdown b2 = detector_flops(base, input_);
                        Entry e{w, {}};
                        double weight = multiplicity(a, b, c, d);
                        for (int i = 0; i < 4; ++i) {
                            const auto comp = static_cast<Component>(i + 1);
                            const Macs extra = b2[comp].macs - b1[comp].macs;
                            const Macs room = upper - lb;
                            const Macs cap = extra > 0 ? 1 + room / extra : lim.d_max;
                            e.dmax[i] = static_cast<int>(std::min<Macs>(lim.d_max, cap));
                            weight *= e.dmax[i];
                        }
                        table_.push_back(e);
                        total_weight += weight;
                        cumulative_.push_back(total_weight);
                    }
                }
            }
        }
        // prior mass: weight / (k^4 * d_max^4)
        const double denom = std::pow(static_cast<double>(k), 4) * std::pow(static_cast<double>(lim.d_max), 4);
        mass_ = total_weight / denom;
    }

    // Orderings of four iid draws that sort to (a, b, c, d).
    static double multiplicity(int a, int b, int c, int d) {
        std::array<int, 4> v{a, b, c, d};
        double denom = 1;
        int run = 1;
        for (int i = 1; i <= 4; ++i) {
            if (i < 4 && v[i] == v[i - 1]) {
                ++run;
            } else {
                for (int f = 2; f <= run; ++f) denom *= f;
                run = 1;
            }
        }
        return 24.0 / denom;
    }

    SearchSpaceSpec spec_;
    FlopRegime regime_;
    InputSize input_;
    std::optional<NeckHead> fixed_;
    BlockKind kind_ = BlockKind::BasicResidual;
    std::vector<Entry> table_;
    std::vector<double> cumulative_;  // running sum of entry weights
    double mass_ = 0.0;
};

/// Convenience wrapper building a one-off sampler.
inline Population generate_population(std::uint64_t seed, const SearchSpaceSpec& spec, const FlopRegime& regime,
                                      const PopulationOptions& opt, std::optional<NeckHead> fixed = std::nullopt,
                                      const InputSize& input = kVgaInput) {
    return PopulationSampler(spec, regime, input, std::move(fixed)).generate(seed, opt);
}

}  // namespace redist
