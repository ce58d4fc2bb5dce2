#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "redist/errors.hpp"
#include "redist/flops.hpp"
#include "redist/random.hpp"
#include "redist/search_space.hpp"

namespace redist {

struct ScoredPair {
    double x = 0.0;  // computation ratio
    double ap = 0.0;
    std::string sample_id;
};

struct BootstrapParams {
    std::size_t replicates = 1000;
    double subsample_frac = 0.25;
    double confidence = 0.95;

    void validate() const {
        if (replicates == 0) throw ConfigError("bootstrap.replicates", "must be > 0");
        if (!(subsample_frac > 0 && subsample_frac <= 1)) throw ConfigError("bootstrap.subsample", "must be in (0, 1]");
        if (!(confidence > 0 && confidence < 1)) throw ConfigError("bootstrap.confidence", "must be in (0, 1)");
    }
};

struct BootstrapRange {
    std::string component;
    double low = 0.0;
    double high = 0.0;
    double confidence = 0.95;
    std::size_t replicates = 0;
    double subsample_frac = 0.25;
    bool degenerate = false;  // every pair had the same score
};

/// Linear-interpolation (type 7) quantile of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty data");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// x of the highest-scoring pair in each resampled replicate.
inline std::vector<double> bootstrap_best_x(std::span<const ScoredPair> pairs, std::uint64_t seed,
                                            const BootstrapParams& p) {
    p.validate();
    if (pairs.size() < 2) throw DataError("bootstrap needs at least 2 pairs");
    const std::size_t n = pairs.size();
    const auto k = static_cast<std::size_t>(std::ceil(p.subsample_frac * static_cast<double>(n)));
    std::vector<double> best(p.replicates);
    for (std::size_t r = 0; r < p.replicates; ++r) {
        Rng rng = substream(seed, {r});
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        const ScoredPair* top = nullptr;
        for (std::size_t i = 0; i < k; ++i) {
            const ScoredPair& c = pairs[pick(rng)];
            if (!top || c.ap > top->ap || (c.ap == top->ap && c.sample_id < top->sample_id)) top = &c;
        }
        best[r] = top->x;
    }
    return best;
}

inline BootstrapRange empirical_bootstrap(std::span<const ScoredPair> pairs, std::uint64_t seed,
                                          const BootstrapParams& p = {}, std::string component = {}) {
    std::vector<double> best = bootstrap_best_x(pairs, seed, p);
    std::sort(best.begin(), best.end());
    BootstrapRange r;
    r.component = std::move(component);
    r.low = quantile_sorted(best, (1.0 - p.confidence) / 2.0);
    r.high = quantile_sorted(best, (1.0 + p.confidence) / 2.0);
    r.confidence = p.confidence;
    r.replicates = p.replicates;
    r.subsample_frac = p.subsample_frac;
    r.degenerate = std::all_of(pairs.begin(), pairs.end(), [&](const ScoredPair& s) { return s.ap == pairs[0].ap; });
    return r;
}

inline const std::vector<std::string>& step1_components() {
    static const std::vector<std::string> k = {"stem", "C2", "C3", "C4", "C5", "shallow", "deep"};
    return k;
}

inline const std::vector<std::string>& step2_components() {
    static const std::vector<std::string> k = {"backbone", "neck", "head"};
    return k;
}

inline std::vector<ScoredPair> scored_pairs(std::span<const ArchSample> population, std::string_view component) {
    std::vector<ScoredPair> pairs;
    pairs.reserve(population.size());
    for (const auto& s : population) {
        if (!s.ap) throw DataError("sample " + s.id + " has no score");
        pairs.push_back({named_ratio(component_ratios(s.flops), component), *s.ap, s.id});
    }
    return pairs;
}

/// One range per component. Each component gets its own substream of `seed`.
inline std::vector<BootstrapRange> range_report(std::span<const ArchSample> population,
                                                const std::vector<std::string>& components, std::uint64_t seed,
                                                const BootstrapParams& p = {}) {
    std::vector<std::string> unscored;
    for (const auto& s : population)
        if (!s.ap) unscored.push_back(s.id);
    if (!unscored.empty()) throw MissingScores(unscored);
    std::vector<BootstrapRange> out;
    for (std::size_t c = 0; c < components.size(); ++c) {
        const auto pairs = scored_pairs(population, components[c]);
        const std::uint64_t sub = substream(seed, {0xB007, c})();
        out.push_back(empirical_bootstrap(pairs, sub, p, components[c]));
    }
    return out;
}

inline std::optional<BootstrapRange> find_range(const std::vector<BootstrapRange>& ranges, std::string_view name) {
    for (const auto& r : ranges)
        if (r.component == name) return r;
    return std::nullopt;
}

/// Stem..C5 ranges from a step-1 report.
inline BackboneRanges backbone_ranges_from(const std::vector<BootstrapRange>& ranges) {
    BackboneRanges out;
    static constexpr std::array<std::string_view, 5> kStages = {"stem", "C2", "C3", "C4", "C5"};
    for (std::size_t i = 0; i < 5; ++i) {
        auto r = find_range(ranges, kStages[i]);
        if (!r) throw DataError("step-1 ranges lack component " + std::string(kStages[i]));
        out[i] = {r->low, r->high};
    }
    return out;
}

inline nlohmann::json to_json(const BootstrapRange& r) {
    return {{"component", r.component}, {"low", r.low},           {"high", r.high},
            {"confidence", r.confidence}, {"replicates", r.replicates}, {"subsample_frac", r.subsample_frac},
            {"degenerate", r.degenerate}};
}

inline BootstrapRange range_from_json(const nlohmann::json& j) {
    BootstrapRange r;
    try {
        r.component = j.at("component").get<std::string>();
        r.low = j.at("low").get<double>();
        r.high = j.at("high").get<double>();
        r.confidence = j.at("confidence").get<double>();
        r.replicates = j.at("replicates").get<std::size_t>();
        r.subsample_frac = j.at("subsample_frac").get<double>();
        r.degenerate = j.at("degenerate").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed range record: ") + e.what());
    }
    return r;
}

inline void write_ranges_csv(std::ostream& os, const std::vector<BootstrapRange>& ranges) {
    os << "component,low,high,B,confidence\n";
    for (const auto& r : ranges) {
        os << r.component << ',' << nlohmann::json(r.low).dump() << ',' << nlohmann::json(r.high).dump() << ','
           << r.replicates << ',' << nlohmann::json(r.confidence).dump() << '\n';
    }
}

}  // namespace redist
