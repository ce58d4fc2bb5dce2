#pragma once

// Two-step computation redistribution search: backbone-only (step 1) then
// whole detector (step 2), with scores supplied by an Evaluator.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "redist/bootstrap.hpp"
#include "redist/config.hpp"
#include "redist/errors.hpp"
#include "redist/flops.hpp"
#include "redist/random.hpp"
#include "redist/search_space.hpp"
#include "redist/widerface.hpp"

namespace redist {

class Evaluator {
public:
    virtual ~Evaluator() = default;
    /// Score in [0, 1]. Must be safe to call concurrently.
    virtual double score(const std::string& id, const DetectorArch& arch) const = 0;
    /// Ids this evaluator cannot score.
    virtual std::vector<std::string> missing(std::span<const ArchSample>) const { return {}; }
    virtual nlohmann::json describe() const = 0;
};

class ConstantStub final : public Evaluator {
public:
    explicit ConstantStub(double value = 0.5) : value_(value) {}
    double score(const std::string&, const DetectorArch&) const override { return value_; }
    nlohmann::json describe() const override { return {{"kind", "constant"}, {"value", value_}}; }

private:
    double value_;
};

/// Closed-form stand-in for a trained detector's AP:
/// peak - a (shallow - s*)^2 - b (backbone - b*)^2 + noise, clamped to [0, 1].
inline double surrogate_ap(const std::string& id, const FlopsBreakdown& flops, const SurrogateParams& p) {
    const auto r = component_ratios(flops);
    const double ds = r.shallow - p.shallow_opt, db = r.backbone - p.backbone_opt;
    double ap = p.peak - p.shallow_curvature * ds * ds - p.backbone_curvature * db * db;
    if (p.noise > 0) {
        Rng rng = substream(p.noise_seed, {fnv1a64(id.data(), id.size())});
        ap += p.noise * std::normal_distribution<double>(0.0, 1.0)(rng);
    }
    return std::clamp(ap, 0.0, 1.0);
}

inline double surrogate_ap(const DetectorArch& arch, const SurrogateParams& p, const InputSize& input = kVgaInput) {
    return surrogate_ap(arch_id(arch), detector_flops(arch, input), p);
}

class SyntheticSurrogate final : public Evaluator {
public:
    explicit SyntheticSurrogate(SurrogateParams p, InputSize input = kVgaInput) : p_(p), input_(input) {}
    double score(const std::string& id, const DetectorArch& arch) const override {
        return surrogate_ap(id, detector_flops(arch, input_), p_);
    }
    nlohmann::json describe() const override {
        return {{"kind", "surrogate"},
                {"shallow_opt", p_.shallow_opt},
                {"backbone_opt", p_.backbone_opt},
                {"shallow_curvature", p_.shallow_curvature},
                {"backbone_curvature", p_.backbone_curvature},
                {"peak", p_.peak},
                {"noise", p_.noise},
                {"noise_seed", p_.noise_seed}};
    }

private:
    SurrogateParams p_;
    InputSize input_;
};

/// Externally measured APs from `arch_id,ap`.
class CsvLookup final : public Evaluator {
public:
    explicit CsvLookup(std::unordered_map<std::string, double> scores, std::string source = {})
        : scores_(std::move(scores)), source_(std::move(source)) {}

    static CsvLookup parse(std::string_view text, std::string source = {}) {
        std::unordered_map<std::string, double> scores;
        detail::LineReader rd(text);
        bool header = true;
        while (auto line = rd.next()) {
            if (line->empty()) continue;
            if (header) {
                header = false;
                if (line->rfind("arch_id", 0) == 0) continue;
            }
            const auto comma = line->find(',');
            if (comma == std::string_view::npos) throw ParseError(rd.line(), "expected arch_id,ap");
            const std::string id(detail::trim(line->substr(0, comma)));
            const std::string val(detail::trim(line->substr(comma + 1)));
            double ap = 0;
            try {
                std::size_t used = 0;
                ap = std::stod(val, &used);
                if (used != val.size()) throw std::invalid_argument(val);
            } catch (const std::exception&) {
                throw ParseError(rd.line(), "ap '" + val + "' is not a number");
            }
            if (!(ap >= 0 && ap <= 1)) throw ParseError(rd.line(), "ap must lie in [0, 1]");
            scores[id] = ap;
        }
        return CsvLookup(std::move(scores), std::move(source));
    }

    static CsvLookup load(const std::filesystem::path& path) {
        try {
            return parse(read_text_file(path), path.string());
        } catch (const ParseError& e) {
            throw ParseError(e.line(), path.string() + ": " + e.what());
        }
    }

    double score(const std::string& id, const DetectorArch&) const override {
        auto it = scores_.find(id);
        if (it == scores_.end()) throw MissingScores({id});
        return it->second;
    }
    std::vector<std::string> missing(std::span<const ArchSample> samples) const override {
        std::vector<std::string> out;
        for (const auto& s : samples)
            if (!scores_.count(s.id)) out.push_back(s.id);
        return out;
    }
    nlohmann::json describe() const override { return {{"kind", "csv"}, {"scores_csv", source_}, {"entries", scores_.size()}}; }

private:
    std::unordered_map<std::string, double> scores_;
    std::string source_;
};

inline std::unique_ptr<Evaluator> make_evaluator(const EvaluatorConfig& c, const InputSize& input = kVgaInput) {
    if (c.kind == "constant") return std::make_unique<ConstantStub>(c.value);
    if (c.kind == "csv") return std::make_unique<CsvLookup>(CsvLookup::load(c.scores_csv));
    if (c.kind == "surrogate") return std::make_unique<SyntheticSurrogate>(c.surrogate, input);
    throw ConfigError("evaluator.kind", "expected surrogate|csv|constant");
}

/// Attaches scores in place. Fails up front, listing every id the evaluator lacks.
inline void score_population(std::vector<ArchSample>& samples, const Evaluator& eval, unsigned threads = 1) {
    if (auto miss = eval.missing(samples); !miss.empty()) throw MissingScores(std::move(miss));
    auto work = [&](std::size_t begin, std::size_t step) {
        for (std::size_t i = begin; i < samples.size(); i += step) {
            const double ap = eval.score(samples[i].id, samples[i].arch);
            if (!(ap >= 0 && ap <= 1)) throw DataError("score for " + samples[i].id + " outside [0, 1]");
            samples[i].ap = ap;
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, samples.size()))));
    if (n == 1) {
        work(0, 1);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < n; ++t)
            pool.emplace_back([&, t] {
                try {
                    work(t, n);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Highest ap; ties go to fewer total MACs, then the smaller id.
inline const ArchSample& select_best(std::span<const ArchSample> samples) {
    if (samples.empty()) throw DataError("cannot select from an empty population");
    const ArchSample* best = nullptr;
    for (const auto& s : samples) {
        if (!s.ap) throw MissingScores({s.id});
        if (!best) {
            best = &s;
            continue;
        }
        const double a = *s.ap, b = *best->ap;
        const Macs fa = s.flops.total_macs(), fb = best->flops.total_macs();
        if (a > b || (a == b && (fa < fb || (fa == fb && s.id < best->id)))) best = &s;
    }
    return *best;
}

struct RunRecord {
    std::string step;  // step1 | step2 | baseline
    RunConfig config;
    nlohmann::json evaluator;
    BlockKind block = BlockKind::BasicResidual;
    std::optional<BackboneRanges> constraint;  // step 2 only
    std::vector<ArchSample> population;
    PopulationStats stats;
    std::vector<BootstrapRange> ranges;
    ArchSample best;
    std::string started, finished;  // wall clock, kept out of JSON/CSV artifacts
};

namespace detail {

inline std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Stream tags keep the populations and bootstraps of different steps apart.
inline constexpr std::uint64_t kStep1Stream = 1, kStep2Stream = 2, kBaselineStream = 3, kBootstrapStream = 4;

inline RunRecord run_step(std::string step, const RunConfig& cfg, const Evaluator& eval,
                          std::optional<NeckHead> fixed, std::optional<BackboneRanges> ranges, std::uint64_t stream,
                          const std::vector<std::string>& components) {
    RunRecord rec;
    rec.started = utc_now();
    rec.step = std::move(step);
    rec.config = cfg;
    rec.evaluator = eval.describe();
    rec.constraint = ranges;
    PopulationSampler sampler(cfg.search_space, cfg.regime, cfg.input, std::move(fixed));
    rec.block = sampler.block_kind();
    PopulationOptions opt;
    opt.count = cfg.count;
    opt.attempt_factor = cfg.attempt_factor;
    opt.backbone_ranges = std::move(ranges);
    opt.threads = cfg.threads;
    Population pop = sampler.generate(substream(cfg.seed, {stream})(), opt);
    rec.population = std::move(pop.samples);
    rec.stats = pop.stats;
    score_population(rec.population, eval, cfg.threads);
    if (!components.empty())
        rec.ranges = range_report(rec.population, components, substream(cfg.seed, {kBootstrapStream, stream})(), cfg.bootstrap);
    rec.best = select_best(rec.population);
    rec.finished = utc_now();
    return rec;
}

}  // namespace detail

/// Backbone-only search with the neck and head held fixed.
inline RunRecord run_step1(const RunConfig& cfg, const Evaluator& eval) {
    NeckHead fixed = cfg.step1_fixed;
    fixed.head.depthwise = cfg.search_space.block.value_or(block_for_regime(cfg.regime.target_gmacs)) ==
                           BlockKind::DepthwiseSeparable;
    return detail::run_step("step1", cfg, eval, fixed, std::nullopt, detail::kStep1Stream, step1_components());
}

/// Whole-detector search with backbone stage ratios held inside the step-1 ranges.
inline RunRecord run_step2(const RunConfig& cfg, const std::vector<BootstrapRange>& step1_ranges, const Evaluator& eval) {
    return detail::run_step("step2", cfg, eval, std::nullopt, backbone_ranges_from(step1_ranges), detail::kStep2Stream,
                            step2_components());
}

inline RunRecord run_step2(const RunConfig& cfg, const RunRecord& step1, const Evaluator& eval) {
    if (step1.ranges.empty()) throw DataError("step-1 record has no ranges");
    return run_step2(cfg, step1.ranges, eval);
}

/// Unconstrained one-step search over the whole detector; the comparison point for the two-step search.
inline RunRecord run_baseline(const RunConfig& cfg, const Evaluator& eval) {
    return detail::run_step("baseline", cfg, eval, std::nullopt, std::nullopt, detail::kBaselineStream, {});
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const FlopsBreakdown& f) {
    nlohmann::json j = nlohmann::json::object();
    for (auto c : kComponents)
        j[std::string(component_name(c))] = {{"macs", f[c].macs}, {"params", f[c].params}};
    j["total_macs"] = f.total_macs();
    j["total_params"] = f.total_params();
    return j;
}

inline nlohmann::json to_json(const ComponentRatios& r) {
    return {{"stem", r.stages[0]}, {"C2", r.stages[1]},   {"C3", r.stages[2]}, {"C4", r.stages[3]},
            {"C5", r.stages[4]},   {"shallow", r.shallow}, {"deep", r.deep},    {"backbone", r.backbone},
            {"neck", r.neck},      {"head", r.head}};
}

inline nlohmann::json to_json(const ArchSample& s) {
    return {{"id", s.id},
            {"arch", to_json(s.arch)},
            {"flops", to_json(s.flops)},
            {"ratios", to_json(component_ratios(s.flops))},
            {"ap", s.ap ? nlohmann::json(*s.ap) : nlohmann::json(nullptr)}};
}

/// Rebuilds a sample, recomputing flops and checking the stored id.
inline ArchSample sample_from_json(const nlohmann::json& j, const InputSize& input = kVgaInput) {
    if (!j.is_object() || !j.contains("arch")) throw DataError("population record lacks 'arch'");
    DetectorArch arch;
    try {
        arch = arch_from_json(j.at("arch"));
    } catch (const ConfigError& e) {
        throw DataError(std::string("population record: ") + e.what());
    }
    ArchSample s = make_sample(arch, input);
    if (auto it = j.find("id"); it != j.end() && it->is_string() && it->get<std::string>() != s.id)
        throw DataError("population record id " + it->get<std::string>() + " does not match its arch (" + s.id + ")");
    if (auto it = j.find("ap"); it != j.end() && !it->is_null()) {
        if (!it->is_number()) throw DataError("population record " + s.id + ": ap is not a number");
        s.ap = it->get<double>();
    }
    return s;
}

inline void write_population_jsonl(std::ostream& os, std::span<const ArchSample> samples) {
    for (const auto& s : samples) os << to_json(s).dump() << '\n';
}

inline std::vector<ArchSample> read_population_jsonl(std::string_view text, const InputSize& input = kVgaInput) {
    std::vector<ArchSample> out;
    detail::LineReader rd(text);
    while (auto line = rd.next()) {
        if (line->empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(*line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(rd.line(), e.what());
        }
        try {
            out.push_back(sample_from_json(j, input));
        } catch (const DataError& e) {
            throw ParseError(rd.line(), e.what());
        }
    }
    return out;
}

inline nlohmann::json ranges_to_json(const std::vector<BootstrapRange>& ranges) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : ranges) arr.push_back(to_json(r));
    return arr;
}

inline std::vector<BootstrapRange> ranges_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw DataError("ranges must be a JSON array");
    std::vector<BootstrapRange> out;
    for (const auto& r : j) out.push_back(range_from_json(r));
    return out;
}

inline nlohmann::json run_manifest(const RunRecord& rec) {
    nlohmann::json j = {{"step", rec.step},
                        {"seed", rec.config.seed},
                        {"config", to_json(rec.config)},
                        {"evaluator", rec.evaluator},
                        {"block", block_kind_name(rec.block)},
                        {"population",
                         {{"file", "population.jsonl"},
                          {"count", rec.population.size()},
                          {"attempts", rec.stats.attempts},
                          {"proposal_mass", rec.stats.proposal_mass}}}};
    if (rec.constraint) {
        nlohmann::json c = nlohmann::json::object();
        static constexpr std::array<const char*, 5> kStages = {"stem", "C2", "C3", "C4", "C5"};
        for (std::size_t i = 0; i < 5; ++i) c[kStages[i]] = {(*rec.constraint)[i].low, (*rec.constraint)[i].high};
        j["backbone_constraint"] = c;
    }
    return j;
}

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    out << text;
    if (!out) throw DataError("write failed for " + p.string());
}

}  // namespace detail

/// Writes config.json, population.jsonl, ranges.json, ranges.csv, best.json
/// and run.log. Refuses to overwrite an existing run.
inline void write_run(const std::filesystem::path& dir, const RunRecord& rec) {
    namespace fs = std::filesystem;
    if (fs::exists(dir / "population.jsonl"))
        throw ConfigError("output_dir", dir.string() + " already holds a run; choose a new directory");
    fs::create_directories(dir);
    detail::write_file(dir / "config.json", run_manifest(rec).dump(2) + "\n");
    std::ostringstream pop;
    write_population_jsonl(pop, rec.population);
    detail::write_file(dir / "population.jsonl", pop.str());
    detail::write_file(dir / "ranges.json", ranges_to_json(rec.ranges).dump(2) + "\n");
    std::ostringstream csv;
    write_ranges_csv(csv, rec.ranges);
    detail::write_file(dir / "ranges.csv", csv.str());
    detail::write_file(dir / "best.json", to_json(rec.best).dump(2) + "\n");
    detail::write_file(dir / "run.log", "started " + rec.started + "\nfinished " + rec.finished + "\n");
}

/// Loads a run directory written by write_run.
inline RunRecord read_run(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError(dir.string() + " is not a run directory");
    for (const char* f : {"config.json", "population.jsonl", "ranges.json"})
        if (!fs::exists(dir / f)) throw DataError(dir.string() + " lacks " + f);
    RunRecord rec;
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(dir / "config.json"));
        rec.step = manifest.at("step").get<std::string>();
        rec.evaluator = manifest.at("evaluator");
        rec.block = parse_block_kind(manifest.at("block").get<std::string>()).value_or(BlockKind::BasicResidual);
        rec.stats.attempts = manifest.at("population").at("attempts").get<std::size_t>();
        rec.stats.proposal_mass = manifest.at("population").at("proposal_mass").get<double>();
        rec.ranges = ranges_from_json(nlohmann::json::parse(read_text_file(dir / "ranges.json")));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(dir.string() + ": malformed run files: " + e.what());
    }
    try {
        rec.config = run_config_from_json(manifest.at("config"));
    } catch (const ConfigError& e) {
        throw DataError(dir.string() + "/config.json: " + e.what());
    }
    if (auto it = manifest.find("backbone_constraint"); it != manifest.end()) {
        BackboneRanges c;
        static constexpr std::array<const char*, 5> kStages = {"stem", "C2", "C3", "C4", "C5"};
        for (std::size_t i = 0; i < 5; ++i) c[i] = {it->at(kStages[i]).at(0).get<double>(), it->at(kStages[i]).at(1).get<double>()};
        rec.constraint = c;
    }
    rec.population = read_population_jsonl(read_text_file(dir / "population.jsonl"), rec.config.input);
    rec.stats.accepted = rec.population.size();
    if (!rec.population.empty() && std::all_of(rec.population.begin(), rec.population.end(), [](auto& s) { return s.ap.has_value(); }))
        rec.best = select_best(rec.population);
    return rec;
}

}  // namespace redist
