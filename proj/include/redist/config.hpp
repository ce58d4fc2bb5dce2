#pragma once

// Run configuration. Every section is optional; unknown keys are rejected
// with the full field path.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "redist/anchors.hpp"
#include "redist/arch.hpp"
#include "redist/bootstrap.hpp"
#include "redist/errors.hpp"
#include "redist/search_space.hpp"

namespace redist {

struct SurrogateParams {
    double shallow_opt = 0.8;   // shallow (stem+C2+C3) share of the backbone at the optimum
    double backbone_opt = 0.75; // backbone share of the detector at the optimum
    double shallow_curvature = 1.0;
    double backbone_curvature = 1.0;
    double peak = 0.9;
    double noise = 0.0;          // standard deviation
    std::uint64_t noise_seed = 0;
};

struct EvaluatorConfig {
    std::string kind = "surrogate";  // surrogate | csv | constant
    std::string scores_csv;
    double value = 0.5;
    SurrogateParams surrogate;
};

struct DatasetConfig {
    std::string gt_file;
    std::string image_root;
    std::string sizes_csv;
    bool keep_invalid = false;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "run";
    InputSize input = kVgaInput;
    FlopRegime regime;
    SearchSpaceSpec search_space;
    std::size_t count = 320;
    std::size_t attempt_factor = 10000;
    NeckHead step1_fixed{{32}, {96, 2, false}};
    BootstrapParams bootstrap;
    EvaluatorConfig evaluator;
    DatasetConfig dataset;
    CropPolicy crop = CropPolicy::baseline();
    std::size_t epochs = 1;
    int atss_k = 9;
    bool raw_candidates = false;
    std::vector<double> thresholds = {32, 16, 8};
    int long_edge = 640;
    unsigned threads = 1;
};

namespace detail {

inline double as_double(const nlohmann::json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    return v.get<double>();
}

inline std::uint64_t as_u64(const nlohmann::json& v, const std::string& path) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw ConfigError(path, "expected a non-negative integer");
    return v.get<std::uint64_t>();
}

inline bool as_bool(const nlohmann::json& v, const std::string& path) {
    if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
    return v.get<bool>();
}

inline std::string as_string(const nlohmann::json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path, "expected a string");
    return v.get<std::string>();
}

inline std::vector<double> as_doubles(const nlohmann::json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_double(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

template <class F>
void if_key(const nlohmann::json& obj, const char* key, F&& f) {
    if (auto it = obj.find(key); it != obj.end()) f(*it);
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    using namespace detail;
    RunConfig c;
    reject_unknown(j, "", {"seed", "output_dir", "input", "regime", "search_space", "population", "step1", "bootstrap",
                           "evaluator", "dataset", "crop", "anchor_stats", "scale_stats", "threads"});
    if_key(j, "seed", [&](auto& v) { c.seed = as_u64(v, "seed"); });
    if_key(j, "output_dir", [&](auto& v) { c.output_dir = as_string(v, "output_dir"); });
    if_key(j, "threads", [&](auto& v) { c.threads = static_cast<unsigned>(as_u64(v, "threads")); });
    if_key(j, "input", [&](auto& v) {
        reject_unknown(v, "input", {"width", "height"});
        if_key(v, "width", [&](auto& x) { c.input.width = as_int(x, "input.width"); });
        if_key(v, "height", [&](auto& x) { c.input.height = as_int(x, "input.height"); });
        validate_input(c.input);
    });
    if_key(j, "regime", [&](auto& v) {
        reject_unknown(v, "regime", {"target_gflops", "band"});
        if_key(v, "target_gflops", [&](auto& x) { c.regime.target_gmacs = as_double(x, "regime.target_gflops"); });
        if_key(v, "band", [&](auto& x) { c.regime.band = as_double(x, "regime.band"); });
    });
    c.regime.validate();
    if_key(j, "search_space", [&](auto& v) {
        const std::string p = "search_space";
        reject_unknown(v, p, {"d_max", "w_max", "w_step", "n_max", "h_max", "m_max", "monotone_widths", "block"});
        auto& lim = c.search_space.limits;
        if_key(v, "d_max", [&](auto& x) { lim.d_max = as_int(x, p + ".d_max"); });
        if_key(v, "w_max", [&](auto& x) { lim.w_max = as_int(x, p + ".w_max"); });
        if_key(v, "w_step", [&](auto& x) { lim.w_step = as_int(x, p + ".w_step"); });
        if_key(v, "n_max", [&](auto& x) { lim.n_max = as_int(x, p + ".n_max"); });
        if_key(v, "h_max", [&](auto& x) { lim.h_max = as_int(x, p + ".h_max"); });
        if_key(v, "m_max", [&](auto& x) { lim.m_max = as_int(x, p + ".m_max"); });
        if_key(v, "monotone_widths", [&](auto& x) { c.search_space.monotone_widths = as_bool(x, p + ".monotone_widths"); });
        if_key(v, "block", [&](auto& x) {
            auto k = parse_block_kind(as_string(x, p + ".block"));
            if (!k) throw ConfigError(p + ".block", "expected basic|bottleneck|depthwise");
            c.search_space.block = *k;
        });
        if (lim.w_step <= 0 || lim.w_max < lim.w_step || lim.d_max < 1 || lim.m_max < 1 || lim.n_max < lim.w_step ||
            lim.h_max < lim.w_step)
            throw ConfigError(p, "limits must be positive with maxima >= w_step");
    });
    if_key(j, "population", [&](auto& v) {
        reject_unknown(v, "population", {"count", "attempt_factor"});
        if_key(v, "count", [&](auto& x) { c.count = as_u64(x, "population.count"); });
        if_key(v, "attempt_factor", [&](auto& x) { c.attempt_factor = as_u64(x, "population.attempt_factor"); });
        if (c.count == 0) throw ConfigError("population.count", "must be > 0");
        if (c.attempt_factor == 0) throw ConfigError("population.attempt_factor", "must be > 0");
    });
    if_key(j, "step1", [&](auto& v) {
        reject_unknown(v, "step1", {"n", "h", "m"});
        if_key(v, "n", [&](auto& x) { c.step1_fixed.neck.channels = as_int(x, "step1.n"); });
        if_key(v, "h", [&](auto& x) { c.step1_fixed.head.channels = as_int(x, "step1.h"); });
        if_key(v, "m", [&](auto& x) { c.step1_fixed.head.depth = as_int(x, "step1.m"); });
    });
    if_key(j, "bootstrap", [&](auto& v) {
        reject_unknown(v, "bootstrap", {"replicates", "subsample", "confidence"});
        if_key(v, "replicates", [&](auto& x) { c.bootstrap.replicates = as_u64(x, "bootstrap.replicates"); });
        if_key(v, "subsample", [&](auto& x) { c.bootstrap.subsample_frac = as_double(x, "bootstrap.subsample"); });
        if_key(v, "confidence", [&](auto& x) { c.bootstrap.confidence = as_double(x, "bootstrap.confidence"); });
    });
    c.bootstrap.validate();
    if_key(j, "evaluator", [&](auto& v) {
        reject_unknown(v, "evaluator", {"kind", "scores_csv", "value", "surrogate"});
        if_key(v, "kind", [&](auto& x) { c.evaluator.kind = as_string(x, "evaluator.kind"); });
        if (c.evaluator.kind != "surrogate" && c.evaluator.kind != "csv" && c.evaluator.kind != "constant")
            throw ConfigError("evaluator.kind", "expected surrogate|csv|constant");
        if_key(v, "scores_csv", [&](auto& x) { c.evaluator.scores_csv = as_string(x, "evaluator.scores_csv"); });
        if_key(v, "value", [&](auto& x) { c.evaluator.value = as_double(x, "evaluator.value"); });
        if_key(v, "surrogate", [&](auto& s) {
            const std::string p = "evaluator.surrogate";
            auto& sp = c.evaluator.surrogate;
            reject_unknown(s, p, {"shallow_opt", "backbone_opt", "shallow_curvature", "backbone_curvature", "peak",
                                  "noise", "noise_seed"});
            if_key(s, "shallow_opt", [&](auto& x) { sp.shallow_opt = as_double(x, p + ".shallow_opt"); });
            if_key(s, "backbone_opt", [&](auto& x) { sp.backbone_opt = as_double(x, p + ".backbone_opt"); });
            if_key(s, "shallow_curvature", [&](auto& x) { sp.shallow_curvature = as_double(x, p + ".shallow_curvature"); });
            if_key(s, "backbone_curvature", [&](auto& x) { sp.backbone_curvature = as_double(x, p + ".backbone_curvature"); });
            if_key(s, "peak", [&](auto& x) { sp.peak = as_double(x, p + ".peak"); });
            if_key(s, "noise", [&](auto& x) { sp.noise = as_double(x, p + ".noise"); });
            if_key(s, "noise_seed", [&](auto& x) { sp.noise_seed = as_u64(x, p + ".noise_seed"); });
            if (sp.noise < 0) throw ConfigError(p + ".noise", "must be >= 0");
        });
        if (c.evaluator.kind == "csv" && c.evaluator.scores_csv.empty())
            throw ConfigError("evaluator.scores_csv", "required when kind is csv");
    });
    if_key(j, "dataset", [&](auto& v) {
        reject_unknown(v, "dataset", {"gt_file", "image_root", "sizes_csv", "keep_invalid"});
        if_key(v, "gt_file", [&](auto& x) { c.dataset.gt_file = as_string(x, "dataset.gt_file"); });
        if_key(v, "image_root", [&](auto& x) { c.dataset.image_root = as_string(x, "dataset.image_root"); });
        if_key(v, "sizes_csv", [&](auto& x) { c.dataset.sizes_csv = as_string(x, "dataset.sizes_csv"); });
        if_key(v, "keep_invalid", [&](auto& x) { c.dataset.keep_invalid = as_bool(x, "dataset.keep_invalid"); });
    });
    if_key(j, "crop", [&](auto& v) {
        reject_unknown(v, "crop", {"policy", "scale_choices", "output_size"});
        if_key(v, "policy", [&](auto& x) { c.crop = crop_policy_named(as_string(x, "crop.policy")); });
        if_key(v, "scale_choices", [&](auto& x) {
            auto choices = as_doubles(x, "crop.scale_choices");
            if (choices != c.crop.scale_choices) {
                c.crop.scale_choices = std::move(choices);
                c.crop.name = "custom";
            }
        });
        if_key(v, "output_size", [&](auto& x) { c.crop.output_size = as_int(x, "crop.output_size"); });
        c.crop.validate();
    });
    if_key(j, "anchor_stats", [&](auto& v) {
        reject_unknown(v, "anchor_stats", {"epochs", "k", "raw_candidates"});
        if_key(v, "epochs", [&](auto& x) { c.epochs = as_u64(x, "anchor_stats.epochs"); });
        if_key(v, "k", [&](auto& x) { c.atss_k = as_int(x, "anchor_stats.k"); });
        if_key(v, "raw_candidates", [&](auto& x) { c.raw_candidates = as_bool(x, "anchor_stats.raw_candidates"); });
        if (c.atss_k < 1) throw ConfigError("anchor_stats.k", "must be >= 1");
    });
    if_key(j, "scale_stats", [&](auto& v) {
        reject_unknown(v, "scale_stats", {"thresholds", "long_edge"});
        if_key(v, "thresholds", [&](auto& x) { c.thresholds = as_doubles(x, "scale_stats.thresholds"); });
        if_key(v, "long_edge", [&](auto& x) { c.long_edge = as_int(x, "scale_stats.long_edge"); });
        if (c.long_edge <= 0) throw ConfigError("scale_stats.long_edge", "must be > 0");
    });
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("", path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

/// Fully expanded snapshot; run_config_from_json(to_json(c)) reproduces `c`.
inline nlohmann::json to_json(const RunConfig& c) {
    const auto& lim = c.search_space.limits;
    nlohmann::json ss = {{"d_max", lim.d_max}, {"w_max", lim.w_max}, {"w_step", lim.w_step}, {"n_max", lim.n_max},
                         {"h_max", lim.h_max}, {"m_max", lim.m_max}, {"monotone_widths", c.search_space.monotone_widths}};
    if (c.search_space.block) ss["block"] = block_kind_name(*c.search_space.block);
    const auto& sp = c.evaluator.surrogate;
    nlohmann::json crop = {{"scale_choices", c.crop.scale_choices}, {"output_size", c.crop.output_size}};
    if (c.crop.name == "baseline" || c.crop.name == "sr") crop["policy"] = c.crop.name;
    return {
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"threads", c.threads},
        {"input", {{"width", c.input.width}, {"height", c.input.height}}},
        {"regime", {{"target_gflops", c.regime.target_gmacs}, {"band", c.regime.band}}},
        {"search_space", ss},
        {"population", {{"count", c.count}, {"attempt_factor", c.attempt_factor}}},
        {"step1", {{"n", c.step1_fixed.neck.channels}, {"h", c.step1_fixed.head.channels}, {"m", c.step1_fixed.head.depth}}},
        {"bootstrap",
         {{"replicates", c.bootstrap.replicates}, {"subsample", c.bootstrap.subsample_frac}, {"confidence", c.bootstrap.confidence}}},
        {"evaluator",
         {{"kind", c.evaluator.kind},
          {"scores_csv", c.evaluator.scores_csv},
          {"value", c.evaluator.value},
          {"surrogate",
           {{"shallow_opt", sp.shallow_opt}, {"backbone_opt", sp.backbone_opt}, {"shallow_curvature", sp.shallow_curvature},
            {"backbone_curvature", sp.backbone_curvature}, {"peak", sp.peak}, {"noise", sp.noise},
            {"noise_seed", sp.noise_seed}}}}},
        {"dataset",
         {{"gt_file", c.dataset.gt_file}, {"image_root", c.dataset.image_root}, {"sizes_csv", c.dataset.sizes_csv},
          {"keep_invalid", c.dataset.keep_invalid}}},
        {"crop", crop},
        {"anchor_stats", {{"epochs", c.epochs}, {"k", c.atss_k}, {"raw_candidates", c.raw_candidates}}},
        {"scale_stats", {{"thresholds", c.thresholds}, {"long_edge", c.long_edge}}},
    };
}

/// Relative dataset paths are taken from `WIDERFACE_ROOT` when it is set.
inline std::filesystem::path dataset_path(const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_relative()) {
        if (const char* root = std::getenv("WIDERFACE_ROOT"); root && *root) return std::filesystem::path(root) / path;
    }
    return path;
}

}  // namespace redist
