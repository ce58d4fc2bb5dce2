// redist: flops accounting, dataset scale statistics, anchor assignment
// statistics and the two-step computation redistribution search.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "redist/redist.hpp"

namespace fs = std::filesystem;
using namespace redist;

namespace {

constexpr int kExitOk = 0, kExitUsage = 1, kExitData = 2;

struct Common {
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
};

std::vector<double> parse_number_list(const std::string& text, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(flag, "'" + item + "' is not a number");
        }
    }
    return out;
}

InputSize parse_input(const std::string& text) {
    const auto x = text.find('x');
    if (x == std::string::npos) throw ConfigError("--input", "expected WIDTHxHEIGHT");
    InputSize in;
    try {
        in.width = std::stoi(text.substr(0, x));
        in.height = std::stoi(text.substr(x + 1));
    } catch (const std::exception&) {
        throw ConfigError("--input", "expected WIDTHxHEIGHT");
    }
    validate_input(in);
    return in;
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    out << text;
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

struct FlopsArgs {
    std::string arch_file, baseline, input = "640x480", csv, layers, svg;
    bool json = false;
};

int cmd_flops(const FlopsArgs& a) {
    DetectorArch arch;
    std::string label;
    if (!a.baseline.empty()) {
        auto b = find_baseline(a.baseline);
        if (!b) {
            std::string names;
            for (const auto& n : baseline_archs()) names += std::string(names.empty() ? "" : ", ") + std::string(n.name);
            throw ConfigError("--baseline", "unknown baseline '" + a.baseline + "' (known: " + names + ")");
        }
        arch = *b;
        label = a.baseline;
    } else if (!a.arch_file.empty()) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_text_file(a.arch_file));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("", a.arch_file + ": " + e.what());
        } catch (const DataError& e) {
            throw ConfigError("", e.what());
        }
        arch = arch_from_json(j);
        label = a.arch_file;
    } else {
        throw ConfigError("", "give an arch JSON file or --baseline NAME");
    }
    const InputSize input = parse_input(a.input);
    const FlopsBreakdown fb = detector_flops(arch, input);
    const ComponentRatios r = component_ratios(fb);

    if (a.json) {
        std::cout << nlohmann::json{{"arch", to_json(arch)}, {"id", arch_id(arch)}, {"input", {input.width, input.height}},
                                    {"flops", to_json(fb)}, {"ratios", to_json(r)}}
                         .dump(2)
                  << "\n";
    } else {
        std::printf("%s  (%dx%d, id %s)\n", label.c_str(), input.width, input.height, arch_id(arch).c_str());
        std::printf("%-10s %12s %12s %8s\n", "component", "GMACs", "params(M)", "share");
        for (std::size_t i = 0; i < kNumComponents; ++i)
            std::printf("%-10s %12.4f %12.4f %7.1f%%\n", std::string(component_name(kComponents[i])).c_str(),
                        fb.parts[i].macs / 1e9, fb.parts[i].params / 1e6, 100 * fb.ratio(kComponents[i]));
        std::printf("%-10s %12.4f %12.4f %7.1f%%\n", "total", fb.total_macs() / 1e9, fb.total_params() / 1e6, 100.0);
        std::printf("backbone %.1f%%  neck %.1f%%  head %.1f%%  shallow %.1f%%  deep %.1f%% (of backbone)\n",
                    100 * r.backbone, 100 * r.neck, 100 * r.head, 100 * r.shallow, 100 * r.deep);
    }
    if (!a.csv.empty()) {
        std::ostringstream os;
        os << "component,macs,params,ratio\n";
        for (std::size_t i = 0; i < kNumComponents; ++i)
            os << component_name(kComponents[i]) << ',' << fb.parts[i].macs << ',' << fb.parts[i].params << ','
               << nlohmann::json(fb.ratio(kComponents[i])).dump() << '\n';
        os << "total," << fb.total_macs() << ',' << fb.total_params() << ",1\n";
        write_text(a.csv, os.str());
    }
    if (!a.layers.empty()) {
        std::ostringstream os;
        write_layers_csv(os, list_layers(arch, input));
        write_text(a.layers, os.str());
    }
    if (!a.svg.empty()) write_text(a.svg, svg_stacked_bar(fb, label));
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct DatasetArgs {
    std::string config, gt, images, sizes, out = "stats";
    bool keep_invalid = false;
};

RunConfig dataset_config(const DatasetArgs& a) {
    RunConfig c = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    if (!a.gt.empty()) c.dataset.gt_file = a.gt;
    if (!a.images.empty()) c.dataset.image_root = a.images;
    if (!a.sizes.empty()) c.dataset.sizes_csv = a.sizes;
    if (a.keep_invalid) c.dataset.keep_invalid = true;
    if (c.dataset.gt_file.empty()) throw ConfigError("dataset.gt_file", "an annotation file is required (--gt)");
    return c;
}

/// Parses and resolves the dataset; writes a sizes sidecar next to the outputs.
FaceDataset load_dataset(const DatasetConfig& d, const fs::path& out, unsigned threads) {
    std::vector<ParseWarning> warnings;
    FaceDataset ds = load_widerface_gt(dataset_path(d.gt_file), "", &warnings);
    for (std::size_t i = 0; i < warnings.size() && i < 10; ++i)
        std::cerr << "warning: line " << warnings[i].line << ": " << warnings[i].message << "\n";
    if (warnings.size() > 10) std::cerr << "warning: " << warnings.size() - 10 << " more attribute warnings\n";
    SizeTable sizes;
    if (!d.sizes_csv.empty()) sizes = parse_sizes_csv(read_text_file(dataset_path(d.sizes_csv)));
    std::optional<fs::path> root;
    if (!d.image_root.empty()) root = dataset_path(d.image_root);
    ds = resolve_dimensions(std::move(ds), root, d.sizes_csv.empty() ? nullptr : &sizes, threads);
    write_text(out / "sizes.csv", to_sizes_csv(ds));
    return ds;
}

struct ScaleArgs : DatasetArgs {
    std::optional<std::string> thresholds;
    int long_edge = 0;
};

int cmd_scale_stats(const ScaleArgs& a, const Common& common) {
    RunConfig c = dataset_config(a);
    if (a.thresholds) c.thresholds = parse_number_list(*a.thresholds, "--thresholds");
    if (a.long_edge > 0) c.long_edge = a.long_edge;
    const fs::path out = a.out;
    const FaceDataset ds = load_dataset(c.dataset, out, common.threads);
    FaceFilter filter;
    filter.drop_invalid = !c.dataset.keep_invalid;

    std::vector<double> thresholds = c.thresholds;
    const bool curve = thresholds.empty();
    if (curve)
        for (int t = 1; t <= c.long_edge; ++t) thresholds.push_back(t);
    const auto fractions = face_scale_cdf(ds, thresholds, c.long_edge, filter);

    std::ostringstream csv;
    write_cdf_csv(csv, thresholds, fractions);
    write_text(out / "cdf.csv", csv.str());
    write_json(out / "cdf.json", {{"thresholds", thresholds},
                                  {"fractions", fractions},
                                  {"images", ds.images.size()},
                                  {"faces", face_scales(ds, c.long_edge, filter).size()},
                                  {"long_edge", c.long_edge},
                                  {"drop_invalid", filter.drop_invalid}});
    write_text(out / "cdf.svg", svg_curve(thresholds, fractions, "cumulative face scale", "scale (px)", "fraction"));
    if (!curve)
        for (std::size_t i = 0; i < thresholds.size(); ++i)
            std::printf("scale < %g: %.4f\n", thresholds[i], fractions[i]);
    else
        std::printf("wrote %zu-point curve to %s\n", thresholds.size(), (out / "cdf.csv").c_str());
    return kExitOk;
}

struct AnchorArgs : DatasetArgs {
    std::string policy;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    bool raw = false;
};

int cmd_anchor_stats(const AnchorArgs& a, const Common& common) {
    RunConfig c = dataset_config(a);
    if (!a.policy.empty()) c.crop = crop_policy_named(a.policy);
    if (a.seed) c.seed = *a.seed;
    if (a.epochs) c.epochs = *a.epochs;
    if (a.raw) c.raw_candidates = true;
    const fs::path out = a.out;
    const FaceDataset ds = c.epochs ? load_dataset(c.dataset, out, common.threads) : FaceDataset{};
    EpochOptions opt;
    opt.epochs = c.epochs;
    opt.atss.k = c.atss_k;
    opt.filter.drop_invalid = !c.dataset.keep_invalid;
    opt.threads = common.threads;
    const MatchStats m = epoch_positive_stats(ds, c.crop, c.seed, opt);

    nlohmann::json j = to_json(m);
    j["policy"] = c.crop.name;
    j["scale_choices"] = c.crop.scale_choices;
    j["output_size"] = c.crop.output_size;
    j["crop_rule"] = kCropOriginRule;
    j["seed"] = c.seed;
    j["k"] = c.atss_k;
    j["drop_invalid"] = opt.filter.drop_invalid;
    write_json(out / "match_stats.json", j);
    std::ostringstream csv;
    write_match_stats_csv(csv, m, c.raw_candidates);
    write_text(out / "match_stats.csv", csv.str());
    write_text(out / "positives.svg", svg_match_stats(m, "positive anchors (" + c.crop.name + ")"));
    std::printf("%s: %llu images, %llu faces, epochs %llu\n", c.crop.name.c_str(), (unsigned long long)m.images,
                (unsigned long long)m.faces, (unsigned long long)m.epochs);
    for (std::size_t i = 0; i < kAnchorScales.size(); ++i)
        std::printf("  anchor %3d: %llu positives\n", kAnchorScales[i], (unsigned long long)m.positives[i]);
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct SearchArgs {
    std::string config, out, step1_dir, scores;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> count;
    std::optional<double> noise;
};

RunConfig search_config(const SearchArgs& a, const Common& common) {
    RunConfig c = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    if (a.seed) c.seed = *a.seed;
    if (a.count) {
        if (*a.count == 0) throw ConfigError("--count", "must be > 0");
        c.count = *a.count;
    }
    if (!a.out.empty()) c.output_dir = a.out;
    if (!a.scores.empty()) {
        c.evaluator.kind = "csv";
        c.evaluator.scores_csv = a.scores;
    }
    if (a.noise) {
        if (*a.noise < 0) throw ConfigError("--surrogate-noise", "must be >= 0");
        c.evaluator.kind = "surrogate";
        c.evaluator.surrogate.noise = *a.noise;
    }
    c.threads = common.threads;
    return c;
}

void print_run(const RunRecord& rec, const fs::path& dir) {
    std::printf("%s: %zu samples from %zu proposals -> %s\n", rec.step.c_str(), rec.population.size(), rec.stats.attempts,
                dir.c_str());
    for (const auto& r : rec.ranges)
        std::printf("  %-9s (%5.1f%%, %5.1f%%)%s\n", r.component.c_str(), 100 * r.low, 100 * r.high,
                    r.degenerate ? "  degenerate" : "");
    std::printf("  best %s ap %.4f\n", rec.best.id.c_str(), rec.best.ap.value_or(0));
}

int cmd_search(const std::string& step, const SearchArgs& a, const Common& common) {
    const RunConfig c = search_config(a, common);
    const fs::path dir = c.output_dir;
    if (fs::exists(dir / "population.jsonl"))
        throw ConfigError("output_dir", dir.string() + " already holds a run; choose a new directory");
    const auto eval = make_evaluator(c.evaluator, c.input);
    RunRecord rec;
    if (step == "step1") {
        rec = run_step1(c, *eval);
    } else {
        const RunRecord s1 = read_run(a.step1_dir);
        if (s1.step != "step1") throw DataError(a.step1_dir + " holds a " + s1.step + " run, not step1");
        rec = run_step2(c, s1, *eval);
    }
    write_run(dir, rec);
    render_report(dir);
    print_run(rec, dir);
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct BootstrapArgs {
    std::string population, scores, components = "all", out = "bootstrap", input = "640x480";
    std::uint64_t seed = 0;
    std::optional<std::size_t> replicates;
    std::optional<double> subsample, confidence;
};

int cmd_bootstrap(const BootstrapArgs& a) {
    const InputSize input = parse_input(a.input);
    auto pop = read_population_jsonl(read_text_file(a.population), input);
    if (!a.scores.empty()) score_population(pop, CsvLookup::load(a.scores));
    std::vector<std::string> components;
    if (a.components == "step1") {
        components = step1_components();
    } else if (a.components == "step2") {
        components = step2_components();
    } else if (a.components == "all") {
        components = step1_components();
        for (const auto& c : step2_components()) components.push_back(c);
    } else {
        std::stringstream ss(a.components);
        std::string item;
        static const std::vector<std::string> known = {"stem", "C2",   "C3",       "C4",   "C5",
                                                       "shallow", "deep", "backbone", "neck", "head"};
        while (std::getline(ss, item, ','))
            if (!item.empty()) {
                if (std::find(known.begin(), known.end(), item) == known.end())
                    throw ConfigError("--components", "unknown component '" + item + "'");
                components.push_back(item);
            }
    }
    BootstrapParams p;
    if (a.replicates) p.replicates = *a.replicates;
    if (a.subsample) p.subsample_frac = *a.subsample;
    if (a.confidence) p.confidence = *a.confidence;
    p.validate();
    const auto ranges = range_report(pop, components, a.seed, p);
    const fs::path out = a.out;
    write_json(out / "ranges.json", ranges_to_json(ranges));
    std::ostringstream csv;
    write_ranges_csv(csv, ranges);
    write_text(out / "ranges.csv", csv.str());
    for (const auto& r : ranges)
        std::printf("%-9s (%5.1f%%, %5.1f%%)%s\n", r.component.c_str(), 100 * r.low, 100 * r.high,
                    r.degenerate ? "  degenerate" : "");
    return kExitOk;
}

int cmd_report(const std::string& run_dir) {
    for (const auto& p : render_report(run_dir)) std::printf("%s\n", (fs::path(run_dir) / p).c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Computation and sample redistribution analysis for face detectors"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--threads", common.threads, "Worker threads (default: available parallelism)")
        ->check(CLI::PositiveNumber);

    FlopsArgs fa;
    auto* flops = app.add_subcommand("flops", "MACs and parameters per component");
    flops->add_option("arch", fa.arch_file, "Architecture JSON file");
    flops->add_option("--baseline", fa.baseline, "Built-in baseline (resnet-2.5gf, resnet-10gf, resnet-34gf, mobilenet-0.5gf)");
    flops->add_option("--input", fa.input, "Input WIDTHxHEIGHT")->capture_default_str();
    flops->add_option("--csv", fa.csv, "Write per-component CSV");
    flops->add_option("--layers", fa.layers, "Write per-layer CSV");
    flops->add_option("--svg", fa.svg, "Write stacked-bar SVG");
    flops->add_flag("--json", fa.json, "Print JSON instead of a table");

    auto add_dataset = [](CLI::App* sub, DatasetArgs& d) {
        sub->add_option("--config", d.config, "Run config JSON");
        sub->add_option("--gt", d.gt, "wider_face_*_bbx_gt.txt (relative paths resolve under $WIDERFACE_ROOT)");
        sub->add_option("--images", d.images, "Image root for header probing");
        sub->add_option("--sizes", d.sizes, "Sizes CSV path,width,height (takes precedence over probing)");
        sub->add_option("--out", d.out, "Output directory")->capture_default_str();
        sub->add_flag("--keep-invalid", d.keep_invalid, "Keep faces flagged invalid");
    };

    ScaleArgs sa;
    auto* scale = app.add_subcommand("scale-stats", "Cumulative face scale distribution at the VGA bound");
    add_dataset(scale, sa);
    scale->add_option("--thresholds", sa.thresholds, "Comma-separated thresholds; empty for the full curve");
    scale->add_option("--long-edge", sa.long_edge, "Long edge after resizing (default 640)");

    AnchorArgs aa;
    auto* anchor = app.add_subcommand("anchor-stats", "Positive anchors per scale over simulated epochs");
    add_dataset(anchor, aa);
    anchor->add_option("--policy", aa.policy, "Crop policy")->check(CLI::IsMember({"baseline", "sr"}));
    anchor->add_option("--seed", aa.seed, "Root seed");
    anchor->add_option("--epochs", aa.epochs, "Epochs to simulate");
    anchor->add_flag("--raw", aa.raw, "Also report candidates before cross-face deduplication");

    SearchArgs s1a, s2a;
    auto* search = app.add_subcommand("search", "Two-step computation redistribution search");
    search->require_subcommand(1);
    auto add_search = [](CLI::App* sub, SearchArgs& s) {
        sub->add_option("--config", s.config, "Run config JSON");
        sub->add_option("--out", s.out, "Run directory (overrides output_dir)");
        sub->add_option("--seed", s.seed, "Root seed");
        sub->add_option("--count", s.count, "Population size");
        sub->add_option("--scores", s.scores, "Scores CSV arch_id,ap");
        sub->add_option("--surrogate-noise", s.noise, "Use the synthetic surrogate with this noise level");
    };
    auto* step1 = search->add_subcommand("step1", "Backbone-only search with fixed neck and head");
    add_search(step1, s1a);
    auto* step2 = search->add_subcommand("step2", "Whole-detector search inside step-1 ranges");
    add_search(step2, s2a);
    step2->add_option("--step1", s2a.step1_dir, "Step-1 run directory")->required();

    BootstrapArgs ba;
    auto* boot = app.add_subcommand("bootstrap", "Empirical bootstrap ranges for a scored population");
    boot->add_option("--population", ba.population, "population.jsonl")->required();
    boot->add_option("--scores", ba.scores, "Scores CSV arch_id,ap");
    boot->add_option("--components", ba.components, "step1, step2, all, or a comma list")->capture_default_str();
    boot->add_option("--seed", ba.seed, "Root seed")->capture_default_str();
    boot->add_option("--replicates", ba.replicates, "Bootstrap replicates (default 1000)");
    boot->add_option("--subsample", ba.subsample, "Subsample fraction (default 0.25)");
    boot->add_option("--confidence", ba.confidence, "Confidence level (default 0.95)");
    boot->add_option("--input", ba.input, "Input WIDTHxHEIGHT")->capture_default_str();
    boot->add_option("--out", ba.out, "Output directory")->capture_default_str();

    std::string report_dir;
    auto* report = app.add_subcommand("report", "Markdown and SVG report for a run directory");
    report->add_option("run_dir", report_dir, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (flops->parsed()) return cmd_flops(fa);
        if (scale->parsed()) return cmd_scale_stats(sa, common);
        if (anchor->parsed()) return cmd_anchor_stats(aa, common);
        if (step1->parsed()) return cmd_search("step1", s1a, common);
        if (step2->parsed()) return cmd_search("step2", s2a, common);
        if (boot->parsed()) return cmd_bootstrap(ba);
        if (report->parsed()) return cmd_report(report_dir);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const SamplingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
