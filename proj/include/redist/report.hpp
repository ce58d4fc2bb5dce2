#pragma once

// SVG plots and markdown summaries. Output is plain text with fixed number
// formatting so reruns are byte-identical.

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "redist/anchors.hpp"
#include "redist/bootstrap.hpp"
#include "redist/flops.hpp"
#include "redist/pipeline.hpp"

namespace redist {

inline constexpr std::string_view kSvgGenerator = "redist-svg 1";

struct ReferenceRange {
    std::string_view component;
    double low, high;
};

/// Ranges published for 320 trained detectors at 2.5 GF. Shown next to
/// computed ranges; nothing here can be reproduced without those APs.
inline constexpr std::array<ReferenceRange, 10> kPublishedRanges = {{
    {"stem", 0.10, 0.20},
    {"C2", 0.24, 0.39},
    {"C3", 0.26, 0.47},
    {"C4", 0.04, 0.15},
    {"C5", 0.01, 0.16},
    {"shallow", 0.72, 0.91},
    {"deep", 0.09, 0.28},
    {"backbone", 0.67, 0.88},
    {"neck", 0.01, 0.07},
    {"head", 0.10, 0.26},
}};

inline std::optional<ReferenceRange> published_range(std::string_view component) {
    for (const auto& r : kPublishedRanges)
        if (r.component == component) return r;
    return std::nullopt;
}

namespace detail {

inline std::string fmt(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string svg_open(int w, int h) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
           std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) +
           "\" font-family=\"sans-serif\" font-size=\"11\">\n<!-- " + std::string(kSvgGenerator) + " -->\n" +
           "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

inline std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

struct Frame {
    double x0 = 50, y0 = 20, w = 380, h = 240;  // plot area
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
    double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

inline std::string axes(const Frame& f, std::string_view xlabel, std::string_view ylabel, int ticks = 5) {
    std::string s;
    s += "<rect x=\"" + fmt(f.x0) + "\" y=\"" + fmt(f.y0) + "\" width=\"" + fmt(f.w) + "\" height=\"" + fmt(f.h) +
         "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= ticks; ++i) {
        const double xv = f.xmin + (f.xmax - f.xmin) * i / ticks, yv = f.ymin + (f.ymax - f.ymin) * i / ticks;
        s += "<text x=\"" + fmt(f.px(xv)) + "\" y=\"" + fmt(f.y0 + f.h + 14) + "\" text-anchor=\"middle\">" +
             fmt(xv, 3) + "</text>\n";
        s += "<text x=\"" + fmt(f.x0 - 4) + "\" y=\"" + fmt(f.py(yv) + 4) + "\" text-anchor=\"end\">" + fmt(yv, 3) +
             "</text>\n";
    }
    s += "<text x=\"" + fmt(f.x0 + f.w / 2) + "\" y=\"" + fmt(f.y0 + f.h + 30) + "\" text-anchor=\"middle\">" +
         escape(xlabel) + "</text>\n";
    s += "<text x=\"12\" y=\"" + fmt(f.y0 + f.h / 2) + "\" transform=\"rotate(-90 12 " + fmt(f.y0 + f.h / 2) +
         ")\" text-anchor=\"middle\">" + escape(ylabel) + "</text>\n";
    return s;
}

}  // namespace detail

/// Ratio-vs-ap scatter with the bootstrap range shaded and an optional reference band.
inline std::string svg_scatter(std::span<const ScoredPair> pairs, const BootstrapRange& range,
                               std::optional<ReferenceRange> reference = std::nullopt) {
    using detail::fmt;
    detail::Frame f;
    double lo = range.low, hi = range.high, ylo = 1, yhi = 0;
    for (const auto& p : pairs) {
        lo = std::min(lo, p.x);
        hi = std::max(hi, p.x);
        ylo = std::min(ylo, p.ap);
        yhi = std::max(yhi, p.ap);
    }
    if (reference) {
        lo = std::min(lo, reference->low);
        hi = std::max(hi, reference->high);
    }
    const double padx = std::max(0.01, (hi - lo) * 0.05), pady = std::max(0.005, (yhi - ylo) * 0.05);
    f.xmin = std::max(0.0, lo - padx);
    f.xmax = std::min(1.0, hi + padx);
    if (f.xmax <= f.xmin) f.xmax = f.xmin + 0.01;
    f.ymin = pairs.empty() ? 0 : ylo - pady;
    f.ymax = pairs.empty() ? 1 : yhi + pady;

    std::string s = detail::svg_open(460, 310);
    s += "<text x=\"" + fmt(f.x0) + "\" y=\"14\">" + detail::escape(range.component) + " ~ (" +
         fmt(range.low * 100, 1) + "%, " + fmt(range.high * 100, 1) + "%)</text>\n";
    if (reference)
        s += "<rect class=\"reference\" x=\"" + fmt(f.px(reference->low)) + "\" y=\"" + fmt(f.y0) + "\" width=\"" +
             fmt(f.px(reference->high) - f.px(reference->low)) + "\" height=\"" + fmt(f.h) +
             "\" fill=\"none\" stroke=\"#c33\" stroke-dasharray=\"4 3\"/>\n";
    s += "<rect class=\"range\" x=\"" + fmt(f.px(range.low)) + "\" y=\"" + fmt(f.y0) + "\" width=\"" +
         fmt(std::max(1.0, f.px(range.high) - f.px(range.low))) + "\" height=\"" + fmt(f.h) +
         "\" fill=\"#3b7dd8\" fill-opacity=\"0.18\"/>\n";
    for (const auto& p : pairs)
        s += "<circle class=\"pt\" cx=\"" + fmt(f.px(p.x)) + "\" cy=\"" + fmt(f.py(p.ap)) +
             "\" r=\"2.2\" fill=\"#1f4e99\"/>\n";
    s += detail::axes(f, range.component + " computation ratio", "AP");
    return s + "</svg>\n";
}

/// Horizontal stacked bar of MACs per component.
inline std::string svg_stacked_bar(const FlopsBreakdown& fb, std::string_view title = {}) {
    using detail::fmt;
    static constexpr std::array<const char*, kNumComponents> kColors = {"#8dd3c7", "#80b1d3", "#bebada", "#fb8072",
                                                                        "#fdb462", "#b3de69", "#fccde5"};
    const double total = static_cast<double>(std::max<Macs>(1, fb.total_macs()));
    std::string s = detail::svg_open(620, 120);
    if (!title.empty()) s += "<text x=\"10\" y=\"16\">" + detail::escape(title) + "</text>\n";
    double x = 10;
    for (std::size_t i = 0; i < kNumComponents; ++i) {
        const double w = 600.0 * static_cast<double>(fb.parts[i].macs) / total;
        s += "<rect x=\"" + fmt(x) + "\" y=\"28\" width=\"" + fmt(w) + "\" height=\"36\" fill=\"" + kColors[i] +
             "\"><title>" + std::string(component_name(kComponents[i])) + "</title></rect>\n";
        s += "<rect x=\"" + fmt(10 + 86.0 * static_cast<double>(i)) + "\" y=\"80\" width=\"10\" height=\"10\" fill=\"" +
             kColors[i] + "\"/>\n<text x=\"" + fmt(24 + 86.0 * static_cast<double>(i)) + "\" y=\"89\">" +
             std::string(component_name(kComponents[i])) + " " + fmt(100 * static_cast<double>(fb.parts[i].macs) / total, 1) +
             "%</text>\n";
        x += w;
    }
    return s + "</svg>\n";
}

/// Vertical bars, one per label.
inline std::string svg_bars(std::span<const std::string> labels, std::span<const double> values, std::string_view title,
                            std::string_view ylabel) {
    using detail::fmt;
    detail::Frame f;
    f.xmin = 0;
    f.xmax = static_cast<double>(std::max<std::size_t>(1, labels.size()));
    f.ymax = 1;
    for (double v : values) f.ymax = std::max(f.ymax, v * 1.05);
    std::string s = detail::svg_open(460, 310);
    s += "<text x=\"" + fmt(f.x0) + "\" y=\"14\">" + detail::escape(title) + "</text>\n";
    s += "<rect x=\"" + fmt(f.x0) + "\" y=\"" + fmt(f.y0) + "\" width=\"" + fmt(f.w) + "\" height=\"" + fmt(f.h) +
         "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double bx = f.px(static_cast<double>(i) + 0.15), bw = f.px(0.7) - f.px(0);
        s += "<rect x=\"" + fmt(bx) + "\" y=\"" + fmt(f.py(values[i])) + "\" width=\"" + fmt(bw) + "\" height=\"" +
             fmt(f.py(0) - f.py(values[i])) + "\" fill=\"#3b7dd8\"/>\n";
        s += "<text x=\"" + fmt(f.px(static_cast<double>(i) + 0.5)) + "\" y=\"" + fmt(f.y0 + f.h + 14) +
             "\" text-anchor=\"middle\">" + detail::escape(labels[i]) + "</text>\n";
        s += "<text x=\"" + fmt(f.px(static_cast<double>(i) + 0.5)) + "\" y=\"" + fmt(f.py(values[i]) - 3) +
             "\" text-anchor=\"middle\">" + fmt(values[i], 0) + "</text>\n";
    }
    s += "<text x=\"12\" y=\"" + fmt(f.y0 + f.h / 2) + "\" transform=\"rotate(-90 12 " + fmt(f.y0 + f.h / 2) +
         ")\" text-anchor=\"middle\">" + detail::escape(ylabel) + "</text>\n";
    return s + "</svg>\n";
}

/// Step curve of (x, y) points.
inline std::string svg_curve(std::span<const double> xs, std::span<const double> ys, std::string_view title,
                             std::string_view xlabel, std::string_view ylabel) {
    using detail::fmt;
    detail::Frame f;
    f.xmin = xs.empty() ? 0 : std::min(0.0, xs.front());
    f.xmax = xs.empty() ? 1 : std::max(f.xmin + 1, xs.back());
    std::string s = detail::svg_open(460, 310);
    s += "<text x=\"" + fmt(f.x0) + "\" y=\"14\">" + detail::escape(title) + "</text>\n";
    s += "<polyline fill=\"none\" stroke=\"#1f4e99\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? " " : "") + fmt(f.px(xs[i])) + "," + fmt(f.py(ys[i]));
    s += "\"/>\n";
    s += detail::axes(f, xlabel, ylabel);
    return s + "</svg>\n";
}

inline std::string svg_match_stats(const MatchStats& m, std::string_view title) {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (std::size_t i = 0; i < kAnchorScales.size(); ++i) {
        labels.push_back(std::to_string(kAnchorScales[i]));
        values.push_back(static_cast<double>(m.positives[i]));
    }
    return svg_bars(labels, values, title, "positive anchors");
}

// ---------------------------------------------------------------------------
// Run report

inline std::string flops_table(const FlopsBreakdown& fb) {
    using detail::fmt;
    std::ostringstream os;
    const double total = static_cast<double>(std::max<Macs>(1, fb.total_macs()));
    os << "| component | GMACs | params (M) | share |\n|---|---:|---:|---:|\n";
    for (std::size_t i = 0; i < kNumComponents; ++i)
        os << "| " << component_name(kComponents[i]) << " | " << fmt(fb.parts[i].macs / 1e9, 4) << " | "
           << fmt(fb.parts[i].params / 1e6, 4) << " | " << fmt(100 * fb.parts[i].macs / total, 1) << "% |\n";
    os << "| total | " << fmt(fb.total_macs() / 1e9, 4) << " | " << fmt(fb.total_params() / 1e6, 4) << " | 100.0% |\n";
    return os.str();
}

/// Samples whose ratios lie inside every range, best first.
inline std::vector<const ArchSample*> in_range_frontier(std::span<const ArchSample> pop,
                                                        const std::vector<BootstrapRange>& ranges) {
    std::vector<const ArchSample*> out;
    for (const auto& s : pop) {
        const auto r = component_ratios(s.flops);
        bool ok = true;
        for (const auto& rg : ranges) {
            const double x = named_ratio(r, rg.component);
            ok = ok && x >= rg.low && x <= rg.high;
        }
        if (ok) out.push_back(&s);
    }
    std::stable_sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->ap.value_or(0) > b->ap.value_or(0); });
    return out;
}

/// Writes report/report.md and one scatter SVG per range component.
/// Returns the paths written, relative to `run_dir`.
inline std::vector<std::string> render_report(const std::filesystem::path& run_dir) {
    using detail::fmt;
    namespace fs = std::filesystem;
    const RunRecord rec = read_run(run_dir);
    if (rec.population.empty()) throw DataError(run_dir.string() + ": population is empty");
    for (const auto& s : rec.population)
        if (!s.ap) throw MissingScores({s.id});
    const fs::path out = run_dir / "report";
    fs::create_directories(out);
    std::vector<std::string> written;

    std::ostringstream md;
    md << "# " << rec.step << " report\n\n";
    md << "- seed: " << rec.config.seed << "\n- regime: " << fmt(rec.config.regime.target_gmacs, 3) << " GMACs +/- "
       << fmt(rec.config.regime.band * 100, 1) << "%\n- block: " << block_kind_name(rec.block)
       << "\n- population: " << rec.population.size() << " samples, " << rec.stats.attempts << " proposals\n";
    md << "- evaluator: `" << rec.evaluator.dump() << "`\n";
    md << "- bootstrap: B=" << rec.config.bootstrap.replicates << ", subsample " << fmt(rec.config.bootstrap.subsample_frac, 2)
       << ", confidence " << fmt(rec.config.bootstrap.confidence, 2) << "\n\n";

    if (!rec.ranges.empty()) {
        md << "## Ranges\n\n| component | low | high | published | degenerate | plot |\n|---|---:|---:|---|---|---|\n";
        for (const auto& r : rec.ranges) {
            const auto ref = published_range(r.component);
            const auto pairs = scored_pairs(rec.population, r.component);
            const std::string name = r.component + ".svg";
            detail::write_file(out / name, svg_scatter(pairs, r, ref));
            written.push_back("report/" + name);
            md << "| " << r.component << " | " << fmt(r.low * 100, 1) << "% | " << fmt(r.high * 100, 1) << "% | "
               << (ref ? fmt(ref->low * 100, 0) + "-" + fmt(ref->high * 100, 0) + "%" : "-") << " | "
               << (r.degenerate ? "yes" : "no") << " | [" << name << "](" << name << ") |\n";
        }
        md << "\nPublished ranges come from trained detectors and are shown for comparison only.\n\n";
    }

    md << "## Best sample\n\n`" << rec.best.id << "` ap " << fmt(rec.best.ap.value_or(0), 4) << "\n\n```json\n"
       << to_json(rec.best.arch).dump() << "\n```\n\n"
       << flops_table(rec.best.flops) << "\n";
    detail::write_file(out / "best_flops.svg", svg_stacked_bar(rec.best.flops, "best sample " + rec.best.id));
    written.push_back("report/best_flops.svg");

    if (!rec.ranges.empty()) {
        const auto frontier = in_range_frontier(rec.population, rec.ranges);
        md << "## Inside every range\n\n" << frontier.size() << " samples.\n\n| id | ap | GMACs |\n|---|---:|---:|\n";
        for (std::size_t i = 0; i < frontier.size() && i < 20; ++i)
            md << "| " << frontier[i]->id << " | " << fmt(frontier[i]->ap.value_or(0), 4) << " | "
               << fmt(frontier[i]->flops.total_macs() / 1e9, 4) << " |\n";
    }
    detail::write_file(out / "report.md", md.str());
    written.push_back("report/report.md");
    return written;
}

}  // namespace redist
