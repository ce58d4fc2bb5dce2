#pragma once

// WIDER FACE bbx_gt annotation files:
//   <relative path>
//   <face count>
//   <count lines of "x y w h blur expression illumination invalid occlusion pose">
// A record with count 0 is followed by one all-zero face line.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "redist/errors.hpp"
#include "redist/image_header.hpp"

namespace redist {

struct FaceBox {
    int x = 0, y = 0, w = 0, h = 0;
    int blur = 0, expression = 0, illumination = 0, invalid = 0, occlusion = 0, pose = 0;
    friend bool operator==(const FaceBox&, const FaceBox&) = default;
};

struct ImageAnnotation {
    std::string relative_path;
    std::optional<int> width;
    std::optional<int> height;
    std::vector<FaceBox> faces;
    friend bool operator==(const ImageAnnotation&, const ImageAnnotation&) = default;

    bool resolved() const { return width.has_value() && height.has_value(); }
};

struct FaceDataset {
    std::vector<ImageAnnotation> images;
    std::string split_label;
    friend bool operator==(const FaceDataset&, const FaceDataset&) = default;

    std::size_t face_count() const {
        std::size_t n = 0;
        for (const auto& im : images) n += im.faces.size();
        return n;
    }
};

struct ParseWarning {
    std::size_t line;
    std::string message;
};

/// Which faces statistics consumers keep.
struct FaceFilter {
    bool drop_invalid = true;
    bool drop_degenerate = true;  // w == 0 or h == 0

    bool keep(const FaceBox& f) const {
        if (drop_invalid && f.invalid == 1) return false;
        if (drop_degenerate && (f.w <= 0 || f.h <= 0)) return false;
        return true;
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<long long> to_int(std::string_view s) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

class LineReader {
public:
    explicit LineReader(std::string_view text) : text_(text) {}

    std::optional<std::string_view> next() {
        while (pos_ <= text_.size()) {
            if (pos_ == text_.size()) {
                pos_ = text_.size() + 1;
                return std::nullopt;
            }
            std::size_t end = text_.find('\n', pos_);
            if (end == std::string_view::npos) end = text_.size();
            std::string_view line = trim(text_.substr(pos_, end - pos_));
            pos_ = end + 1;
            ++line_;
            return line;
        }
        return std::nullopt;
    }
    std::size_t line() const { return line_; }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 0;
};

inline void check_attribute(int v, int hi, const char* name, std::size_t line, std::vector<ParseWarning>* warnings) {
    if (warnings && (v < 0 || v > hi))
        warnings->push_back({line, std::string(name) + " code " + std::to_string(v) + " outside 0.." + std::to_string(hi)});
}

}  // namespace detail

inline FaceDataset parse_widerface_gt(std::string_view text, std::string split_label = {},
                                      std::vector<ParseWarning>* warnings = nullptr) {
    using namespace detail;
    FaceDataset ds;
    ds.split_label = std::move(split_label);
    std::unordered_set<std::string> seen;
    LineReader rd(text);

    auto read_face = [&](std::size_t& line_no) -> FaceBox {
        auto line = rd.next();
        line_no = rd.line();
        if (!line) throw ParseError(line_no + 1, "truncated record: expected a face line");
        const auto fields = split_ws(*line);
        if (fields.size() != 10)
            throw ParseError(line_no, "face line has " + std::to_string(fields.size()) + " fields, expected 10");
        int v[10];
        for (int i = 0; i < 10; ++i) {
            auto n = to_int(fields[i]);
            if (!n) throw ParseError(line_no, "non-integer face field '" + std::string(fields[i]) + "'");
            v[i] = static_cast<int>(*n);
        }
        return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]};
    };

    while (auto name = rd.next()) {
        if (name->empty()) continue;
        const std::size_t name_line = rd.line();
        ImageAnnotation im;
        im.relative_path = std::string(*name);
        if (!seen.insert(im.relative_path).second) throw ParseError(name_line, "duplicate image path " + im.relative_path);

        auto count_line = rd.next();
        if (!count_line) throw ParseError(name_line + 1, "truncated record: missing face count");
        auto count = to_int(*count_line);
        if (!count || *count < 0) throw ParseError(rd.line(), "malformed face count '" + std::string(*count_line) + "'");

        std::size_t line_no = 0;
        if (*count == 0) {
            read_face(line_no);  // placeholder line
        } else {
            im.faces.reserve(static_cast<std::size_t>(*count));
            for (long long i = 0; i < *count; ++i) {
                FaceBox f = read_face(line_no);
                if (f.w < 0 || f.h < 0) throw ParseError(line_no, "negative face size");
                check_attribute(f.blur, 2, "blur", line_no, warnings);
                check_attribute(f.expression, 1, "expression", line_no, warnings);
                check_attribute(f.illumination, 1, "illumination", line_no, warnings);
                check_attribute(f.invalid, 1, "invalid", line_no, warnings);
                check_attribute(f.occlusion, 2, "occlusion", line_no, warnings);
                check_attribute(f.pose, 1, "pose", line_no, warnings);
                im.faces.push_back(f);
            }
        }
        ds.images.push_back(std::move(im));
    }
    return ds;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline FaceDataset load_widerface_gt(const std::filesystem::path& path, std::string split_label = {},
                                     std::vector<ParseWarning>* warnings = nullptr) {
    const std::string text = read_text_file(path);
    try {
        return parse_widerface_gt(text, std::move(split_label), warnings);
    } catch (const ParseError& e) {
        throw ParseError(e.line(), path.string() + ": " + std::string(e.what()));
    }
}

/// Inverse of parse_widerface_gt, including the zero-count placeholder line.
inline std::string to_widerface_gt(const FaceDataset& ds) {
    std::string out;
    auto face_line = [&](const FaceBox& f) {
        const int v[10] = {f.x, f.y, f.w, f.h, f.blur, f.expression, f.illumination, f.invalid, f.occlusion, f.pose};
        for (int i = 0; i < 10; ++i) {
            if (i) out += ' ';
            out += std::to_string(v[i]);
        }
        out += '\n';
    };
    for (const auto& im : ds.images) {
        out += im.relative_path + '\n' + std::to_string(im.faces.size()) + '\n';
        if (im.faces.empty()) face_line(FaceBox{});
        for (const auto& f : im.faces) face_line(f);
    }
    return out;
}

// JSON: images[{path,width,height,faces[[x,y,w,h,attrs...]]}]
inline nlohmann::json to_json(const FaceDataset& ds) {
    nlohmann::json images = nlohmann::json::array();
    for (const auto& im : ds.images) {
        nlohmann::json faces = nlohmann::json::array();
        for (const auto& f : im.faces)
            faces.push_back({f.x, f.y, f.w, f.h, f.blur, f.expression, f.illumination, f.invalid, f.occlusion, f.pose});
        images.push_back({{"path", im.relative_path},
                          {"width", im.width ? nlohmann::json(*im.width) : nlohmann::json(nullptr)},
                          {"height", im.height ? nlohmann::json(*im.height) : nlohmann::json(nullptr)},
                          {"faces", faces}});
    }
    return {{"split", ds.split_label}, {"images", images}};
}

using SizeTable = std::unordered_map<std::string, ImageDims>;

/// `path,width,height` with a header row.
inline SizeTable parse_sizes_csv(std::string_view text) {
    using namespace detail;
    SizeTable out;
    LineReader rd(text);
    bool header = true;
    while (auto line = rd.next()) {
        if (line->empty()) continue;
        if (header) {
            header = false;
            if (line->rfind("path", 0) == 0) continue;
        }
        const auto c2 = line->rfind(',');
        const auto c1 = c2 == std::string_view::npos ? c2 : line->rfind(',', c2 - 1);
        if (c1 == std::string_view::npos) throw ParseError(rd.line(), "expected path,width,height");
        auto w = to_int(trim(line->substr(c1 + 1, c2 - c1 - 1)));
        auto h = to_int(trim(line->substr(c2 + 1)));
        if (!w || !h || *w <= 0 || *h <= 0) throw ParseError(rd.line(), "width/height must be positive integers");
        out[std::string(trim(line->substr(0, c1)))] = {static_cast<int>(*w), static_cast<int>(*h)};
    }
    return out;
}

/// Sorted by path so the sidecar is byte-stable.
inline std::string to_sizes_csv(const FaceDataset& ds) {
    std::map<std::string, ImageDims> rows;
    for (const auto& im : ds.images)
        if (im.resolved()) rows[im.relative_path] = {*im.width, *im.height};
    std::string out = "path,width,height\n";
    for (const auto& [p, d] : rows) out += p + ',' + std::to_string(d.width) + ',' + std::to_string(d.height) + '\n';
    return out;
}

/// Fills width/height from `sizes` first, then by probing `image_root/path`.
/// Throws ResolveError listing every image left unresolved.
inline FaceDataset resolve_dimensions(FaceDataset ds, const std::optional<std::filesystem::path>& image_root,
                                      const SizeTable* sizes = nullptr, unsigned threads = 1) {
    std::vector<std::size_t> to_probe;
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        auto& im = ds.images[i];
        if (sizes) {
            if (auto it = sizes->find(im.relative_path); it != sizes->end()) {
                im.width = it->second.width;
                im.height = it->second.height;
                continue;
            }
        }
        if (!im.resolved()) to_probe.push_back(i);
    }
    std::vector<char> failed(to_probe.size(), 0);
    if (image_root && !to_probe.empty()) {
        auto work = [&](std::size_t begin, std::size_t step) {
            for (std::size_t k = begin; k < to_probe.size(); k += step) {
                auto& im = ds.images[to_probe[k]];
                try {
                    const ImageDims d = probe_image_file(*image_root / im.relative_path);
                    im.width = d.width;
                    im.height = d.height;
                } catch (const DataError&) {
                    failed[k] = 1;
                }
            }
        };
        const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(to_probe.size())));
        if (n == 1) {
            work(0, 1);
        } else {
            std::vector<std::jthread> pool;
            for (unsigned t = 0; t < n; ++t) pool.emplace_back(work, t, n);
        }
    } else {
        std::fill(failed.begin(), failed.end(), 1);
    }
    std::vector<std::string> missing;
    for (std::size_t k = 0; k < to_probe.size(); ++k)
        if (failed[k]) missing.push_back(ds.images[to_probe[k]].relative_path);
    if (!missing.empty()) throw ResolveError(std::move(missing));
    return ds;
}

}  // namespace redist
