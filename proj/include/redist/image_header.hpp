#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <utility>
#include <vector>

#include "redist/errors.hpp"

namespace redist {

struct ImageDims {
    int width = 0;
    int height = 0;
    friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

namespace detail {

inline std::uint32_t be16(std::span<const std::uint8_t> b, std::size_t at) {
    return (std::uint32_t{b[at]} << 8) | b[at + 1];
}

inline std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
    return (be16(b, at) << 16) | be16(b, at + 2);
}

inline ImageDims png_dims(std::span<const std::uint8_t> b) {
    // signature(8) length(4) "IHDR"(4) width(4) height(4)
    if (b.size() < 24) throw DataError("truncated PNG header");
    if (b[12] != 'I' || b[13] != 'H' || b[14] != 'D' || b[15] != 'R') throw DataError("PNG without leading IHDR chunk");
    return {static_cast<int>(be32(b, 16)), static_cast<int>(be32(b, 20))};
}

inline ImageDims jpeg_dims(std::span<const std::uint8_t> b) {
    std::size_t i = 2;
    while (true) {
        if (i >= b.size()) throw DataError("truncated JPEG: no frame header");
        if (b[i] != 0xFF) throw DataError("corrupt JPEG marker stream");
        while (i < b.size() && b[i] == 0xFF) ++i;  // fill bytes
        if (i >= b.size()) throw DataError("truncated JPEG: no frame header");
        const std::uint8_t marker = b[i++];
        if (marker == 0xD8 || marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7)) continue;  // no length
        if (marker == 0xD9 || marker == 0xDA) throw DataError("JPEG frame header not found before scan data");
        if (i + 2 > b.size()) throw DataError("truncated JPEG segment");
        const std::size_t len = be16(b, i);
        if (len < 2) throw DataError("corrupt JPEG segment length");
        if (marker == 0xC0 || marker == 0xC1 || marker == 0xC2) {
            // length(2) precision(1) height(2) width(2)
            if (i + 7 > b.size()) throw DataError("truncated JPEG frame header");
            return {static_cast<int>(be16(b, i + 5)), static_cast<int>(be16(b, i + 3))};
        }
        i += len;
    }
}

}  // namespace detail

/// Width and height from a JPEG (SOF0/1/2) or PNG (IHDR) header without decoding pixels.
inline ImageDims read_image_dims(std::span<const std::uint8_t> bytes) {
    static constexpr std::uint8_t kPng[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (bytes.size() >= 8 && std::equal(std::begin(kPng), std::end(kPng), bytes.begin()))
        return detail::png_dims(bytes);
    if (bytes.size() >= 2 && bytes[0] == 0xFF && bytes[1] == 0xD8) return detail::jpeg_dims(bytes);
    const bool png_prefix = bytes.size() < 8 && std::equal(bytes.begin(), bytes.end(), std::begin(kPng));
    const bool jpeg_prefix = bytes.size() < 2 && (bytes.empty() || bytes[0] == 0xFF);
    if (png_prefix || jpeg_prefix) throw DataError("truncated image header");
    throw DataError("unknown image format");
}

/// Reads the file in growing prefixes until the header parses.
inline ImageDims probe_image_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image " + path.string());
    std::vector<std::uint8_t> buf;
    std::size_t want = 64 * 1024;
    while (true) {
        const std::size_t have = buf.size();
        buf.resize(want);
        in.read(reinterpret_cast<char*>(buf.data() + have), static_cast<std::streamsize>(want - have));
        buf.resize(have + static_cast<std::size_t>(in.gcount()));
        try {
            return read_image_dims(buf);
        } catch (const DataError& e) {
            if (!in) throw DataError(path.string() + ": " + e.what());
        }
        want *= 4;
    }
}

}  // namespace redist
