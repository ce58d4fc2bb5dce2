#include <gtest/gtest.h>

#include "oracles.hpp"
#include "redist/image_header.hpp"
#include "temp_dir.hpp"

using namespace redist;

TEST(ImageHeader, Png) {
    const auto b = oracle::png_header(640, 480);
    EXPECT_EQ(read_image_dims(b), (ImageDims{640, 480}));
}

TEST(ImageHeader, JpegSof0) {
    const auto b = oracle::jpeg_header(1024, 882);
    EXPECT_EQ(read_image_dims(b), (ImageDims{1024, 882}));
}

TEST(ImageHeader, JpegExtendedAndProgressive) {
    EXPECT_EQ(read_image_dims(oracle::jpeg_header(300, 200, 1)), (ImageDims{300, 200}));
    EXPECT_EQ(read_image_dims(oracle::jpeg_header(2048, 1536, 2)), (ImageDims{2048, 1536}));
}

TEST(ImageHeader, JpegSkipsTablesAndFillBytes) {
    std::vector<std::uint8_t> b = {0xFF, 0xD8};
    // DQT segment of length 5, then fill bytes before the frame marker
    b.insert(b.end(), {0xFF, 0xDB, 0x00, 0x05, 1, 2, 3, 0xFF, 0xFF});
    b.insert(b.end(), {0xC0, 0x00, 0x0B, 0x08, 0x01, 0x2C, 0x01, 0x90, 1, 1, 0x11, 0});
    EXPECT_EQ(read_image_dims(b), (ImageDims{400, 300}));
}

TEST(ImageHeader, Errors) {
    const std::vector<std::uint8_t> gif = {'G', 'I', 'F', '8', '9', 'a', 0, 0, 0, 0};
    EXPECT_THROW(read_image_dims(gif), DataError);

    auto png = oracle::png_header(10, 10);
    png.resize(20);
    EXPECT_THROW(read_image_dims(png), DataError);

    auto jpeg = oracle::jpeg_header(10, 10);
    jpeg.resize(22);
    EXPECT_THROW(read_image_dims(jpeg), DataError);

    const std::vector<std::uint8_t> scan_first = {0xFF, 0xD8, 0xFF, 0xDA, 0x00, 0x02, 0xFF, 0xD9};
    try {
        read_image_dims(scan_first);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("before scan"), std::string::npos);
    }
    EXPECT_THROW(read_image_dims(std::vector<std::uint8_t>{}), DataError);
}

TEST(ImageHeader, ProbeFile) {
    test::TempDir dir;
    auto b = oracle::jpeg_header(123, 45);
    b.resize(b.size() + 200000, 0);  // body past the first read
    dir.write("x.jpg", std::string(b.begin(), b.end()));
    EXPECT_EQ(probe_image_file(dir / "x.jpg"), (ImageDims{123, 45}));
    dir.write("bad.jpg", "not an image");
    EXPECT_THROW(probe_image_file(dir / "bad.jpg"), DataError);
    EXPECT_THROW(probe_image_file(dir / "none.jpg"), DataError);
}

TEST(ImageHeader, ProbeFindsLateFrameHeader) {
    test::TempDir dir;
    std::vector<std::uint8_t> b = {0xFF, 0xD8};
    for (int i = 0; i < 3; ++i) {  // three 60 KB APP segments push SOF past 64 KB
        b.insert(b.end(), {0xFF, 0xE1, 0xEA, 0x60});
        b.resize(b.size() + 0xEA60 - 2, 0);
    }
    b.insert(b.end(), {0xFF, 0xC0, 0x00, 0x0B, 0x08, 0x00, 0x07, 0x00, 0x09, 1, 1, 0x11, 0});
    dir.write("late.jpg", std::string(b.begin(), b.end()));
    EXPECT_EQ(probe_image_file(dir / "late.jpg"), (ImageDims{9, 7}));
}
