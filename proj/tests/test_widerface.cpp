#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "redist/widerface.hpp"
#include "temp_dir.hpp"

using namespace redist;

TEST(ParseGt, SingleRecord) {
    const auto ds = parse_widerface_gt("a.jpg\n1\n10 20 30 40 0 0 0 0 0 0\n");
    ASSERT_EQ(ds.images.size(), 1u);
    EXPECT_EQ(ds.images[0].relative_path, "a.jpg");
    ASSERT_EQ(ds.images[0].faces.size(), 1u);
    const FaceBox& f = ds.images[0].faces[0];
    EXPECT_EQ(f.x, 10);
    EXPECT_EQ(f.y, 20);
    EXPECT_EQ(f.w, 30);
    EXPECT_EQ(f.h, 40);
    EXPECT_FALSE(ds.images[0].resolved());
}

TEST(ParseGt, ZeroCountConsumesPlaceholder) {
    const auto ds = parse_widerface_gt("b.jpg\n0\n0 0 0 0 0 0 0 0 0 0\n");
    ASSERT_EQ(ds.images.size(), 1u);
    EXPECT_TRUE(ds.images[0].faces.empty());
}

TEST(ParseGt, ThreeRecordFixture) {
    const std::string text =
        "0--Parade/a.jpg\n2\n1 2 3 4 0 0 0 0 0 0\n5 6 7 8 1 0 0 0 1 0\n"
        "1--Handshaking/b.jpg\n0\n0 0 0 0 0 0 0 0 0 0\n"
        "2--Demonstration/c.jpg\n1\n9 9 9 9 2 1 1 0 2 1\n";
    const auto ds = parse_widerface_gt(text, "val");
    ASSERT_EQ(ds.images.size(), 3u);
    EXPECT_EQ(ds.images[0].faces.size(), 2u);
    EXPECT_EQ(ds.images[1].faces.size(), 0u);
    EXPECT_EQ(ds.images[2].faces.size(), 1u);
    EXPECT_EQ(ds.split_label, "val");
    // 3 names + 3 counts + (2 + 1 placeholder + 1) face lines
    std::size_t lines = std::count(text.begin(), text.end(), '\n');
    EXPECT_EQ(lines, 3u + 3u + 4u);
    EXPECT_EQ(ds.face_count(), 3u);
    EXPECT_EQ(ds.images[2].faces[0].pose, 1);
}

TEST(ParseGt, CrlfAndTrailingSpaces) {
    const auto ds = parse_widerface_gt("a.jpg \r\n2\r\n1 2 3 4 0 0 0 0 0 0 \r\n5 6 7 8 0 0 0 0 0 0\r\n");
    ASSERT_EQ(ds.images.size(), 1u);
    EXPECT_EQ(ds.images[0].relative_path, "a.jpg");
    EXPECT_EQ(ds.images[0].faces.size(), 2u);
}

TEST(ParseGt, NoTrailingNewline) {
    const auto ds = parse_widerface_gt("a.jpg\n1\n1 2 3 4 0 0 0 0 0 0");
    EXPECT_EQ(ds.face_count(), 1u);
}

TEST(ParseGt, ErrorsCarryLineNumbers) {
    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            parse_widerface_gt(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of("a.jpg\nx\n"), 2u);
    EXPECT_EQ(line_of("a.jpg\n1\n1 2 3 4 0 0 0 0 0\n"), 3u);
    EXPECT_EQ(line_of("a.jpg\n2\n1 2 3 4 0 0 0 0 0 0\n"), 4u);
    EXPECT_EQ(line_of("a.jpg\n1\n1 2 3 4 0 0 0 0 0 0\nb.jpg\n"), 5u);
    EXPECT_EQ(line_of("a.jpg\n1\n1 2 x 4 0 0 0 0 0 0\n"), 3u);
    EXPECT_EQ(line_of("a.jpg\n-1\n"), 2u);
    EXPECT_EQ(line_of("a.jpg\n1\n1 2 -3 4 0 0 0 0 0 0\n"), 3u);
    EXPECT_EQ(line_of("a.jpg\n0\n0 0 0 0 0 0 0 0 0 0\na.jpg\n0\n0 0 0 0 0 0 0 0 0 0\n"), 4u);
}

TEST(ParseGt, OutOfRangeAttributesWarn) {
    std::vector<ParseWarning> warnings;
    const auto ds = parse_widerface_gt("a.jpg\n2\n1 2 3 4 3 0 0 0 0 0\n1 2 3 4 0 0 0 0 0 2\n", "", &warnings);
    EXPECT_EQ(ds.face_count(), 2u);
    ASSERT_EQ(warnings.size(), 2u);
    EXPECT_EQ(warnings[0].line, 3u);
    EXPECT_NE(warnings[0].message.find("blur"), std::string::npos);
    EXPECT_NE(warnings[1].message.find("pose"), std::string::npos);
}

TEST(ParseGt, InvalidAndDegenerateFacesRetained) {
    const auto ds = parse_widerface_gt("a.jpg\n3\n1 2 3 4 0 0 0 1 0 0\n1 2 0 4 0 0 0 0 0 0\n1 2 3 4 0 0 0 0 0 0\n");
    ASSERT_EQ(ds.face_count(), 3u);
    FaceFilter strict, keep_all{false, false};
    int kept = 0;
    for (const auto& f : ds.images[0].faces) kept += strict.keep(f);
    EXPECT_EQ(kept, 1);
    for (const auto& f : ds.images[0].faces) EXPECT_TRUE(keep_all.keep(f));
}

TEST(ParseGt, RoundTripRandomDatasets) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        FaceDataset ds;
        const int n = std::uniform_int_distribution<int>(0, 8)(rng);
        std::size_t count_lines = 0;
        for (int i = 0; i < n; ++i) {
            ImageAnnotation im;
            im.relative_path = std::to_string(trial) + "--x/img_" + std::to_string(i) + ".jpg";
            const int faces = std::uniform_int_distribution<int>(0, 4)(rng);
            count_lines += static_cast<std::size_t>(faces);
            for (int f = 0; f < faces; ++f) {
                auto r = [&](int hi) { return std::uniform_int_distribution<int>(0, hi)(rng); };
                im.faces.push_back({r(1000), r(1000), r(300), r(300), r(2), r(1), r(1), r(1), r(2), r(1)});
            }
            ds.images.push_back(im);
        }
        const auto back = parse_widerface_gt(to_widerface_gt(ds));
        EXPECT_EQ(back, ds);
        EXPECT_EQ(back.face_count(), count_lines);
    }
}

TEST(DatasetJson, Schema) {
    auto ds = parse_widerface_gt("a.jpg\n1\n10 20 30 40 1 0 0 0 2 0\n");
    ds.images[0].width = 100;
    ds.images[0].height = 80;
    const auto j = to_json(ds);
    const auto& im = j.at("images").at(0);
    EXPECT_EQ(im.at("path"), "a.jpg");
    EXPECT_EQ(im.at("width"), 100);
    EXPECT_EQ(im.at("height"), 80);
    EXPECT_EQ(im.at("faces").at(0), nlohmann::json({10, 20, 30, 40, 1, 0, 0, 0, 2, 0}));
}

TEST(SizesCsv, ParseAndEmitSorted) {
    const auto t = parse_sizes_csv("path,width,height\n0--Parade/x.jpg,1024,768\r\nb.jpg, 10 ,20\n");
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t.at("0--Parade/x.jpg"), (ImageDims{1024, 768}));
    EXPECT_EQ(t.at("b.jpg"), (ImageDims{10, 20}));
    EXPECT_THROW(parse_sizes_csv("path,width,height\na.jpg,0,5\n"), ParseError);
    EXPECT_THROW(parse_sizes_csv("path,width,height\na.jpg\n"), ParseError);

    FaceDataset ds;
    ds.images = {{"z.jpg", 3, 4, {}}, {"a.jpg", 1, 2, {}}, {"m.jpg", std::nullopt, std::nullopt, {}}};
    EXPECT_EQ(to_sizes_csv(ds), "path,width,height\na.jpg,1,2\nz.jpg,3,4\n");
}

TEST(ResolveDimensions, CsvRow) {
    auto ds = parse_widerface_gt("0--Parade/x.jpg\n0\n0 0 0 0 0 0 0 0 0 0\n");
    const auto sizes = parse_sizes_csv("path,width,height\n0--Parade/x.jpg,1024,768\n");
    ds = resolve_dimensions(ds, std::nullopt, &sizes);
    EXPECT_EQ(*ds.images[0].width, 1024);
    EXPECT_EQ(*ds.images[0].height, 768);
}

TEST(ResolveDimensions, MissingFileNamed) {
    test::TempDir dir;
    auto ds = parse_widerface_gt("missing/one.jpg\n0\n0 0 0 0 0 0 0 0 0 0\n");
    try {
        resolve_dimensions(ds, dir.path());
        FAIL() << "expected ResolveError";
    } catch (const ResolveError& e) {
        ASSERT_EQ(e.paths().size(), 1u);
        EXPECT_EQ(e.paths()[0], "missing/one.jpg");
        EXPECT_NE(std::string(e.what()).find("missing/one.jpg"), std::string::npos);
    }
}

TEST(ResolveDimensions, MixedCsvAndDirectory) {
    test::TempDir dir;
    std::string gt;
    std::string csv = "path,width,height\n";
    for (int i = 0; i < 6; ++i) {
        const std::string p = "e/" + std::to_string(i) + (i % 2 ? ".png" : ".jpg");
        gt += p + "\n0\n0 0 0 0 0 0 0 0 0 0\n";
        const auto bytes = i % 2 ? oracle::png_header(100 + i, 50 + i) : oracle::jpeg_header(100 + i, 50 + i);
        dir.write(p, std::string(bytes.begin(), bytes.end()));
        if (i < 3) csv += p + "," + std::to_string(900 + i) + ",700\n";  // disagrees with the file on purpose
    }
    const auto sizes = parse_sizes_csv(csv);
    for (unsigned threads : {1u, 3u}) {
        const auto ds = resolve_dimensions(parse_widerface_gt(gt), dir.path(), &sizes, threads);
        for (int i = 0; i < 6; ++i) {
            const auto& im = ds.images[static_cast<std::size_t>(i)];
            if (i < 3) {
                EXPECT_EQ(*im.width, 900 + i);
                EXPECT_EQ(*im.height, 700);
            } else {
                EXPECT_EQ(*im.width, 100 + i);
                EXPECT_EQ(*im.height, 50 + i);
            }
        }
    }
}

TEST(ResolveDimensions, ListsEveryUnresolved) {
    auto ds = parse_widerface_gt("a.jpg\n0\n0 0 0 0 0 0 0 0 0 0\nb.jpg\n0\n0 0 0 0 0 0 0 0 0 0\n");
    try {
        resolve_dimensions(ds, std::nullopt);
        FAIL();
    } catch (const ResolveError& e) {
        EXPECT_EQ(e.paths(), (std::vector<std::string>{"a.jpg", "b.jpg"}));
    }
}

TEST(LoadGt, FileErrorsNamePath) {
    test::TempDir dir;
    dir.write("gt.txt", "a.jpg\nzz\n");
    try {
        load_widerface_gt(dir.path() / "gt.txt");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_NE(std::string(e.what()).find("gt.txt"), std::string::npos);
    }
    EXPECT_THROW(load_widerface_gt(dir.path() / "absent.txt"), DataError);
}
