#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <regex>

#include "oracles.hpp"
#include "redist/redist.hpp"
#include "temp_dir.hpp"

using namespace redist;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result run(const std::string& args) {
    const std::string cmd = std::string(REDIST_CLI) + " " + args + " 2>&1";
    Result r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::size_t count_of(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

// Three images, four faces, one flagged invalid.
void write_fixture(const test::TempDir& dir) {
    dir.write("gt.txt",
              "0--Parade/a.jpg\n2\n10 10 20 20 0 0 0 0 0 0\n100 100 200 200 0 0 0 0 0 0\n"
              "1--Handshaking/b.jpg\n1\n5 5 8 8 0 0 0 1 0 0\n"
              "2--Demo/c.jpg\n1\n0 0 64 64 0 0 0 0 0 0\n");
    dir.write("sizes.csv", "path,width,height\n0--Parade/a.jpg,1280,720\n1--Handshaking/b.jpg,640,640\n2--Demo/c.jpg,640,480\n");
}

}  // namespace

TEST(Cli, FlopsBaselineTotals) {
    const auto r = run("flops --baseline resnet-2.5gf --json");
    ASSERT_EQ(r.code, 0) << r.out;
    const auto j = nlohmann::json::parse(r.out);
    const auto f = detector_flops(*find_baseline("resnet-2.5gf"));
    EXPECT_EQ(j.at("flops").at("total_macs").get<Macs>(), f.total_macs());
    const auto table = run("flops --baseline mobilenet-0.5gf");
    EXPECT_EQ(table.code, 0);
    EXPECT_NE(table.out.find("total"), std::string::npos);
}

TEST(Cli, FlopsFilesAndLayers) {
    test::TempDir dir;
    dir.write("arch.json", canonical_json(*find_baseline("resnet-10gf")));
    const auto r = run("flops " + q(dir / "arch.json") + " --input 640x640 --csv " + q(dir / "c.csv") + " --layers " +
                       q(dir / "l.csv") + " --svg " + q(dir / "f.svg"));
    ASSERT_EQ(r.code, 0) << r.out;
    const std::string csv = dir.read("c.csv");
    const auto f = detector_flops(*find_baseline("resnet-10gf"), {640, 640});
    EXPECT_NE(csv.find("total," + std::to_string(f.total_macs()) + ","), std::string::npos);
    EXPECT_EQ(dir.read("l.csv").rfind("layer_name,", 0), 0u);
    EXPECT_NE(dir.read("f.svg").find("<svg"), std::string::npos);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run("flops --baseline nope").code, 1);
    EXPECT_EQ(run("--no-such-flag").code, 1);
    test::TempDir dir;
    dir.write("bad.json", R"({"backbone":{"block":"basic","stages":[[1,8],[1,8],[1,8],[1,8]]},"neck":{"n":8},"head":{"h":8,"m":1,"x":0}})");
    const auto bad = run("flops " + q(dir / "bad.json"));
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.out.find("head.x"), std::string::npos);
    dir.write("cfg.json", R"({"regime": {"target_gflops": 2.5, "bnd": 0.05}})");
    const auto cfg = run("search step1 --config " + q(dir / "cfg.json") + " --out " + q(dir / "r"));
    EXPECT_EQ(cfg.code, 1);
    EXPECT_NE(cfg.out.find("regime.bnd"), std::string::npos);
    EXPECT_EQ(run("search step2 --step1 " + q(dir / "absent") + " --out " + q(dir / "s2")).code, 2);
    EXPECT_EQ(run("scale-stats --gt " + q(dir / "absent.txt") + " --out " + q(dir / "o")).code, 2);
}

TEST(Cli, ScaleStatsOnFixture) {
    test::TempDir dir;
    write_fixture(dir);
    const auto r = run("scale-stats --gt " + q(dir / "gt.txt") + " --sizes " + q(dir / "sizes.csv") +
                       " --thresholds 32,16,8 --out " + q(dir / "o"));
    ASSERT_EQ(r.code, 0) << r.out;
    // scales: a.jpg x0.5 -> 10, 100; c.jpg x1 -> 64; the invalid face is dropped
    const auto j = nlohmann::json::parse(dir.read("o/cdf.json"));
    EXPECT_EQ(j.at("faces"), 3);
    EXPECT_EQ(j.at("fractions"), nlohmann::json({1.0 / 3, 1.0 / 3, 0.0}));
    EXPECT_EQ(dir.read("o/cdf.csv").rfind("threshold,fraction\n", 0), 0u);
    EXPECT_EQ(dir.read("o/sizes.csv"), "path,width,height\n0--Parade/a.jpg,1280,720\n1--Handshaking/b.jpg,640,640\n2--Demo/c.jpg,640,480\n");

    const auto keep = run("scale-stats --gt " + q(dir / "gt.txt") + " --sizes " + q(dir / "sizes.csv") +
                          " --thresholds 16 --keep-invalid --out " + q(dir / "k"));
    ASSERT_EQ(keep.code, 0);
    EXPECT_EQ(nlohmann::json::parse(dir.read("k/cdf.json")).at("fractions").at(0), 0.5);

    const auto curve = run("scale-stats --gt " + q(dir / "gt.txt") + " --sizes " + q(dir / "sizes.csv") +
                           " --thresholds '' --out " + q(dir / "c"));
    ASSERT_EQ(curve.code, 0) << curve.out;
    EXPECT_EQ(count_of(dir.read("c/cdf.csv"), "\n"), 641u);
}

TEST(Cli, ScaleStatsProbesImagesAndNamesMissing) {
    test::TempDir dir;
    write_fixture(dir);
    const auto png = oracle::png_header(1280, 720);
    dir.write("img/0--Parade/a.jpg", std::string(png.begin(), png.end()));
    const auto r = run("scale-stats --gt " + q(dir / "gt.txt") + " --images " + q(dir / "img") + " --out " + q(dir / "o"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("1--Handshaking/b.jpg"), std::string::npos);
    EXPECT_NE(r.out.find("2--Demo/c.jpg"), std::string::npos);
    EXPECT_EQ(r.out.find("0--Parade/a.jpg"), std::string::npos);
}

TEST(Cli, AnchorStatsDeterministic) {
    test::TempDir dir;
    write_fixture(dir);
    const std::string base = "anchor-stats --gt " + q(dir / "gt.txt") + " --sizes " + q(dir / "sizes.csv") +
                             " --policy sr --seed 4 --epochs 5 --raw";
    ASSERT_EQ(run("--threads 1 " + base + " --out " + q(dir / "a")).code, 0);
    ASSERT_EQ(run("--threads 3 " + base + " --out " + q(dir / "b")).code, 0);
    EXPECT_EQ(dir.read("a/match_stats.json"), dir.read("b/match_stats.json"));
    EXPECT_EQ(dir.read("a/match_stats.csv"), dir.read("b/match_stats.csv"));
    const auto j = nlohmann::json::parse(dir.read("a/match_stats.json"));
    EXPECT_EQ(j.at("policy"), "sr");
    EXPECT_EQ(j.at("images"), 15);
    EXPECT_EQ(j.at("seed"), 4);
    EXPECT_NE(dir.read("a/match_stats.csv").find("raw_candidates,"), std::string::npos);
}

TEST(Cli, AnchorStatsZeroEpochs) {
    test::TempDir dir;
    const auto r = run("anchor-stats --gt " + q(dir / "not-there.txt") + " --epochs 0 --out " + q(dir / "z"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto j = nlohmann::json::parse(dir.read("z/match_stats.json"));
    for (const auto& [k, v] : j.at("positives").items()) EXPECT_EQ(v, 0) << k;
}

TEST(Cli, SearchWritesRunAndReport) {
    test::TempDir dir;
    const auto r = run("search step1 --count 32 --seed 5 --out " + q(dir / "s1"));
    ASSERT_EQ(r.code, 0) << r.out;
    for (const char* f : {"config.json", "population.jsonl", "ranges.json", "ranges.csv", "best.json", "run.log",
                          "report/report.md", "report/shallow.svg", "report/best_flops.svg"})
        EXPECT_TRUE(std::filesystem::exists(dir / "s1" / f)) << f;
    const std::string svg = dir.read("s1/report/C3.svg");
    EXPECT_EQ(count_of(svg, "class=\"pt\""), 32u);

    EXPECT_EQ(run("search step1 --count 32 --seed 5 --out " + q(dir / "s1")).code, 1);

    const auto s2 = run("search step2 --count 32 --seed 5 --step1 " + q(dir / "s1") + " --out " + q(dir / "s2"));
    ASSERT_EQ(s2.code, 0) << s2.out;
    EXPECT_TRUE(std::filesystem::exists(dir / "s2/report/backbone.svg"));
    const auto rec = read_run(dir / "s2");
    EXPECT_EQ(rec.step, "step2");
    EXPECT_TRUE(rec.constraint);

    std::filesystem::remove_all(dir / "s1/report");
    const auto rep = run("report " + q(dir / "s1"));
    ASSERT_EQ(rep.code, 0) << rep.out;
    EXPECT_TRUE(std::filesystem::exists(dir / "s1/report/report.md"));
    std::filesystem::create_directories(dir / "empty");
    EXPECT_EQ(run("report " + q(dir / "empty")).code, 2);
}

TEST(Cli, SearchRerunsByteIdentical) {
    test::TempDir dir;
    ASSERT_EQ(run("--threads 1 search step1 --count 32 --seed 8 --surrogate-noise 0.01 --out " + q(dir / "a")).code, 0);
    ASSERT_EQ(run("--threads 2 search step1 --count 32 --seed 8 --surrogate-noise 0.01 --out " + q(dir / "b")).code, 0);
    for (const char* f : {"population.jsonl", "ranges.json", "ranges.csv", "best.json", "report/report.md",
                          "report/C2.svg"})
        EXPECT_EQ(dir.read(std::string("a/") + f), dir.read(std::string("b/") + f)) << f;
}

TEST(Cli, ScoresCsvMissingIds) {
    test::TempDir dir;
    ASSERT_EQ(run("search step1 --count 32 --seed 2 --out " + q(dir / "s")).code, 0);
    const auto pop = read_population_jsonl(dir.read("s/population.jsonl"));
    std::string csv = "arch_id,ap\n";
    for (std::size_t i = 0; i + 2 < pop.size(); ++i) csv += pop[i].id + ",0.5\n";
    dir.write("scores.csv", csv);
    const auto r = run("bootstrap --population " + q(dir / "s/population.jsonl") + " --scores " + q(dir / "scores.csv") +
                       " --out " + q(dir / "b"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find(pop[pop.size() - 1].id), std::string::npos);
    EXPECT_NE(r.out.find(pop[pop.size() - 2].id), std::string::npos);

    const auto ok = run("bootstrap --population " + q(dir / "s/population.jsonl") + " --components C3,neck --replicates 100 --out " +
                        q(dir / "b2"));
    ASSERT_EQ(ok.code, 0) << ok.out;
    const auto ranges = nlohmann::json::parse(dir.read("b2/ranges.json"));
    ASSERT_EQ(ranges.size(), 2u);
    EXPECT_EQ(ranges[1].at("component"), "neck");
    EXPECT_EQ(run("bootstrap --population " + q(dir / "s/population.jsonl") + " --components C9 --out " + q(dir / "b3")).code, 1);
}
