#include <gtest/gtest.h>

#include <filesystem>

#include "redist/pipeline.hpp"
#include "redist/presets.hpp"
#include "temp_dir.hpp"

using namespace redist;

namespace {

RunConfig small_config(std::size_t count = 64) {
    RunConfig cfg;
    cfg.seed = 17;
    cfg.count = count;
    cfg.bootstrap.replicates = 200;
    return cfg;
}

ArchSample scored(const std::string& id, double ap, Macs macs) {
    ArchSample s;
    s.id = id;
    s.ap = ap;
    s.flops[Component::C2].macs = macs;
    return s;
}

}  // namespace

TEST(Surrogate, PeaksAtTargetRatios) {
    SurrogateParams p;
    FlopsBreakdown f;
    // backbone 75 of 100, shallow 60 of 75
    f[Component::C2].macs = 60;
    f[Component::C4].macs = 15;
    f[Component::Neck].macs = 10;
    f[Component::Head].macs = 15;
    EXPECT_DOUBLE_EQ(surrogate_ap("x", f, p), 0.9);
    f[Component::C4].macs = 30;
    EXPECT_LT(surrogate_ap("x", f, p), 0.9);
}

TEST(Surrogate, NoiseIsKeyedById) {
    SurrogateParams p;
    p.noise = 0.05;
    p.noise_seed = 3;
    const auto a = *find_baseline("resnet-2.5gf");
    const auto f = detector_flops(a);
    EXPECT_DOUBLE_EQ(surrogate_ap("abc", f, p), surrogate_ap("abc", f, p));
    EXPECT_NE(surrogate_ap("abc", f, p), surrogate_ap("abd", f, p));
    p.noise = 50;
    for (const char* id : {"a", "b", "c", "d"}) {
        const double v = surrogate_ap(id, f, p);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_DOUBLE_EQ(SyntheticSurrogate({}).score(arch_id(a), a), surrogate_ap(a, {}));
}

TEST(SelectBest, OrderingRules) {
    std::vector<ArchSample> pop = {scored("b", 0.5, 100), scored("a", 0.7, 300), scored("c", 0.7, 200)};
    EXPECT_EQ(select_best(pop).id, "c");
    pop.push_back(scored("0", 0.7, 200));
    EXPECT_EQ(select_best(pop).id, "0");
    EXPECT_THROW(select_best(std::vector<ArchSample>{}), DataError);
    pop[0].ap.reset();
    EXPECT_THROW(select_best(pop), MissingScores);
}

TEST(CsvLookup, ParsesAndReportsMissing) {
    const auto lut = CsvLookup::parse("arch_id,ap\nabc,0.5\r\ndef, 0.25\n\n");
    std::vector<ArchSample> pop = {scored("abc", 0, 1), scored("zzz", 0, 1), scored("def", 0, 1), scored("yyy", 0, 1)};
    EXPECT_EQ(lut.missing(pop), (std::vector<std::string>{"zzz", "yyy"}));
    try {
        score_population(pop, lut);
        FAIL();
    } catch (const MissingScores& e) {
        EXPECT_EQ(e.ids(), (std::vector<std::string>{"zzz", "yyy"}));
        EXPECT_NE(std::string(e.what()).find("zzz"), std::string::npos);
    }
    pop.erase(pop.begin() + 3);
    pop.erase(pop.begin() + 1);
    score_population(pop, lut, 2);
    EXPECT_DOUBLE_EQ(*pop[0].ap, 0.5);
    EXPECT_DOUBLE_EQ(*pop[1].ap, 0.25);

    auto line_of = [](const char* text) -> std::size_t {
        try {
            CsvLookup::parse(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of("arch_id,ap\na,1.5\n"), 2u);
    EXPECT_EQ(line_of("arch_id,ap\na,0.1\nb\n"), 3u);
    EXPECT_EQ(line_of("a,x\n"), 1u);
}

TEST(Evaluators, FactoryKinds) {
    EvaluatorConfig c;
    c.kind = "constant";
    c.value = 0.3;
    EXPECT_EQ(make_evaluator(c)->describe().at("kind"), "constant");
    c.kind = "surrogate";
    EXPECT_EQ(make_evaluator(c)->describe().at("kind"), "surrogate");
    c.kind = "csv";
    c.scores_csv = "/nonexistent/scores.csv";
    EXPECT_THROW(make_evaluator(c), DataError);
    c.kind = "oracle";
    EXPECT_THROW(make_evaluator(c), ConfigError);
}

TEST(Pipeline, ConstantScoresGiveDegenerateRanges) {
    const auto rec = run_step1(small_config(32), ConstantStub(0.5));
    ASSERT_EQ(rec.ranges.size(), step1_components().size());
    for (const auto& r : rec.ranges) EXPECT_TRUE(r.degenerate) << r.component;
}

TEST(Pipeline, StepOneFindsShallowOptimum) {
    const auto rec = run_step1(small_config(320), SyntheticSurrogate({}));
    EXPECT_EQ(rec.population.size(), 320u);
    for (const auto& s : rec.population) {
        EXPECT_EQ(s.arch.neck.channels, 32);
        EXPECT_EQ(s.arch.head, (HeadConfig{96, 2, false}));
    }
    const auto shallow = find_range(rec.ranges, "shallow");
    ASSERT_TRUE(shallow);
    EXPECT_LE(shallow->low, 0.8);
    EXPECT_GE(shallow->high, 0.8);
    EXPECT_EQ(rec.best.id, select_best(rec.population).id);
}

TEST(Pipeline, StepTwoRespectsStepOneRanges) {
    auto cfg = small_config(160);
    const SyntheticSurrogate eval({});
    const auto s1 = run_step1(cfg, eval);
    const auto s2 = run_step2(cfg, s1, eval);
    ASSERT_TRUE(s2.constraint);
    const auto ranges = backbone_ranges_from(s1.ranges);
    for (const auto& s : s2.population) {
        const auto r = component_ratios(s.flops);
        for (std::size_t i = 0; i < 5; ++i) {
            EXPECT_GE(r.stages[i], ranges[i].low);
            EXPECT_LE(r.stages[i], ranges[i].high);
        }
    }
    const auto bb = find_range(s2.ranges, "backbone");
    ASSERT_TRUE(bb);
    EXPECT_LE(bb->low, 0.75);
    EXPECT_GE(bb->high, 0.75);
    EXPECT_THROW(run_step2(cfg, RunRecord{}, eval), DataError);
}

TEST(Pipeline, BaselineRunIsUnconstrained) {
    const auto rec = run_baseline(small_config(32), SyntheticSurrogate({}));
    EXPECT_FALSE(rec.constraint);
    EXPECT_TRUE(rec.ranges.empty());
    EXPECT_EQ(rec.population.size(), 32u);
}

TEST(RunDir, WriteReadRoundTrip) {
    test::TempDir dir;
    const auto rec = run_step1(small_config(32), SyntheticSurrogate({}));
    write_run(dir / "r", rec);
    for (const char* f : {"config.json", "population.jsonl", "ranges.json", "ranges.csv", "best.json", "run.log"})
        EXPECT_TRUE(std::filesystem::exists(dir / "r" / f)) << f;
    const auto back = read_run(dir / "r");
    EXPECT_EQ(back.step, "step1");
    ASSERT_EQ(back.population.size(), rec.population.size());
    for (std::size_t i = 0; i < rec.population.size(); ++i) {
        EXPECT_EQ(back.population[i].id, rec.population[i].id);
        EXPECT_EQ(back.population[i].arch, rec.population[i].arch);
        EXPECT_DOUBLE_EQ(*back.population[i].ap, *rec.population[i].ap);
    }
    ASSERT_EQ(back.ranges.size(), rec.ranges.size());
    EXPECT_DOUBLE_EQ(back.ranges[0].low, rec.ranges[0].low);
    EXPECT_EQ(back.best.id, rec.best.id);
    EXPECT_EQ(back.config.seed, rec.config.seed);
    EXPECT_EQ(back.stats.attempts, rec.stats.attempts);

    const std::string config = dir.read("r/config.json");
    EXPECT_EQ(config.find(rec.started), std::string::npos);
    EXPECT_NE(dir.read("r/run.log").find(rec.started), std::string::npos);
}

TEST(RunDir, RerunsAreByteIdentical) {
    test::TempDir dir;
    const auto cfg = small_config(32);
    write_run(dir / "a", run_step1(cfg, SyntheticSurrogate({})));
    auto cfg3 = cfg;
    cfg3.threads = 3;
    write_run(dir / "b", run_step1(cfg3, SyntheticSurrogate({})));
    for (const char* f : {"population.jsonl", "ranges.json", "ranges.csv", "best.json"})
        EXPECT_EQ(dir.read(std::string("a/") + f), dir.read(std::string("b/") + f)) << f;
}

TEST(RunDir, RefusesToOverwrite) {
    test::TempDir dir;
    const auto rec = run_baseline(small_config(8), ConstantStub());
    write_run(dir / "r", rec);
    EXPECT_THROW(write_run(dir / "r", rec), ConfigError);
    EXPECT_THROW(read_run(dir / "missing"), DataError);
    dir.write("partial/config.json", "{}");
    EXPECT_THROW(read_run(dir / "partial"), DataError);
}

TEST(Population, JsonlRoundTripChecksIds) {
    const auto a = make_sample(*find_baseline("resnet-10gf"));
    std::ostringstream os;
    write_population_jsonl(os, std::vector<ArchSample>{a});
    const auto back = read_population_jsonl(os.str());
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].id, a.id);
    EXPECT_EQ(back[0].flops, a.flops);
    EXPECT_FALSE(back[0].ap);
    auto j = to_json(a);
    j["id"] = "0000000000000000";
    EXPECT_THROW(sample_from_json(j), DataError);
}
