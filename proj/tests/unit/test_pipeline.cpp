#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "infodist/pipeline.hpp"

using namespace infodist;

namespace {

PipelineConfig small_config(std::uint64_t seed = 3) {
    PipelineConfig c;
    c.fixture = FixtureSpec{.seed = 21, .num_classes = 3, .clusters_per_class = 2, .dim = 4, .count_per_class = 60,
                            .separation = 3};
    c.distill.graph.eta = 0.02;
    c.distill.per_class = 10;
    c.loss.epochs = 20;
    c.loss.batch_size = 16;
    c.runs = 3;
    c.seed = seed;
    return c;
}

std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "infodist_pipeline_tests" / name;
    std::filesystem::remove_all(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(HoldoutSplit, HalfSplitPerClass) {
    const auto set = generate_fixture(FixtureSpec{.seed = 1, .num_classes = 3, .count_per_class = 100});
    const auto split = holdout_split(set, 0.5, 9);
    for (auto n : split.train.class_counts()) EXPECT_EQ(n, 50u);
    for (auto n : split.test.class_counts()) EXPECT_EQ(n, 50u);
    const auto again = holdout_split(set, 0.5, 9);
    EXPECT_EQ(split.test_ids, again.test_ids);
    EXPECT_NE(split.test_ids, holdout_split(set, 0.5, 10).test_ids);
}

TEST(HoldoutSplit, DisjointAndCoveringOverSeededFixtures) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto set = generate_fixture(FixtureSpec{.seed = seed,
                                                      .num_classes = 1 + static_cast<std::uint32_t>(seed % 5),
                                                      .count_per_class = 7 + static_cast<std::uint32_t>(seed)});
        const auto split = holdout_split(set, 0.2, seed);
        std::set<ItemId> train(split.train_ids.begin(), split.train_ids.end());
        std::set<ItemId> test(split.test_ids.begin(), split.test_ids.end());
        std::vector<ItemId> common;
        std::set_intersection(train.begin(), train.end(), test.begin(), test.end(), std::back_inserter(common));
        EXPECT_TRUE(common.empty());
        EXPECT_EQ(train.size() + test.size(), set.size());
        for (std::size_t i = 0; i < split.train_ids.size(); ++i)
            EXPECT_EQ(split.train.labels[i], set.labels[split.train_ids[i]]);
    }
}

TEST(HoldoutSplit, Errors) {
    const auto set = generate_fixture(FixtureSpec{.seed = 1, .num_classes = 2, .count_per_class = 1});
    EXPECT_THROW(holdout_split(set, 0.5, 0), Error);
    EXPECT_THROW(holdout_split(set, 1.0, 0), std::invalid_argument);
}

TEST(RandomSelection, Properties) {
    const auto set = generate_fixture(FixtureSpec{.seed = 2, .num_classes = 3, .count_per_class = 40});
    const auto a = random_selection(set, 10, 1);
    for (const auto& c : a.classes) {
        EXPECT_EQ(c.ids.size(), 10u);
        EXPECT_EQ(std::set<ItemId>(c.ids.begin(), c.ids.end()).size(), 10u);
        for (auto id : c.ids) EXPECT_EQ(set.labels[id], c.class_label);
    }
    EXPECT_EQ(a, random_selection(set, 10, 1));
    bool all_same = true;
    for (std::uint64_t s = 2; s < 7; ++s) all_same = all_same && random_selection(set, 10, s).all_ids() == a.all_ids();
    EXPECT_FALSE(all_same);

    DistillConfig dc;
    dc.per_class = 40;
    auto everything = random_selection(set, 40, 5).all_ids();
    EXPECT_EQ(everything, distill(set, dc).all_ids());
}

TEST(Pipeline, SingleRunEqualsManualComposition) {
    auto cfg = small_config();
    cfg.runs = 1;
    const auto report = run_pipeline(cfg);

    const auto set = generate_fixture(*cfg.fixture);
    const auto split = holdout_split(set, cfg.test_fraction, cfg.seed);
    DistillConfig dc = cfg.distill;
    dc.optimizer.seed = cfg.seed ^ 0;
    const auto selection = distill(split.train, dc);
    LossConfig lc = cfg.loss;
    lc.seed = cfg.seed ^ 0;
    const auto model = train(split.train, selection.all_ids(), lc);
    const auto eval = evaluate(predict_probabilities(model, split.test), split.test.labels, 3);

    ASSERT_EQ(report.runs.size(), 1u);
    EXPECT_EQ(report.runs[0].eval.accuracy, eval.accuracy);
    EXPECT_EQ(report.runs[0].eval.macro_f1, eval.macro_f1);
    EXPECT_EQ(report.runs[0].eval.macro_auc, eval.macro_auc);
    EXPECT_EQ(report.runs[0].selected, 30u);
    EXPECT_EQ(report.accuracy.stddev, 0.0);
}

TEST(Pipeline, SummaryStatsRecomputeFromRows) {
    const auto report = run_pipeline(small_config());
    ASSERT_EQ(report.runs.size(), 3u);
    double mean = 0;
    for (const auto& r : report.runs) mean += r.eval.accuracy;
    mean /= 3;
    double ss = 0;
    for (const auto& r : report.runs) ss += (r.eval.accuracy - mean) * (r.eval.accuracy - mean);
    EXPECT_NEAR(report.accuracy.mean, mean, 1e-15);
    EXPECT_NEAR(report.accuracy.stddev, std::sqrt(ss / 2), 1e-15);

    const std::vector<double> constant{0.7, 0.7, 0.7, 0.7, 0.7};
    EXPECT_EQ(metric_stats(constant).stddev, 0.0);
    EXPECT_EQ(metric_stats(constant).mean, 0.7);
}

TEST(Pipeline, ComparisonReportsPairedDeltas) {
    const auto cmp = run_comparison(small_config());
    ASSERT_EQ(cmp.accuracy_deltas.size(), 3u);
    for (std::size_t r = 0; r < 3; ++r) {
        EXPECT_EQ(cmp.accuracy_deltas[r], cmp.infodist.runs[r].eval.accuracy - cmp.random.runs[r].eval.accuracy);
        EXPECT_EQ(cmp.infodist.runs[r].seed, cmp.random.runs[r].seed);
    }
    const auto j = to_json(cmp);
    EXPECT_EQ(j["accuracy_deltas"].size(), 3u);
    EXPECT_NE(format_table(cmp).find("paired accuracy deltas"), std::string::npos);
}

TEST(Pipeline, ArtifactsAndDeterministicSummary) {
    auto cfg = small_config();
    cfg.output_dir = fresh_dir("artifacts");
    const auto first = write_summary(cfg, to_json(run_pipeline(cfg)), format_table(run_pipeline(cfg)));
    std::size_t selections = 0, models = 0;
    for (const auto& entry : std::filesystem::directory_iterator(cfg.output_dir)) {
        const auto name = entry.path().filename().string();
        selections += name.starts_with("selection-infodist-") && name.ends_with(".tsv");
        models += name.starts_with("model-infodist-");
    }
    EXPECT_EQ(selections, 3u);
    EXPECT_EQ(models, 3u);
    EXPECT_EQ(slurp(cfg.output_dir / "summary.json"), first);

    // Second invocation reuses the cached selections and must agree byte for byte.
    auto cold = cfg;
    cold.output_dir = fresh_dir("cold");
    cold.reuse_artifacts = false;
    const auto second = write_summary(cfg, to_json(run_pipeline(cfg)), "");
    EXPECT_EQ(first, second);
    const auto uncached = to_json(run_pipeline(cold));
    EXPECT_EQ(uncached.dump(), to_json(run_pipeline(cfg)).dump());
}

TEST(Pipeline, ParallelRunsMatchSequential) {
    auto cfg = small_config();
    const auto seq = to_json(run_pipeline(cfg)).dump();
    cfg.parallel_runs = true;
    EXPECT_EQ(to_json(run_pipeline(cfg)).dump(), seq);
}

TEST(Pipeline, StageErrorsNameStageAndRun) {
    auto cfg = small_config();
    cfg.distill.per_class = 1000;
    try {
        run_pipeline(cfg);
        FAIL() << "expected failure";
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("stage 'select' failed in run 0"), std::string::npos) << msg;
    }
}
