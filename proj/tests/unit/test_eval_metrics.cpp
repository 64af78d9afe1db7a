#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "infodist/eval_metrics.hpp"
#include "oracles.hpp"

using namespace infodist;

namespace {

std::optional<double> auc_of(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<std::uint8_t> pos(labels.begin(), labels.end());
    return binary_auc(scores, pos);
}

}  // namespace

TEST(Accuracy, Examples) {
    const std::vector<ClassLabel> truth{0, 1, 2, 1};
    EXPECT_EQ(accuracy(truth, truth), 1.0);
    const std::vector<ClassLabel> half{0, 2, 2, 0};
    EXPECT_EQ(accuracy(half, truth), 0.5);
    EXPECT_THROW(accuracy(std::vector<ClassLabel>{0}, truth), std::invalid_argument);
    EXPECT_THROW(accuracy(std::vector<ClassLabel>{}, std::vector<ClassLabel>{}), std::invalid_argument);
}

TEST(Accuracy, MatchesCountingOracle) {
    std::mt19937_64 gen(4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ClassLabel> p(100), t(100);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < 100; ++i) {
            p[i] = gen() % 5;
            t[i] = gen() % 5;
            if (p[i] == t[i]) ++hits;
        }
        EXPECT_EQ(accuracy(p, t), hits / 100.0);
    }
}

TEST(Argmax, TiesGoToSmallestIndex) {
    DenseMatrix s(2, 3, 0.0);
    s(0, 1) = s(0, 2) = 0.5;
    EXPECT_EQ(argmax_rows(s), (std::vector<ClassLabel>{1, 0}));
}

TEST(F1, HandConfusionTable) {
    // truth:      0 0 1 1 2 2
    // prediction: 0 1 1 1 0 2
    // class 0: TP 1 FP 1 FN 1 -> 0.5
    // class 1: TP 2 FP 1 FN 0 -> 0.8
    // class 2: TP 1 FP 0 FN 1 -> 2/3
    const std::vector<ClassLabel> truth{0, 0, 1, 1, 2, 2};
    const std::vector<ClassLabel> pred{0, 1, 1, 1, 0, 2};
    const auto f1 = per_class_f1(pred, truth, 3);
    EXPECT_EQ(f1[0], 0.5);
    EXPECT_EQ(f1[1], 0.8);
    EXPECT_EQ(f1[2], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(macro_f1(pred, truth, 3), (0.5 + 0.8 + 2.0 / 3.0) / 3.0);
    EXPECT_DOUBLE_EQ(f1_score(pred, truth, 3, Averaging::Micro), 4.0 / 6.0);
    EXPECT_DOUBLE_EQ(f1_score(pred, truth, 3, Averaging::Weighted), (0.5 + 0.8 + 2.0 / 3.0) * 2.0 / 6.0);
}

TEST(F1, PerfectAndAbsentClass) {
    const std::vector<ClassLabel> t{0, 1, 0, 1};
    EXPECT_EQ(macro_f1(t, t, 2), 1.0);
    const auto f1 = per_class_f1(t, t, 3);
    EXPECT_EQ(f1[2], 0.0);
    EXPECT_DOUBLE_EQ(macro_f1(t, t, 3), 2.0 / 3.0);
}

TEST(Auc, EightItemCase) {
    const std::vector<double> scores{.9, .8, .7, .6, .4, .3, .2, .1};
    // labels (1,1,0,1,0,0,1,0): positives beat 4 + 4 + 3 + 1 negatives
    const std::vector<int> labels{1, 1, 0, 1, 0, 0, 1, 0};
    EXPECT_EQ(*auc_of(scores, labels), 12.0 / 16.0);
    EXPECT_EQ(*auc_of(scores, labels), oracle::pairwise_auc(scores, labels));
    // labels (1,1,0,1,0,1,0,0): 4 + 4 + 3 + 2 concordant pairs
    const std::vector<int> shifted{1, 1, 0, 1, 0, 1, 0, 0};
    EXPECT_EQ(*auc_of(scores, shifted), 13.0 / 16.0);
    EXPECT_EQ(*auc_of(scores, shifted), oracle::pairwise_auc(scores, shifted));
}

TEST(Auc, PerfectTiedAndUndefined) {
    EXPECT_EQ(*auc_of({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0);
    EXPECT_EQ(*auc_of({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}), 0.5);
    EXPECT_FALSE(auc_of({0.1, 0.2}, {1, 1}));
}

TEST(Auc, RandomCasesMatchPairwiseOracleAndMonotoneInvariance) {
    std::mt19937_64 gen(13);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 5 + gen() % 40;
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = double(gen() % 10) / 10.0;  // coarse grid forces ties
            y[i] = static_cast<int>(gen() % 2);
        }
        y[0] = 1;
        y[1] = 0;
        const double a = *auc_of(s, y);
        EXPECT_EQ(a, oracle::pairwise_auc(s, y));
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
        EXPECT_EQ(*auc_of(t, y), a);
    }
}

TEST(Auc, OneVsRestSkipsUndefinedClasses) {
    DenseMatrix probs(4, 3, 0.0);
    const double rows[4][3] = {{.7, .2, .1}, {.6, .3, .1}, {.2, .7, .1}, {.1, .8, .1}};
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 3; ++c) probs(i, c) = rows[i][c];
    const std::vector<ClassLabel> truth{0, 0, 1, 1};
    const auto r = ovr_auc(probs, truth, 3);
    EXPECT_EQ(r.value, 1.0);
    EXPECT_TRUE(std::isnan(r.per_class[2]));
    EXPECT_FALSE(r.defined[2]);

    const std::vector<ClassLabel> single{0, 0, 0, 0};
    EXPECT_THROW(ovr_auc(probs, single, 3), Error);
}

TEST(Evaluate, ReportAndSerialisation) {
    DenseMatrix probs(4, 2, 0.0);
    const double rows[4][2] = {{.9, .1}, {.4, .6}, {.3, .7}, {.8, .2}};
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 2; ++c) probs(i, c) = rows[i][c];
    const std::vector<ClassLabel> truth{0, 0, 1, 1};
    const auto r = evaluate(probs, truth, 2);
    EXPECT_EQ(r.accuracy, 0.5);
    EXPECT_EQ(r.n_items, 4u);
    EXPECT_EQ(r.macro_auc, oracle::pairwise_auc({.9, .4, .3, .8}, {1, 1, 0, 0}));
    const auto kv = to_key_value(r);
    EXPECT_NE(kv.find("accuracy = 0.500000\n"), std::string::npos);
    const auto j = to_json(r);
    EXPECT_EQ(j["n_items"], 4);

    // Item order does not matter.
    DenseMatrix swapped(4, 2, 0.0);
    const int perm[4] = {2, 0, 3, 1};
    std::vector<ClassLabel> t2(4);
    for (int i = 0; i < 4; ++i) {
        for (int c = 0; c < 2; ++c) swapped(i, c) = probs(perm[i], c);
        t2[i] = truth[perm[i]];
    }
    const auto r2 = evaluate(swapped, t2, 2);
    EXPECT_EQ(r2.accuracy, r.accuracy);
    EXPECT_EQ(r2.macro_f1, r.macro_f1);
    EXPECT_EQ(r2.macro_auc, r.macro_auc);
}
