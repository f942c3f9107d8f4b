#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "plrefine/metrics.hpp"

using namespace plrefine;

namespace {

LabelMap random_map(int w, int h, std::size_t C, double unlabeled_rate, RngStream& rng) {
    LabelMap m(w, h);
    for (auto& v : m.labels) v = rng.bernoulli(unlabeled_rate) ? kUnlabeled : static_cast<ClassId>(rng.below(C));
    return m;
}

}  // namespace

TEST(Confusion, MatchesNaiveDoubleLoop) {
    RngStream rng(8);
    for (int t = 0; t < 100; ++t) {
        const LabelMap gt = random_map(8, 8, 8, 0.1, rng), pred = random_map(8, 8, 8, 0.0, rng);
        ConfusionMatrix cm(8);
        cm.accumulate(gt, pred);
        const auto naive = oracle::naive_confusion(gt, pred, 8);
        for (std::size_t g = 0; g < 8; ++g)
            for (std::size_t p = 0; p < 8; ++p) ASSERT_EQ(cm.at(g, p), naive[g][p]) << "pair " << t;
    }
}

TEST(Confusion, HandCaseMiou) {
    ConfusionMatrix cm(2);
    cm.add(0, 0, 4);
    cm.add(0, 1, 4);
    cm.add(1, 1, 8);
    EXPECT_NEAR(*cm.iou(0), 0.5, 1e-12);
    EXPECT_NEAR(*cm.iou(1), 8.0 / 12.0, 1e-12);
    EXPECT_NEAR(*cm.miou(), 0.5833333333333333, 1e-9);
    EXPECT_NEAR(*cm.pixel_accuracy(), 0.75, 1e-12);
}

TEST(Confusion, UnlabeledGroundTruthIsExcluded) {
    RngStream rng(1);
    ConfusionMatrix cm(8);
    cm.accumulate(LabelMap(5, 5, kUnlabeled), random_map(5, 5, 8, 0.0, rng));
    EXPECT_EQ(cm.total(), 0u);
    EXPECT_FALSE(cm.miou().has_value());
    EXPECT_FALSE(cm.pixel_accuracy().has_value());
    const auto j = metrics_json(cm, default_catalog());
    EXPECT_TRUE(j.at("miou").is_null());
    EXPECT_EQ(j.at("evaluated_pixels"), 0);
}

TEST(Confusion, PerfectPredictionGrowsOnlyTheDiagonal) {
    RngStream rng(2);
    const LabelMap gt = random_map(9, 7, 8, 0.2, rng);
    ConfusionMatrix cm(8);
    cm.accumulate(gt, gt);
    std::uint64_t labeled = 0, diag = 0;
    for (auto v : gt.labels) labeled += v != kUnlabeled;
    for (std::size_t c = 0; c < 8; ++c) diag += cm.at(c, c);
    EXPECT_EQ(cm.total(), labeled);
    EXPECT_EQ(diag, labeled);
    EXPECT_EQ(*cm.miou(), 1.0);
}

TEST(Confusion, AbsentClassesAreExcluded) {
    ConfusionMatrix cm(8);
    cm.add(1, 1, 10);
    cm.add(2, 3, 5);
    EXPECT_FALSE(cm.iou(0).has_value());
    EXPECT_EQ(*cm.iou(3), 0.0);
    EXPECT_NEAR(*cm.miou(MiouMode::kOverAllClasses), 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(*cm.miou(MiouMode::kOverPresent), 0.5, 1e-12);
}

TEST(Confusion, ConstantClassZeroOnBalancedGroundTruth) {
    LabelMap gt(4, 4, 0), pred(4, 4, 0);
    for (std::size_t i = 8; i < 16; ++i) gt.labels[i] = 1;
    ConfusionMatrix cm(2);
    cm.accumulate(gt, pred);
    EXPECT_NEAR(*cm.iou(0), 0.5, 1e-12);
    EXPECT_EQ(*cm.iou(1), 0.0);
    EXPECT_NEAR(*cm.miou(), 0.25, 1e-12);
}

TEST(Confusion, PermutationEquivariance) {
    RngStream rng(3);
    std::vector<ClassId> perm(8);
    std::iota(perm.begin(), perm.end(), ClassId{0});
    for (int t = 0; t < 20; ++t) {
        for (std::size_t i = 7; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
        LabelMap gt = random_map(10, 10, 8, 0.1, rng), pred = random_map(10, 10, 8, 0.0, rng);
        ConfusionMatrix a(8), b(8);
        a.accumulate(gt, pred);
        for (auto& v : gt.labels)
            if (v != kUnlabeled) v = perm[v];
        for (auto& v : pred.labels) v = perm[v];
        b.accumulate(gt, pred);
        for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(a.iou(c), b.iou(perm[c]));
        EXPECT_NEAR(*a.miou(), *b.miou(), 1e-12);
    }
}

TEST(Confusion, AccumulationIsAssociative) {
    RngStream rng(4);
    const int n = 6;
    ConfusionMatrix merged(8), streamed(8);
    LabelMap all_gt(8, 8 * n), all_pred(8, 8 * n);
    for (int i = 0; i < n; ++i) {
        const LabelMap gt = random_map(8, 8, 8, 0.1, rng), pred = random_map(8, 8, 8, 0.0, rng);
        std::copy(gt.labels.begin(), gt.labels.end(), all_gt.labels.begin() + i * 64);
        std::copy(pred.labels.begin(), pred.labels.end(), all_pred.labels.begin() + i * 64);
        merged += accumulate(ConfusionMatrix(8), gt, pred);
    }
    streamed.accumulate(all_gt, all_pred);
    EXPECT_EQ(merged, streamed);
}

TEST(Confusion, IouIsBounded) {
    RngStream rng(5);
    for (int t = 0; t < 50; ++t) {
        ConfusionMatrix cm(8);
        cm.accumulate(random_map(6, 6, 8, 0.3, rng), random_map(6, 6, 8, 0.0, rng));
        for (std::size_t c = 0; c < 8; ++c)
            if (auto v = cm.iou(c)) {
                EXPECT_GE(*v, 0.0);
                EXPECT_LE(*v, 1.0);
            }
    }
}

TEST(Confusion, RejectsBadInput) {
    ConfusionMatrix cm(8);
    EXPECT_THROW(cm.accumulate(LabelMap(2, 2, 0), LabelMap(2, 3, 0)), ValidationError);
    EXPECT_THROW(cm.accumulate(LabelMap(2, 2, 0), LabelMap(2, 2, kUnlabeled)), ValidationError);
    EXPECT_THROW(cm += ConfusionMatrix(4), ValidationError);
}

TEST(MetricsJson, HasDocumentedShape) {
    ConfusionMatrix cm(8);
    cm.add(0, 0, 3);
    cm.add(0, 1, 1);
    const auto j = metrics_json(cm, default_catalog());
    EXPECT_NEAR(j.at("miou").get<double>(), (0.75 + 0.0) / 2.0, 1e-12);
    ASSERT_EQ(j.at("per_class").size(), 8u);
    EXPECT_EQ(j.at("per_class")[0].at("name"), "background");
    EXPECT_EQ(j.at("per_class")[0].at("pixels"), 4);
    EXPECT_TRUE(j.at("per_class")[5].at("iou").is_null());
    EXPECT_EQ(j.at("evaluated_pixels"), 4);
}
