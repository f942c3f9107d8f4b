#include <gtest/gtest.h>

#include "oracles.hpp"
#include "plrefine/segmenter.hpp"

using namespace plrefine;

namespace {

LabelMap disc_scene(int size, int cx, int cy, int r, ClassId cls) {
    LabelMap gt(size, size, cls::kBackground);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) gt.at(x, y) = cls;
    return gt;
}

BinaryMask class_region(const LabelMap& gt, int x, int y) {
    const BinaryMask m = extract_class_mask(gt, gt.at(x, y), 256);
    std::uint32_t count = 0;
    const auto ids = oracle::flood_fill_components(m, count);
    const auto id = ids[static_cast<std::size_t>(y) * gt.width + x];
    BinaryMask out(gt.width, gt.height);
    for (std::size_t i = 0; i < ids.size(); ++i) out.bits[i] = ids[i] == id ? 1 : 0;
    return out;
}

LabelMap random_blocks(int w, int h, RngStream& rng) {
    LabelMap gt(w, h, 0);
    for (auto& v : gt.labels) v = static_cast<ClassId>(rng.below(3));
    return gt;
}

}  // namespace

TEST(PerfectOracle, PointInsideDiscReturnsTheDisc) {
    const LabelMap gt = disc_scene(32, 12, 14, 6, cls::kCar);
    const ImageBuf img(32, 32);
    RngStream rng(1);
    const BinaryMask m = segment_at_points(img, gt, {{12, 14, cls::kCar}}, PerfectOracle{}, rng);
    EXPECT_EQ(m, extract_class_mask(gt, cls::kCar, 8));
}

TEST(PerfectOracle, TwoRegionsGiveTheirUnion) {
    LabelMap gt = disc_scene(40, 10, 10, 4, cls::kCar);
    for (int y = 25; y < 35; ++y)
        for (int x = 20; x < 30; ++x) gt.at(x, y) = cls::kBuilding;
    const ImageBuf img(40, 40);
    RngStream rng(1);
    const BinaryMask m =
        segment_at_points(img, gt, {{10, 10, cls::kCar}, {22, 30, cls::kCar}}, PerfectOracle{}, rng);
    EXPECT_EQ(m, mask_union(extract_class_mask(gt, cls::kCar, 8), extract_class_mask(gt, cls::kBuilding, 8)));
}

TEST(PerfectOracle, OutputIsUnionOfWholeGroundTruthComponents) {
    RngStream rng(77);
    for (int t = 0; t < 100; ++t) {
        const LabelMap gt = random_blocks(16, 12, rng);
        const ImageBuf img(16, 12);
        std::vector<PointPrompt> points;
        BinaryMask expected(16, 12);
        const auto n = 1 + rng.below(4);
        for (std::uint64_t i = 0; i < n; ++i) {
            const int x = static_cast<int>(rng.below(16)), y = static_cast<int>(rng.below(12));
            points.push_back({x, y, static_cast<ClassId>(rng.below(8))});
            expected = mask_union(expected, class_region(gt, x, y));
        }
        EXPECT_EQ(segment_at_points(img, gt, points, PerfectOracle{}, rng), expected) << "case " << t;
    }
}

TEST(Segmenters, IgnoreClaimedClass) {
    const LabelMap gt = disc_scene(24, 12, 12, 5, cls::kPerson);
    const ImageBuf img(24, 24);
    const SegmenterKind kinds[] = {PerfectOracle{}, NoisyOracle{2, 0.3}, ConstantMask{}};
    for (const auto& kind : kinds) {
        RngStream a(5), b(5);
        const BinaryMask ma = segment_at_points(img, gt, {{12, 12, cls::kPerson}}, kind, a);
        const BinaryMask mb = segment_at_points(img, gt, {{12, 12, cls::kSign}}, kind, b);
        EXPECT_EQ(ma, mb) << segmenter_name(kind);
    }
}

TEST(NoisyOracle, ZeroRadiusEqualsPerfect) {
    RngStream rng(3);
    for (int t = 0; t < 20; ++t) {
        const LabelMap gt = random_blocks(12, 12, rng);
        const ImageBuf img(12, 12);
        RngStream a = rng.fork("a", t), b = rng.fork("b", t);
        EXPECT_EQ(segment_at_points(img, gt, {{3, 4, 0}}, NoisyOracle{0, 0.0}, a),
                  segment_at_points(img, gt, {{3, 4, 0}}, PerfectOracle{}, b));
    }
}

TEST(NoisyOracle, DifferenceStaysInsideBoundaryBand) {
    LabelMap gt(24, 24, cls::kBackground);
    for (int y = 7; y < 17; ++y)
        for (int x = 7; x < 17; ++x) gt.at(x, y) = cls::kBuilding;
    const ImageBuf img(24, 24);
    RngStream pr(0);
    const BinaryMask perfect = segment_at_points(img, gt, {{10, 10, 0}}, PerfectOracle{}, pr);
    const auto band = oracle::brute_opposite_distance(perfect, 1 << 29);
    std::size_t total_changed = 0;
    for (double flip : {0.0, 0.5, 1.0}) {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            RngStream rng(seed);
            const BinaryMask noisy = segment_at_points(img, gt, {{10, 10, 0}}, NoisyOracle{2, flip}, rng);
            for (std::size_t i = 0; i < noisy.bits.size(); ++i)
                if (noisy.bits[i] != perfect.bits[i]) {
                    ++total_changed;
                    EXPECT_LE(band[i], 2) << "pixel " << i << " seed " << seed;
                }
        }
    }
    EXPECT_GT(total_changed, 0u);
}

TEST(NoisyOracle, FixedStreamGivesFixedOutput) {
    const LabelMap gt = disc_scene(32, 16, 16, 8, cls::kCar);
    const ImageBuf img(32, 32);
    RngStream a(42), b(42), c(43);
    const BinaryMask ma = segment_at_points(img, gt, {{16, 16, 3}}, NoisyOracle{2, 0.2}, a);
    EXPECT_EQ(ma, segment_at_points(img, gt, {{16, 16, 3}}, NoisyOracle{2, 0.2}, b));
    EXPECT_NE(ma, segment_at_points(img, gt, {{16, 16, 3}}, NoisyOracle{2, 0.2}, c));
}

TEST(ConstantMaskTest, ReturnsFixedOrEmptyMask) {
    const LabelMap gt = disc_scene(8, 4, 4, 2, cls::kCar);
    const ImageBuf img(8, 8);
    RngStream rng(0);
    EXPECT_EQ(segment_at_points(img, gt, {{0, 0, 0}}, ConstantMask{}, rng), BinaryMask(8, 8));
    BinaryMask fixed(8, 8);
    fixed.set(7, 7);
    EXPECT_EQ(segment_at_points(img, gt, {{4, 4, 0}}, ConstantMask{fixed}, rng), fixed);
    EXPECT_THROW(segment_at_points(img, gt, {{4, 4, 0}}, ConstantMask{BinaryMask(4, 4)}, rng), ValidationError);
}

TEST(Segmenters, RejectBadInputs) {
    const LabelMap gt(8, 8, 0);
    const ImageBuf img(8, 8);
    RngStream rng(0);
    EXPECT_THROW(segment_at_points(img, gt, {}, PerfectOracle{}, rng), ValidationError);
    EXPECT_THROW(segment_at_points(img, gt, {{8, 0, 0}}, PerfectOracle{}, rng), ValidationError);
    EXPECT_THROW(segment_at_points(img, gt, {{0, -1, 0}}, PerfectOracle{}, rng), ValidationError);
    EXPECT_THROW(segment_at_points(ImageBuf(8, 9), gt, {{0, 0, 0}}, PerfectOracle{}, rng), ValidationError);
    EXPECT_THROW(segment_at_points(img, gt, {{0, 0, 0}}, NoisyOracle{-1, 0.0}, rng), ValidationError);
    EXPECT_THROW(segment_at_points(img, gt, {{0, 0, 0}}, NoisyOracle{1, 1.5}, rng), ValidationError);
}
