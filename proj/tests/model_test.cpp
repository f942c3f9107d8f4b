#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "plrefine/model.hpp"

using namespace plrefine;

namespace {

ImageBuf random_image(int w, int h, RngStream& rng) {
    ImageBuf img(w, h);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}

LabelMap random_labels(int w, int h, std::size_t C, double unlabeled_rate, RngStream& rng) {
    LabelMap m(w, h);
    for (auto& v : m.labels)
        v = rng.bernoulli(unlabeled_rate) ? kUnlabeled : static_cast<ClassId>(rng.below(C));
    return m;
}

ModelParams random_params(std::size_t C, RngStream& rng, double scale = 0.5) {
    ModelParams p = ModelParams::zeros(C);
    for (auto& v : p.W) v = scale * rng.normal();
    for (auto& v : p.b) v = scale * rng.normal();
    return p;
}

double loss_at(const std::vector<double>& logits, int w, int h, std::size_t C, const LabelMap& t,
               const LossWeights& lw) {
    return loss_and_grad(softmax(logits, w, h, C), t, lw).total;
}

/// Norm-wise relative error between the analytic and central-difference
/// gradients of the loss with respect to the logits.
double logit_gradient_error(const std::vector<double>& logits, int w, int h, std::size_t C, const LabelMap& t,
                            const LossWeights& lw) {
    const auto analytic = loss_and_grad(softmax(logits, w, h, C), t, lw).grad_logits;
    const double step = 1e-5;
    double diff = 0, na = 0, nn = 0;
    std::vector<double> z = logits;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double keep = z[i];
        z[i] = keep + step;
        const double up = loss_at(z, w, h, C, t, lw);
        z[i] = keep - step;
        const double down = loss_at(z, w, h, C, t, lw);
        z[i] = keep;
        const double numeric = (up - down) / (2 * step);
        diff += (numeric - analytic[i]) * (numeric - analytic[i]);
        na += analytic[i] * analytic[i];
        nn += numeric * numeric;
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
}

double pixel_accuracy(const LabelMap& a, const LabelMap& b) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < a.labels.size(); ++i) ok += a.labels[i] == b.labels[i];
    return static_cast<double>(ok) / static_cast<double>(a.labels.size());
}

}  // namespace

TEST(Features, ConstantGrayImage) {
    const ImageBuf img(7, 5, 3, 0.4f);
    const FeatureMap f = extract_features(img);
    ASSERT_EQ(f.dim, 8);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        EXPECT_NEAR(f.pixel(i)[5], 0.4, 1e-6);
        EXPECT_EQ(f.pixel(i)[6], 0.0);
        EXPECT_EQ(f.pixel(i)[7], 1.0);
    }
}

TEST(Features, MatchNaiveRecomputation) {
    RngStream rng(3);
    const int W = 9, H = 6;
    const ImageBuf img = random_image(W, H, rng);
    const FeatureMap f = extract_features(img);
    auto lum = [&](int x, int y) {
        x = std::min(std::max(x, 0), W - 1);
        y = std::min(std::max(y, 0), H - 1);
        return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    };
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double* v = f.pixel(static_cast<std::size_t>(y) * W + x);
            EXPECT_EQ(v[0], img.at(x, y, 0));
            EXPECT_EQ(v[1], img.at(x, y, 1));
            EXPECT_EQ(v[2], img.at(x, y, 2));
            EXPECT_NEAR(v[3], x / double(W - 1), 1e-15);
            EXPECT_NEAR(v[4], y / double(H - 1), 1e-15);
            double s = 0, s2 = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    s += lum(x + dx, y + dy);
                    s2 += lum(x + dx, y + dy) * lum(x + dx, y + dy);
                }
            const double mean = s / 9;
            EXPECT_NEAR(v[5], mean, 1e-6);
            EXPECT_NEAR(v[6], std::sqrt(std::max(0.0, s2 / 9 - mean * mean)), 1e-5);
            EXPECT_EQ(v[7], 1.0);
        }
}

TEST(Features, HorizontalFlipSymmetry) {
    RngStream rng(5);
    const int W = 8, H = 5;
    const ImageBuf img = random_image(W, H, rng);
    const FeatureMap f = extract_features(img), g = extract_features(flip_horizontal(img));
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double* a = f.pixel(static_cast<std::size_t>(y) * W + x);
            const double* b = g.pixel(static_cast<std::size_t>(y) * W + (W - 1 - x));
            for (int d : {0, 1, 2, 4, 5, 6, 7}) EXPECT_NEAR(a[d], b[d], 1e-12) << "channel " << d;
            EXPECT_NEAR(a[3], 1.0 - b[3], 1e-12);
        }
}

TEST(Forward, ZeroParamsGiveUniform) {
    RngStream rng(1);
    const ProbMap p = forward(ModelParams::zeros(8), extract_features(random_image(5, 4, rng)));
    for (double v : p.p) EXPECT_NEAR(v, 1.0 / 8.0, 1e-15);
}

TEST(Forward, DominantBias) {
    RngStream rng(1);
    ModelParams m = ModelParams::zeros(8);
    m.b[0] = 10.0;
    const ProbMap p = forward(m, extract_features(random_image(5, 4, rng)));
    for (std::size_t i = 0; i < p.pixel_count(); ++i) EXPECT_GT(p.p[i * 8], 0.999);
}

TEST(Forward, ShiftInvarianceAndNormalization) {
    RngStream rng(2);
    std::vector<double> z(6 * 5 * 8);
    for (auto& v : z) v = 3.0 * rng.normal();
    std::vector<double> shifted = z;
    for (auto& v : shifted) v += 123.25;
    const ProbMap a = softmax(z, 6, 5, 8), b = softmax(shifted, 6, 5, 8);
    for (std::size_t i = 0; i < a.p.size(); ++i) EXPECT_NEAR(a.p[i], b.p[i], 1e-9);
    for (std::size_t i = 0; i < a.pixel_count(); ++i) {
        double s = 0;
        for (std::size_t c = 0; c < 8; ++c) s += a.p[i * 8 + c];
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(Forward, LargeLogitsStayFinite) {
    std::vector<double> z(8, 0.0);
    z[3] = 1e4;
    const ProbMap p = softmax(z, 1, 1, 8);
    EXPECT_EQ(p.p[3], 1.0);
    for (double v : p.p) EXPECT_TRUE(std::isfinite(v));
}

TEST(Loss, PerfectPrediction) {
    LabelMap t(4, 3, 0);
    for (std::size_t i = 0; i < t.labels.size(); ++i) t.labels[i] = static_cast<ClassId>(i % 3);
    ProbMap p{4, 3, 8, std::vector<double>(12 * 8, 0.0)};
    for (std::size_t i = 0; i < 12; ++i) p.p[i * 8 + t.labels[i]] = 1.0;
    const LossResult r = loss_and_grad(p, t, {});
    EXPECT_NEAR(r.ce, 0.0, 1e-12);
    EXPECT_NEAR(r.dice, 0.0, 1e-12);
    EXPECT_LT(r.cls, 1e-6);
}

TEST(Loss, UniformCrossEntropyIsLogC) {
    LabelMap t(5, 5, 2);
    ProbMap p{5, 5, 8, std::vector<double>(25 * 8, 1.0 / 8.0)};
    EXPECT_NEAR(loss_and_grad(p, t, {1, 0, 0}).ce, std::log(8.0), 1e-12);
}

TEST(Loss, AllUnlabeledIsZero) {
    RngStream rng(4);
    std::vector<double> z(3 * 3 * 8);
    for (auto& v : z) v = rng.normal();
    const LossResult r = loss_and_grad(softmax(z, 3, 3, 8), LabelMap(3, 3, kUnlabeled), {});
    EXPECT_EQ(r.total, 0.0);
    EXPECT_EQ(r.labeled_pixels, 0u);
    for (double g : r.grad_logits) EXPECT_EQ(g, 0.0);
}

TEST(Loss, RejectsMismatchAndBadLabels) {
    ProbMap p{2, 2, 8, std::vector<double>(32, 1.0 / 8)};
    EXPECT_THROW(loss_and_grad(p, LabelMap(2, 3, 0), {}), ValidationError);
    EXPECT_THROW(loss_and_grad(p, LabelMap(2, 2, 9), {}), ValidationError);
}

class GradientCheck : public ::testing::TestWithParam<int> {};

TEST_P(GradientCheck, AnalyticMatchesCentralDifferences) {
    const int term = GetParam();
    const LossWeights lw{term == 0 ? 1.0 : 0.0, term == 1 ? 1.0 : 0.0, term == 2 ? 1.0 : 0.0};
    RngStream rng(100 + static_cast<std::uint64_t>(term));
    for (int inst = 0; inst < 20; ++inst) {
        const int w = 2 + static_cast<int>(rng.below(4)), h = 2 + static_cast<int>(rng.below(4));
        const LabelMap t = random_labels(w, h, 8, 0.2, rng);
        std::vector<double> z(static_cast<std::size_t>(w) * h * 8);
        for (auto& v : z) v = 1.5 * rng.normal();
        EXPECT_LT(logit_gradient_error(z, w, h, 8, t, lw), 1e-4) << "instance " << inst;
    }
}

std::string loss_term_name(const ::testing::TestParamInfo<int>& info) {
    static const char* names[] = {"CrossEntropy", "Dice", "Presence"};
    return names[info.param];
}

INSTANTIATE_TEST_SUITE_P(LossTerms, GradientCheck, ::testing::Values(0, 1, 2), loss_term_name);

TEST(Loss, ParameterGradientMatchesFiniteDifferences) {
    RngStream rng(9);
    const int w = 4, h = 3;
    const FeatureMap f = extract_features(random_image(w, h, rng));
    const LabelMap t = random_labels(w, h, 8, 0.1, rng);
    ModelParams m = random_params(8, rng);
    for (std::size_t i = 0; i < m.mix.size(); ++i) m.mix[i] += 0.1 * rng.normal();
    const LossWeights lw{};
    auto total = [&](const ModelParams& q) { return loss_and_grad(forward(q, f), t, lw).total; };
    const LossResult r = loss_and_grad(forward(m, f), t, lw);
    ModelParams g = m.zeros_like();
    accumulate_param_grad(m, f, r.grad_logits, true, 1.0, g);
    const double step = 1e-6;
    auto check_block = [&](std::vector<double> ModelParams::*block) {
        for (std::size_t i = 0; i < (m.*block).size(); ++i) {
            ModelParams up = m, down = m;
            (up.*block)[i] += step;
            (down.*block)[i] -= step;
            const double numeric = (total(up) - total(down)) / (2 * step);
            EXPECT_NEAR((g.*block)[i], numeric, 1e-6 + 1e-4 * std::abs(numeric)) << "entry " << i;
        }
    };
    check_block(&ModelParams::W);
    check_block(&ModelParams::b);
    check_block(&ModelParams::mix);
}

TEST(Loss, UnlabeledPixelsCarryNoSignal) {
    RngStream rng(12);
    std::vector<double> z(5 * 4 * 8);
    for (auto& v : z) v = rng.normal();
    const ProbMap p = softmax(z, 5, 4, 8);
    LabelMap t = random_labels(5, 4, 8, 0.0, rng);
    t.labels[7] = kUnlabeled;
    const LossResult base = loss_and_grad(p, t, {});
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(base.grad_logits[7 * 8 + c], 0.0);
    std::vector<double> moved = z;
    for (std::size_t c = 0; c < 8; ++c) moved[7 * 8 + c] = 5.0 * rng.normal();
    const LossResult other = loss_and_grad(softmax(moved, 5, 4, 8), t, {});
    EXPECT_NEAR(base.ce, other.ce, 1e-15);
    EXPECT_NEAR(base.dice, other.dice, 1e-15);
    EXPECT_NEAR(base.cls, other.cls, 1e-15);
    EXPECT_EQ(base.labeled_pixels, 19u);
}

TEST(Sgd, ZeroGradientIsFixedPoint) {
    RngStream rng(1);
    const ModelParams m = random_params(8, rng);
    EXPECT_EQ(sgd_step(m, m.zeros_like(), 0.3, true), m);
}

TEST(Sgd, UnitStepOnOwnWeightsZeroesThem) {
    RngStream rng(2);
    const ModelParams m = random_params(8, rng);
    ModelParams g = m.zeros_like();
    g.W = m.W;
    const ModelParams out = sgd_step(m, g, 1.0, false);
    for (double v : out.W) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(out.b, m.b);
}

TEST(Sgd, FrozenMixIsBitIdentical) {
    RngStream rng(3);
    const ModelParams m = random_params(8, rng);
    ModelParams g = m.zeros_like();
    for (auto& v : g.mix) v = rng.normal();
    ModelParams cur = m;
    for (int i = 0; i < 50; ++i) cur = sgd_step(cur, g, 0.1, false);
    EXPECT_EQ(cur.mix, m.mix);
    EXPECT_NE(sgd_step(m, g, 0.1, true).mix, m.mix);
}

TEST(Sgd, RejectsBadInput) {
    const ModelParams m = ModelParams::zeros(8);
    ModelParams g = m.zeros_like();
    EXPECT_THROW(sgd_step(m, g, 0.0, false), ValidationError);
    g.W[3] = std::nan("");
    EXPECT_THROW(sgd_step(m, g, 0.1, false), NumericalError);
    EXPECT_THROW(sgd_step(m, ModelParams::zeros(4), 0.1, false), ValidationError);
}

TEST(Sgd, SeparableToyConverges) {
    // Dark pixels are class 0, bright pixels class 1.
    RngStream rng(7);
    const int W = 16, H = 16;
    ImageBuf img(W, H);
    LabelMap t(W, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const bool bright = rng.bernoulli(0.5);
            const float v = bright ? static_cast<float>(rng.uniform(0.6, 1.0)) : static_cast<float>(rng.uniform(0.0, 0.4));
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
            t.at(x, y) = bright ? 1 : 0;
        }
    const FeatureMap f = extract_features(img);
    ModelParams m = ModelParams::zeros(2);
    for (int step = 0; step < 200; ++step) {
        const LossResult r = loss_and_grad(forward(m, f), t, {});
        ModelParams g = m.zeros_like();
        accumulate_param_grad(m, f, r.grad_logits, false, 1.0, g);
        m = sgd_step(m, g, 1.0, false);
    }
    EXPECT_GE(pixel_accuracy(argmax_labels(forward(m, f)), t), 0.99);
}

TEST(Augment, NoJitterNoFlipIsIdentity) {
    RngStream rng(1);
    const ImageBuf img = random_image(6, 4, rng);
    const LabelMap lab = random_labels(6, 4, 8, 0.1, rng);
    const Augmented a = augment(img, lab, rng, {0.0, 0.0, 0.0, 0.0});
    EXPECT_EQ(a.image, img);
    EXPECT_EQ(a.labels, lab);
    EXPECT_FALSE(a.record.flipped);
}

TEST(Augment, ForcedFlipTwiceIsIdentity) {
    RngStream rng(2);
    const ImageBuf img = random_image(7, 3, rng);
    const LabelMap lab = random_labels(7, 3, 8, 0.1, rng);
    const AugmentParams flip_only{1.0, 0.0, 0.0, 0.0};
    const Augmented once = augment(img, lab, rng, flip_only);
    EXPECT_NE(once.labels, lab);
    const Augmented twice = augment(once.image, once.labels, rng, flip_only);
    EXPECT_EQ(twice.image, img);
    EXPECT_EQ(twice.labels, lab);
}

TEST(Augment, LabelHistogramIsPreserved) {
    RngStream rng(3);
    for (int i = 0; i < 30; ++i) {
        const ImageBuf img = random_image(8, 5, rng);
        const LabelMap lab = random_labels(8, 5, 8, 0.2, rng);
        const Augmented a = augment(img, lab, rng);
        std::vector<int> h1(256, 0), h2(256, 0);
        for (auto v : lab.labels) ++h1[v];
        for (auto v : a.labels.labels) ++h2[v];
        EXPECT_EQ(h1, h2);
        EXPECT_EQ(a.labels, apply_geometry(a.record, lab));
        for (float v : a.image.data) {
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
        }
    }
}

TEST(Checkpoint, RoundTripIsExact) {
    RngStream rng(4);
    ModelParams m = random_params(8, rng);
    m.mix[5] = 0.123456789012345678;
    const ModelParams back = params_from_checkpoint(nlohmann::json::parse(checkpoint_json(m).dump()));
    EXPECT_EQ(back, m);
}

TEST(Checkpoint, RejectsMalformed) {
    nlohmann::json j = checkpoint_json(ModelParams::zeros(8));
    j["format_version"] = 2;
    EXPECT_THROW(params_from_checkpoint(j), ValidationError);
    j = checkpoint_json(ModelParams::zeros(8));
    j["b"] = std::vector<double>(3, 0.0);
    EXPECT_THROW(params_from_checkpoint(j), ValidationError);
    j.erase("W");
    EXPECT_THROW(params_from_checkpoint(j), ValidationError);
}
