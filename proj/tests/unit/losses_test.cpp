#include <gtest/gtest.h>

#include "metric_oracles.hpp"
#include "test_support.hpp"
#include "vcod/losses.hpp"

using namespace vcod;
using vcod::test::Rng;

namespace {

MaskImage binary(DenseArray v) { return {std::move(v), MaskKind::binary}; }
MaskImage prob(DenseArray v) { return {std::move(v), MaskKind::probability}; }

DenseArray mixed_gt(Rng& rng, std::size_t h, std::size_t w, double p = 0.4) {
    while (true) {
        auto g = test::random_binary(rng, {h, w}, p);
        const double s = sum(g);
        if (s > 0 && s < double(g.size())) return g;
    }
}

// Interior probabilities keep finite differences away from the clamp.
DenseArray interior_prob(Rng& rng, std::size_t h, std::size_t w) { return test::random_array(rng, {h, w}, 0.05, 0.95); }

DenseArray naive_weights(const DenseArray& g, long window, double lambda) {
    const long H = long(g.extent(0)), W = long(g.extent(1)), r = window / 2;
    DenseArray out(g.shape());
    for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
            double s = 0, n = 0;
            for (long dy = -r; dy <= r; ++dy)
                for (long dx = -r; dx <= r; ++dx) {
                    const long yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                    s += g(yy, xx);
                    n += 1;
                }
            out(y, x) = 1 + lambda * std::abs(s / n - g(y, x));
        }
    return out;
}

}  // namespace

TEST(PixelWeights, ConstantMaskIsOne) {
    for (double v : {0.0, 1.0}) {
        auto w = pixel_weights(binary(DenseArray({40, 37}, v)));
        EXPECT_EQ(min_value(w), 1.0);
        EXPECT_EQ(max_value(w), 1.0);
    }
}

TEST(PixelWeights, IsolatedHotPixel) {
    DenseArray g({40, 40}, 0.0);
    g(20, 20) = 1.0;
    auto w = pixel_weights(binary(g));
    EXPECT_NEAR(w(20, 20), 1 + 5 * (1 - 1.0 / 961), 1e-12);
}

TEST(PixelWeights, MatchesNaivePooling) {
    Rng rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        const auto h = test::random_extent(rng, 1, 40), w = test::random_extent(rng, 1, 40);
        auto g = test::random_binary(rng, {h, w}, 0.3);
        auto got = pixel_weights(binary(g));
        EXPECT_LT(max_abs_diff(got, naive_weights(g, 31, 5)), 1e-12);
        EXPECT_GE(min_value(got), 1.0);
        EXPECT_LE(max_value(got), 6.0);
    }
    LossParams small;
    small.window = 5;
    small.lambda = 2;
    auto g = test::random_binary(rng, {9, 11}, 0.5);
    EXPECT_LT(max_abs_diff(pixel_weights(binary(g), small), naive_weights(g, 5, 2)), 1e-12);
}

TEST(PixelWeights, Errors) {
    EXPECT_THROW(pixel_weights(prob(DenseArray({4, 4}, 0.5))), InputError);
    LossParams even;
    even.window = 4;
    EXPECT_THROW(pixel_weights(binary(DenseArray({4, 4}, 0.0)), even), InputError);
}

TEST(WeightedCe, ConstantHalfIsLn2) {
    Rng rng(2);
    auto g = mixed_gt(rng, 8, 8);
    EXPECT_NEAR(weighted_ce(prob(DenseArray({8, 8}, 0.5)), binary(g), DenseArray({8, 8}, 1.0)), std::log(2.0), 1e-15);
}

TEST(WeightedCe, PerfectPredictionNearZero) {
    Rng rng(3);
    auto g = mixed_gt(rng, 8, 8);
    const double l = weighted_ce(prob(g), binary(g), pixel_weights(binary(g)));
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, -std::log(1 - 1e-7) + 1e-15);
}

TEST(WeightedCe, MatchesSummation) {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        auto g = mixed_gt(rng, 9, 7);
        auto p = test::random_array(rng, {9, 7}, 0.0, 1.0);
        auto w = test::random_array(rng, {9, 7}, 1.0, 6.0);
        double num = 0, den = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double q = std::min(std::max(p[i], 1e-7), 1 - 1e-7);
            num += w[i] * (g[i] == 1 ? -std::log(q) : -std::log(1 - q));
            den += w[i];
        }
        EXPECT_NEAR(weighted_ce(prob(p), binary(g), w), num / den, 1e-12);
    }
}

TEST(WeightedIou, PerfectIsZero) {
    Rng rng(5);
    auto g = mixed_gt(rng, 10, 10);
    EXPECT_EQ(weighted_iou(prob(g), binary(g), pixel_weights(binary(g))), 0.0);
}

TEST(WeightedIou, ZeroPrediction) {
    Rng rng(6);
    auto g = mixed_gt(rng, 10, 10);
    const double n = sum(g);
    EXPECT_NEAR(weighted_iou(prob(DenseArray({10, 10}, 0.0)), binary(g), DenseArray({10, 10}, 1.0)), 1 - 1 / (n + 1),
                1e-15);
}

TEST(WeightedIou, MatchesSummation) {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        auto g = mixed_gt(rng, 8, 9);
        auto p = test::random_array(rng, {8, 9}, 0.0, 1.0);
        auto w = test::random_array(rng, {8, 9}, 1.0, 6.0);
        double i = 0, u = 0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            i += w[k] * p[k] * g[k];
            u += w[k] * std::max(p[k], g[k]) + w[k] * std::min(p[k], g[k]) - w[k] * p[k] * g[k];
        }
        EXPECT_NEAR(weighted_iou(prob(p), binary(g), w), 1 - (i + 1) / (u + 1), 1e-12);
    }
}

TEST(WeightedIou, ScalingOnlyMovesTheSmoothingTerm) {
    // With +1 smoothing the loss under w -> s*w shifts by exactly
    // (s-1)(U-I) / ((sU+1)(U+1)); a perfect prediction (I = U) is unaffected.
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        auto g = mixed_gt(rng, 16, 16, 0.5);
        auto p = test::random_array(rng, {16, 16}, 0.0, 1.0);
        auto w = pixel_weights(binary(g));
        double I = 0, U = 0;
        for (std::size_t k = 0; k < g.size(); ++k) I += w[k] * p[k] * g[k], U += w[k] * (p[k] + g[k] - p[k] * g[k]);
        const double base = weighted_iou(prob(p), binary(g), w);
        for (double s : {0.5, 0.8, 1.25, 2.0}) {
            const double scaled = weighted_iou(prob(p), binary(g), s * w);
            EXPECT_NEAR(scaled - base, (s - 1) * (U - I) / ((s * U + 1) * (U + 1)), 1e-12);
            EXPECT_EQ(weighted_iou(prob(g), binary(g), s * w), 0.0);
        }
    }
}

TEST(ELoss, PerfectIsZero) {
    Rng rng(9);
    auto g = mixed_gt(rng, 10, 10);
    EXPECT_NEAR(e_loss(prob(g), binary(g)), 0.0, 1e-9);
}

TEST(ELoss, InvertedBalanced) {
    DenseArray g({8, 8}, 0.0);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 4; ++c) g(r, c) = 1;
    auto inv = map(g, [](double v) { return 1 - v; });
    EXPECT_GE(e_loss(prob(inv), binary(g)), 0.75);
}

TEST(ELoss, MatchesContinuousOracle) {
    Rng rng(10);
    for (int trial = 0; trial < 10; ++trial) {
        auto g = mixed_gt(rng, 8, 8);
        auto p = test::random_array(rng, {8, 8}, 0.0, 1.0);
        EXPECT_NEAR(e_loss(prob(p), binary(g)), 1 - oracle::emeasure(oracle::to_plane(p), oracle::to_plane(g)), 1e-12);
    }
}

TEST(Losses, ExtentMismatch) {
    auto g = binary(DenseArray({4, 4}, 0.0));
    auto p = prob(DenseArray({4, 5}, 0.5));
    EXPECT_THROW(weighted_ce(p, g, DenseArray({4, 4}, 1.0)), DimensionError);
    EXPECT_THROW(weighted_iou(p, g, DenseArray({4, 4}, 1.0)), DimensionError);
    EXPECT_THROW(e_loss(p, g), DimensionError);
    EXPECT_THROW(weighted_ce(prob(DenseArray({4, 4}, 0.5)), g, DenseArray({4, 5}, 1.0)), DimensionError);
}

TEST(ShortLoss, PerfectPrediction) {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        auto g = mixed_gt(rng, 16, 16);
        const auto v = short_loss(prob(g), binary(g));
        EXPECT_LE(v.total, 1e-6);
        EXPECT_GE(v.components.at("wce"), 0.0);
        EXPECT_GE(v.components.at("wiou"), 0.0);
    }
}

TEST(HybridLoss, ComponentsAreAdditive) {
    Rng rng(12);
    auto g = mixed_gt(rng, 12, 12);
    auto p = prob(test::random_array(rng, {12, 12}, 0.0, 1.0));
    const auto w = pixel_weights(binary(g));
    const auto v = hybrid_loss(p, binary(g));
    EXPECT_EQ(v.components.at("wce"), weighted_ce(p, binary(g), w));
    EXPECT_EQ(v.components.at("wiou"), weighted_iou(p, binary(g), w));
    EXPECT_EQ(v.components.at("e"), e_loss(p, binary(g)));
    EXPECT_NEAR(v.total, v.components.at("wce") + v.components.at("wiou") + v.components.at("e"), 1e-12);
    for (const auto& [name, c] : v.components) EXPECT_GE(c, 0.0) << name;
}

TEST(ShortLoss, GradientMatchesFiniteDifferences) {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        auto g = binary(mixed_gt(rng, 8, 8));
        auto p = interior_prob(rng, 8, 8);
        auto f = [&](const DenseArray& x) { return short_loss(prob(x), g).total; };
        const auto analytic = short_loss_grad(prob(p), g);
        EXPECT_LT(test::gradient_error(analytic, test::numeric_gradient(f, p)), 1e-4) << "trial " << trial;
    }
}

TEST(ComponentGradients, MatchFiniteDifferences) {
    Rng rng(14);
    for (int trial = 0; trial < 10; ++trial) {
        auto g = binary(mixed_gt(rng, 6, 7));
        auto p = interior_prob(rng, 6, 7);
        auto w = test::random_array(rng, {6, 7}, 1.0, 6.0);
        auto ce = [&](const DenseArray& x) { return weighted_ce(prob(x), g, w); };
        auto iou = [&](const DenseArray& x) { return weighted_iou(prob(x), g, w); };
        EXPECT_LT(test::gradient_error(weighted_ce_grad(prob(p), g, w), test::numeric_gradient(ce, p)), 1e-4);
        EXPECT_LT(test::gradient_error(weighted_iou_grad(prob(p), g, w), test::numeric_gradient(iou, p)), 1e-4);
    }
}
