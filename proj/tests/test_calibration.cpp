#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "reld/calibration.hpp"
#include "synthetic.hpp"

using namespace reld;

TEST(Auc, Examples) {
    EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
    EXPECT_EQ(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
    EXPECT_EQ(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{0, 1, 0, 1}), 0.5);
}

TEST(Auc, SingleClassIsUndefined) {
    try {
        auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("undefined AUC"), std::string::npos);
    }
    EXPECT_THROW(auc(std::vector<double>{0.1}, std::vector<int>{0, 1}), Error);
    EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 2}), Error);
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 500; ++t) {
        const std::size_t n = 2 + rng() % 40;
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng() % 7) / 7.0;  // coarse grid forces ties
            y[i] = static_cast<int>(rng() % 2);
        }
        y[0] = 0;
        y[1] = 1;
        EXPECT_NEAR(auc(s, y), oracle::pairwise_auc(s, y), 1e-12);
    }
}

TEST(Auc, InvariantUnderIncreasingTransforms) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> s(30), e(30), a(30);
        std::vector<int> y(30);
        for (std::size_t i = 0; i < 30; ++i) {
            s[i] = std::round(u(rng) * 4) / 4;
            e[i] = std::exp(s[i]);
            a[i] = 3.0 * s[i] + 7.0;
            y[i] = static_cast<int>(i % 2);
        }
        EXPECT_EQ(auc(s, y), auc(e, y));
        EXPECT_EQ(auc(s, y), auc(a, y));
    }
}

TEST(Pearson, Examples) {
    const std::vector<double> x{1, 2, 3, 4};
    std::vector<double> neg;
    for (double v : x) neg.push_back(-v);
    EXPECT_DOUBLE_EQ(pearson(x, x), 1.0);
    EXPECT_DOUBLE_EQ(pearson(x, neg), -1.0);
    // covariance -2 / sqrt(5 * 4)
    EXPECT_NEAR(pearson(x, std::vector<double>{1, -1, 1, -1}), -2.0 / std::sqrt(20.0), 1e-15);
    EXPECT_NEAR(pearson(x, std::vector<double>{1, -1, 1, -1}), -0.447, 1e-3);
}

TEST(Pearson, Errors) {
    try {
        pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3});
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "zero variance");
    }
    EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{1}), Error);
    EXPECT_THROW(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), Error);
}

TEST(Pearson, AffineInvarianceAndOracle) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 300; ++t) {
        std::vector<double> x(20), y(20), xa(20), yn(20);
        const double a = 0.1 + std::abs(u(rng)) * 5, b = u(rng) * 10;
        for (std::size_t i = 0; i < 20; ++i) {
            x[i] = u(rng);
            y[i] = 0.5 * x[i] + u(rng);
            xa[i] = a * x[i] + b;
            yn[i] = -a * y[i] + b;
        }
        const double r = pearson(x, y);
        EXPECT_NEAR(r, oracle::pearson_sums(x, y), 1e-9);
        EXPECT_NEAR(pearson(xa, y), r, 1e-12);
        EXPECT_NEAR(pearson(x, yn), -r, 1e-12);
    }
}

TEST(OptimalWeight, Examples) {
    EXPECT_DOUBLE_EQ(optimal_weight(1.0, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(optimal_weight(0.8, 0.6), 0.78);
    EXPECT_DOUBLE_EQ(optimal_weight(0.5, 0.0), 0.45);
    EXPECT_THROW(optimal_weight(0.5, 0.5, BlendRatios{0.5, 0.6}), Error);
    EXPECT_DOUBLE_EQ(optimal_weight(0.8, 0.6, BlendRatios{0.5, 0.5}), 0.7);
}

TEST(OptimalWeight, MonotoneInBothArguments) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 1000; ++t) {
        const double a = u(rng), p = 2 * u(rng) - 1, da = u(rng) * (1 - a), dp = u(rng) * (1 - p);
        EXPECT_LE(optimal_weight(a, p), optimal_weight(a + da, p));
        EXPECT_LE(optimal_weight(a, p), optimal_weight(a, p + dp));
    }
}

TEST(CalibrateWeights, PlantedSignalGetsTopWeight) {
    const auto rows = synth::planted_calibration_rows(400, 9, "rouge2");
    const auto result = calibrate_weights(rows);
    const auto& planted = result.report.metrics[metric_index("rouge2")];
    EXPECT_EQ(planted.auc.value(), 1.0);
    EXPECT_NEAR(result.weights.weights.at("rouge2"), 0.9 * 1.0 + 0.1 * planted.pearson.value(), 1e-9);
    for (const auto& [name, w] : result.weights.weights) {
        if (name != "rouge2") {
            EXPECT_LT(w, result.weights.weights.at("rouge2")) << name;
        }
    }
    EXPECT_EQ(result.weights.provenance, WeightProvenance::calibrated);
    EXPECT_GT(result.report.composite_auc_calibrated.value(), result.report.composite_auc_default.value());
}

TEST(CalibrateWeights, ChangedWeightsChangeSomeFinalScore) {
    const auto rows = synth::planted_calibration_rows(50, 10, "f1");
    const auto result = calibrate_weights(rows);
    bool changed = false;
    for (const auto& r : rows) {
        changed = changed || composite_score(r.normalized, result.weights) !=
                                 composite_score(r.normalized, WeightConfig::defaults());
    }
    EXPECT_TRUE(changed);
}

TEST(CalibrateWeights, ConstantMetricsFallBackToDefaults) {
    auto rows = synth::planted_calibration_rows(20, 11, "f1");
    for (auto& r : rows) {
        for (auto& [_, v] : r.normalized) v = 0.5;
    }
    const auto result = calibrate_weights(rows);
    EXPECT_EQ(result.report.warnings.size(), kMetricOrder.size());
    for (const auto& m : result.report.metrics) {
        EXPECT_EQ(m.status, CalibrationStatus::fallback);
        EXPECT_EQ(m.weight, WeightConfig::defaults().weights.at(m.metric));
    }
}

TEST(CalibrateWeights, AntiCorrelatedMetricIsFlooredAtZero) {
    auto rows = synth::planted_calibration_rows(40, 12, "bleu");
    for (auto& r : rows) r.normalized["bleu"] = 1.0 - r.human;  // auc 0, pearson -1
    const auto result = calibrate_weights(rows);
    const auto& m = result.report.metrics[metric_index("bleu")];
    EXPECT_EQ(m.status, CalibrationStatus::floored);
    EXPECT_EQ(m.weight, 0.0);
    EXPECT_NEAR(m.optimal_weight.value(), -0.1, 1e-12);
}

TEST(CalibrateWeights, NeedsTwoRowsPerClassAndIsDeterministic) {
    auto rows = synth::planted_calibration_rows(10, 13, "f1");
    for (auto& r : rows) r.human = 1;
    rows[0].human = 0;
    EXPECT_THROW(calibrate_weights(rows), Error);

    const auto ok = synth::planted_calibration_rows(60, 14, "f1");
    EXPECT_EQ(to_json(calibrate_weights(ok).report).dump(), to_json(calibrate_weights(ok).report).dump());
    const auto table = render_table(calibrate_weights(ok).report);
    EXPECT_NE(table.find("rougeL"), std::string::npos);
    EXPECT_NE(table.find("composite AUC"), std::string::npos);
}
