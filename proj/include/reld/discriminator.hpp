/// @file discriminator.hpp
/// @brief Reliability discriminator head: K-class bucketing of final scores, a
/// softmax cross-entropy classifier over metric features, and conversion of
/// class distributions into a binary reliability probability.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reld/error.hpp"
#include "reld/util.hpp"

namespace reld {

inline constexpr int kHeadFormatVersion = 1;

/// Class counts exercised by the K ablation grid.
inline bool is_supported_class_count(int k) { return k == 4 || k == 6 || k == 8 || k == 10; }

inline void require_supported_class_count(int k) {
    if (!is_supported_class_count(k)) {
        fail(ErrorKind::usage, "K must be one of 4,6,8,10 (got " + std::to_string(k) + ")");
    }
}

/// Bucket i covers [i/K, (i+1)/K); a score of exactly 1 falls in the top bucket.
inline int bucketize(double final_score, int k) {
    require_supported_class_count(k);
    if (!(final_score >= 0.0 && final_score <= 1.0)) {
        fail(ErrorKind::data, "final score " + std::to_string(final_score) + " outside [0,1]");
    }
    return std::min(static_cast<int>(std::floor(final_score * k)), k - 1);
}

struct ClassDistribution {
    std::vector<double> probs;

    int k() const noexcept { return static_cast<int>(probs.size()); }

    int argmax() const {
        return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    }
};

struct ClassWeights {
    std::vector<double> w;

    double min() const { return w.front(); }
    double max() const { return w.back(); }
};

/// Bucket midpoints (i + 0.5) / K.
inline ClassWeights class_weights(int k) {
    if (k < 2) fail(ErrorKind::usage, "class count must be at least 2");
    ClassWeights cw;
    cw.w.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) cw.w[static_cast<std::size_t>(i)] = (i + 0.5) / k;
    return cw;
}

enum class BinaryStrategy { normalization, discrete, weighted_average };

inline const char* to_string(BinaryStrategy s) {
    switch (s) {
        case BinaryStrategy::normalization: return "normalization";
        case BinaryStrategy::discrete: return "discrete";
        case BinaryStrategy::weighted_average: return "weighted_average";
    }
    return "?";
}

inline BinaryStrategy parse_strategy(std::string_view s) {
    if (s == "normalization") return BinaryStrategy::normalization;
    if (s == "discrete") return BinaryStrategy::discrete;
    if (s == "weighted_average" || s == "weighted-average") return BinaryStrategy::weighted_average;
    fail(ErrorKind::usage, "unknown strategy '" + std::string(s) +
                               "' (expected normalization, discrete or weighted_average)");
}

inline constexpr BinaryStrategy kAllStrategies[] = {BinaryStrategy::normalization, BinaryStrategy::discrete,
                                                    BinaryStrategy::weighted_average};

/// Reliability probability p' from a class distribution.
///   weighted_average: (sum w_i p_i - w_min) / (w_max - w_min)
///   discrete:         max_i p_i
///   normalization:    sum w_i p_i (expected bucket midpoint)
inline double to_binary(const ClassDistribution& dist, const ClassWeights& weights, BinaryStrategy strategy) {
    if (dist.probs.size() != weights.w.size()) {
        fail(ErrorKind::data, "distribution has " + std::to_string(dist.probs.size()) + " classes, weights " +
                                  std::to_string(weights.w.size()));
    }
    if (weights.max() == weights.min()) fail(ErrorKind::data, "degenerate weights");
    double expected = 0.0;
    for (std::size_t i = 0; i < dist.probs.size(); ++i) expected += weights.w[i] * dist.probs[i];
    double p = 0.0;
    switch (strategy) {
        case BinaryStrategy::weighted_average:
            p = (expected - weights.min()) / (weights.max() - weights.min());
            break;
        case BinaryStrategy::discrete:
            p = *std::max_element(dist.probs.begin(), dist.probs.end());
            break;
        case BinaryStrategy::normalization:
            p = expected;
            break;
    }
    return std::clamp(p, 0.0, 1.0);
}

enum class Verdict { unreliable, reliable };

inline Verdict decide(double p, double threshold = 0.5) {
    return p > threshold ? Verdict::reliable : Verdict::unreliable;
}

// ---------------------------------------------------------------------------
// Softmax head
// ---------------------------------------------------------------------------

struct TrainingReport {
    double final_loss = 0.0;
    int epochs = 0;
    std::uint64_t seed = 0;
    double learning_rate = 0.0;
    std::size_t batch_size = 0;
    std::size_t rows = 0;
};

/// Multinomial logistic head. `weights` is K x F, row-major by class.
struct HeadParams {
    int k = 0;
    std::vector<std::string> feature_names;
    std::vector<double> weights;
    std::vector<double> bias;
    TrainingReport report;

    std::size_t feature_count() const { return feature_names.size(); }

    static HeadParams zeros(int k, std::vector<std::string> names) {
        HeadParams p;
        p.k = k;
        p.feature_names = std::move(names);
        p.weights.assign(static_cast<std::size_t>(k) * p.feature_names.size(), 0.0);
        p.bias.assign(static_cast<std::size_t>(k), 0.0);
        return p;
    }

    double& w(int cls, std::size_t f) { return weights[static_cast<std::size_t>(cls) * feature_count() + f]; }
    double w(int cls, std::size_t f) const { return weights[static_cast<std::size_t>(cls) * feature_count() + f]; }
};

struct LabeledFeatures {
    std::vector<double> features;
    int cls = 0;
};

struct TrainConfig {
    int epochs = 300;
    double learning_rate = 1e-2;
    std::size_t batch_size = 32;  // 0 trains on the full batch every step
    std::uint64_t seed = 0;
};

/// Numerically stable softmax in place.
inline void softmax_inplace(std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& x : z) {
        x = std::exp(x - m);
        sum += x;
    }
    for (auto& x : z) x /= sum;
}

inline std::vector<double> logits(const HeadParams& params, std::span<const double> x) {
    std::vector<double> z(static_cast<std::size_t>(params.k));
    for (int c = 0; c < params.k; ++c) {
        double s = params.bias[static_cast<std::size_t>(c)];
        for (std::size_t f = 0; f < x.size(); ++f) s += params.w(c, f) * x[f];
        z[static_cast<std::size_t>(c)] = s;
    }
    return z;
}

inline ClassDistribution predict_distribution(const HeadParams& params, std::span<const double> features) {
    if (features.size() != params.feature_count()) {
        fail(ErrorKind::data, "feature vector has " + std::to_string(features.size()) + " entries, head expects " +
                                  std::to_string(params.feature_count()));
    }
    auto z = logits(params, features);
    softmax_inplace(z);
    return ClassDistribution{std::move(z)};
}

struct LossGradient {
    double loss = 0.0;
    std::vector<double> d_weights;
    std::vector<double> d_bias;
};

/// Mean cross-entropy -(1/N) sum log p_{y} over `rows` and its gradient.
inline LossGradient loss_and_gradient(const HeadParams& params, std::span<const LabeledFeatures> data,
                                      std::span<const std::size_t> rows) {
    LossGradient g;
    g.d_weights.assign(params.weights.size(), 0.0);
    g.d_bias.assign(params.bias.size(), 0.0);
    if (rows.empty()) return g;
    const std::size_t nf = params.feature_count();
    for (std::size_t r : rows) {
        const auto& row = data[r];
        auto z = logits(params, row.features);
        const double m = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - m);
        const double log_norm = m + std::log(sum);
        g.loss -= z[static_cast<std::size_t>(row.cls)] - log_norm;
        for (int c = 0; c < params.k; ++c) {
            const double p = std::exp(z[static_cast<std::size_t>(c)] - log_norm);
            const double delta = p - (c == row.cls ? 1.0 : 0.0);
            g.d_bias[static_cast<std::size_t>(c)] += delta;
            for (std::size_t f = 0; f < nf; ++f) g.d_weights[static_cast<std::size_t>(c) * nf + f] += delta * row.features[f];
        }
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    g.loss *= inv;
    for (auto& v : g.d_weights) v *= inv;
    for (auto& v : g.d_bias) v *= inv;
    return g;
}

inline LossGradient loss_and_gradient(const HeadParams& params, std::span<const LabeledFeatures> data) {
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return loss_and_gradient(params, data, all);
}

inline void validate_training_data(std::span<const LabeledFeatures> data, int k) {
    if (data.empty()) fail(ErrorKind::data, "degenerate labels: no training rows");
    const std::size_t nf = data.front().features.size();
    std::vector<bool> seen(static_cast<std::size_t>(k), false);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& row = data[i];
        if (row.features.size() != nf) {
            fail(ErrorKind::data, "row " + std::to_string(i) + " has " + std::to_string(row.features.size()) +
                                      " features, expected " + std::to_string(nf));
        }
        for (double v : row.features) {
            if (!std::isfinite(v)) fail(ErrorKind::data, "non-finite feature in row " + std::to_string(i));
        }
        if (row.cls < 0 || row.cls >= k) {
            fail(ErrorKind::data, "row " + std::to_string(i) + " class " + std::to_string(row.cls) + " outside [0,K)");
        }
        seen[static_cast<std::size_t>(row.cls)] = true;
    }
    if (std::count(seen.begin(), seen.end(), true) < 2) fail(ErrorKind::data, "degenerate labels");
}

/// Gradient descent on mean cross-entropy from an all-zero initialization.
/// Mini-batches are drawn from a seeded per-epoch shuffle.
inline HeadParams train_head(std::span<const LabeledFeatures> data, int k, const TrainConfig& config,
                             std::vector<std::string> feature_names = {}) {
    if (k < 2) fail(ErrorKind::usage, "class count must be at least 2");
    validate_training_data(data, k);
    const std::size_t nf = data.front().features.size();
    if (feature_names.empty()) {
        for (std::size_t f = 0; f < nf; ++f) feature_names.push_back("x" + std::to_string(f));
    }
    if (feature_names.size() != nf) fail(ErrorKind::data, "feature name count does not match feature width");

    auto params = HeadParams::zeros(k, std::move(feature_names));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(config.seed);
    const std::size_t batch = config.batch_size == 0 ? data.size() : config.batch_size;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (batch < data.size()) seeded_shuffle(order, rng);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::span<const std::size_t> rows(order.data() + start, std::min(batch, order.size() - start));
            const auto g = loss_and_gradient(params, data, rows);
            for (std::size_t i = 0; i < params.weights.size(); ++i) params.weights[i] -= config.learning_rate * g.d_weights[i];
            for (std::size_t i = 0; i < params.bias.size(); ++i) params.bias[i] -= config.learning_rate * g.d_bias[i];
        }
    }
    params.report.final_loss = loss_and_gradient(params, data).loss;
    params.report.epochs = config.epochs;
    params.report.seed = config.seed;
    params.report.learning_rate = config.learning_rate;
    params.report.batch_size = config.batch_size;
    params.report.rows = data.size();
    return params;
}

/// Binary reliability probability for one feature row.
inline double reliability(const HeadParams& params, std::span<const double> features, BinaryStrategy strategy) {
    return to_binary(predict_distribution(params, features), class_weights(params.k), strategy);
}

inline nlohmann::json to_json(const HeadParams& p) {
    return {{"format_version", kHeadFormatVersion},
            {"k", p.k},
            {"feature_order", p.feature_names},
            {"weights", p.weights},
            {"bias", p.bias},
            {"training_report",
             {{"final_loss", p.report.final_loss},
              {"epochs", p.report.epochs},
              {"seed", p.report.seed},
              {"learning_rate", p.report.learning_rate},
              {"batch_size", p.report.batch_size},
              {"rows", p.report.rows}}}};
}

inline HeadParams head_from_json(const nlohmann::json& j) {
    if (j.value("format_version", 0) != kHeadFormatVersion) {
        fail(ErrorKind::data, "unsupported head format version " + j.value("format_version", nlohmann::json(0)).dump());
    }
    HeadParams p;
    p.k = j.at("k").get<int>();
    p.feature_names = j.at("feature_order").get<std::vector<std::string>>();
    p.weights = j.at("weights").get<std::vector<double>>();
    p.bias = j.at("bias").get<std::vector<double>>();
    if (p.k < 2 || p.bias.size() != static_cast<std::size_t>(p.k) ||
        p.weights.size() != static_cast<std::size_t>(p.k) * p.feature_names.size()) {
        fail(ErrorKind::data, "head parameters have inconsistent shapes");
    }
    for (double v : p.weights) {
        if (!std::isfinite(v)) fail(ErrorKind::data, "non-finite head weight");
    }
    const auto& r = j.at("training_report");
    p.report.final_loss = r.value("final_loss", 0.0);
    p.report.epochs = r.value("epochs", 0);
    p.report.seed = r.value("seed", std::uint64_t{0});
    p.report.learning_rate = r.value("learning_rate", 0.0);
    p.report.batch_size = r.value("batch_size", std::size_t{0});
    p.report.rows = r.value("rows", std::size_t{0});
    return p;
}

// ---------------------------------------------------------------------------
// Regression comparison
// ---------------------------------------------------------------------------

/// Linear least-squares fit of the final score, kept for comparison with the
/// classification head. Predictions above 0.5 count as reliable.
struct RegressionModel {
    std::vector<double> weights;
    double bias = 0.0;
    double final_mse = 0.0;

    double predict(std::span<const double> x) const {
        double s = bias;
        for (std::size_t f = 0; f < x.size(); ++f) s += weights[f] * x[f];
        return std::clamp(s, 0.0, 1.0);
    }
};

inline RegressionModel fit_regression(std::span<const std::vector<double>> features, std::span<const double> targets,
                                      const TrainConfig& config) {
    if (features.empty() || features.size() != targets.size()) fail(ErrorKind::data, "regression needs matched, non-empty inputs");
    RegressionModel m;
    const std::size_t nf = features.front().size();
    m.weights.assign(nf, 0.0);
    const double inv = 1.0 / static_cast<double>(features.size());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<double> gw(nf, 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < features.size(); ++i) {
            double pred = m.bias;
            for (std::size_t f = 0; f < nf; ++f) pred += m.weights[f] * features[i][f];
            const double err = pred - targets[i];
            gb += 2.0 * err * inv;
            for (std::size_t f = 0; f < nf; ++f) gw[f] += 2.0 * err * features[i][f] * inv;
        }
        m.bias -= config.learning_rate * gb;
        for (std::size_t f = 0; f < nf; ++f) m.weights[f] -= config.learning_rate * gw[f];
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        double pred = m.bias;
        for (std::size_t f = 0; f < nf; ++f) pred += m.weights[f] * features[i][f];
        mse += (pred - targets[i]) * (pred - targets[i]) * inv;
    }
    m.final_mse = mse;
    return m;
}

}  // namespace reld
