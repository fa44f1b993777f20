/// @file calibration.hpp
/// @brief Per-metric composite weights fitted to binary human ratings by
/// blending ROC AUC with the Pearson coefficient.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "reld/error.hpp"
#include "reld/metric_names.hpp"
#include "reld/scoring.hpp"
#include "reld/util.hpp"

namespace reld {

inline void require_binary_labels(std::span<const int> labels) {
    for (int y : labels) {
        if (y != 0 && y != 1) fail(ErrorKind::data, "labels must be 0 or 1, got " + std::to_string(y));
    }
}

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counted as half. Computed from midranks in O(n log n).
inline double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) fail(ErrorKind::data, "auc: scores and labels differ in length");
    require_binary_labels(labels);
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t negatives = labels.size() - positives;
    if (positives == 0 || negatives == 0) fail(ErrorKind::data, "undefined AUC: labels contain a single class");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Sum of positive ranks, doubled so midranks stay integral.
    std::uint64_t twice_rank_sum = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const std::uint64_t twice_midrank = (i + 1) + j;  // ranks i+1..j
        for (std::size_t t = i; t < j; ++t) {
            if (labels[order[t]] == 1) twice_rank_sum += twice_midrank;
        }
        i = j;
    }
    const double u = static_cast<double>(twice_rank_sum) / 2.0 -
                     static_cast<double>(positives) * static_cast<double>(positives + 1) / 2.0;
    return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) fail(ErrorKind::data, "pearson: inputs differ in length");
    if (x.size() < 2) fail(ErrorKind::data, "pearson needs at least 2 points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) fail(ErrorKind::data, "zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct BlendRatios {
    double auc = 0.9;
    double pearson = 0.1;

    void validate() const {
        if (auc < 0 || pearson < 0 || std::abs(auc + pearson - 1.0) > 1e-12) {
            fail(ErrorKind::config, "blend ratios must be non-negative and sum to 1");
        }
    }
};

inline double optimal_weight(double auc_value, double pearson_value, const BlendRatios& ratios = {}) {
    ratios.validate();
    return ratios.auc * auc_value + ratios.pearson * pearson_value;
}

inline double optimal_weight(std::span<const double> metric_scores, std::span<const int> human_labels,
                             const BlendRatios& ratios = {}) {
    std::vector<double> y(human_labels.begin(), human_labels.end());
    return optimal_weight(auc(metric_scores, human_labels), pearson(metric_scores, y), ratios);
}

// ---------------------------------------------------------------------------
// Calibration over a scored corpus
// ---------------------------------------------------------------------------

/// One (sample, answer) row: normalized metric values plus the 0/1 human rating.
struct CalibrationRow {
    std::string sample_id;
    std::string model_id;
    std::map<std::string, double> normalized;
    int human = 0;
};

enum class CalibrationStatus { calibrated, floored, fallback };

inline const char* to_string(CalibrationStatus s) {
    switch (s) {
        case CalibrationStatus::calibrated: return "calibrated";
        case CalibrationStatus::floored: return "floored";
        case CalibrationStatus::fallback: return "default";
    }
    return "default";
}

struct MetricCalibration {
    std::string metric;
    std::optional<double> auc;
    std::optional<double> pearson;
    std::optional<double> optimal_weight;
    double weight = 0.0;          // installed weight
    double default_weight = 0.0;
    CalibrationStatus status = CalibrationStatus::calibrated;
    std::string note;
};

struct CalibrationReport {
    std::vector<MetricCalibration> metrics;  // fixed metric order
    BlendRatios ratios;
    std::size_t rows = 0;
    std::size_t positives = 0;
    std::optional<double> composite_auc_default;
    std::optional<double> composite_auc_calibrated;
    std::vector<std::string> warnings;
};

struct CalibrationResult {
    CalibrationReport report;
    WeightConfig weights;
};

inline std::optional<double> composite_auc(const std::vector<CalibrationRow>& rows, const WeightConfig& w) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& r : rows) {
        scores.push_back(composite_score(r.normalized, w));
        labels.push_back(r.human);
    }
    try {
        return auc(scores, labels);
    } catch (const Error&) {
        return std::nullopt;
    }
}

inline CalibrationResult calibrate_weights(const std::vector<CalibrationRow>& rows, const BlendRatios& ratios = {},
                                           const WeightConfig& defaults = WeightConfig::defaults(),
                                           const std::string& version = "calibrated-v1") {
    ratios.validate();
    std::vector<int> labels;
    for (const auto& r : rows) labels.push_back(r.human);
    require_binary_labels(labels);
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (positives < 2 || rows.size() - positives < 2) {
        fail(ErrorKind::data, "calibration needs at least 2 rows per class (got " + std::to_string(positives) +
                                  " positive, " + std::to_string(rows.size() - positives) + " negative)");
    }
    const std::vector<double> y(labels.begin(), labels.end());

    CalibrationResult out;
    out.report.ratios = ratios;
    out.report.rows = rows.size();
    out.report.positives = positives;
    out.weights = defaults;
    out.weights.version = version;
    out.weights.provenance = WeightProvenance::calibrated;

    for (auto name_view : kMetricOrder) {
        const std::string name(name_view);
        MetricCalibration mc;
        mc.metric = name;
        mc.default_weight = defaults.weights.count(name) ? defaults.weights.at(name) : 0.0;
        std::vector<double> x;
        x.reserve(rows.size());
        for (const auto& r : rows) {
            const auto it = r.normalized.find(name);
            if (it == r.normalized.end()) {
                fail(ErrorKind::data, "row " + r.sample_id + " lacks metric " + name);
            }
            x.push_back(it->second);
        }
        try {
            mc.auc = auc(x, labels);
            mc.pearson = pearson(x, y);
            mc.optimal_weight = optimal_weight(*mc.auc, *mc.pearson, ratios);
            mc.weight = *mc.optimal_weight;
            if (mc.weight < 0.0) {
                mc.weight = 0.0;
                mc.status = CalibrationStatus::floored;
                mc.note = "negative weight floored at 0";
                out.report.warnings.push_back(name + ": " + mc.note);
            }
        } catch (const Error& e) {
            mc.weight = mc.default_weight;
            mc.status = CalibrationStatus::fallback;
            mc.note = std::string("kept default weight: ") + e.what();
            out.report.warnings.push_back(name + ": " + mc.note);
        }
        out.weights.weights[name] = mc.weight;
        out.report.metrics.push_back(std::move(mc));
    }
    out.weights.validate();
    out.report.composite_auc_default = composite_auc(rows, defaults);
    out.report.composite_auc_calibrated = composite_auc(rows, out.weights);
    return out;
}

inline nlohmann::json to_json(const CalibrationReport& r) {
    const auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json metrics = nlohmann::json::array();
    for (const auto& m : r.metrics) {
        metrics.push_back({{"metric", m.metric},
                           {"auc", opt(m.auc)},
                           {"pearson", opt(m.pearson)},
                           {"optimal_weight", opt(m.optimal_weight)},
                           {"weight", m.weight},
                           {"default_weight", m.default_weight},
                           {"status", to_string(m.status)},
                           {"note", m.note}});
    }
    return {{"metrics", metrics},
            {"ratios", {{"auc", r.ratios.auc}, {"pearson", r.ratios.pearson}}},
            {"rows", r.rows},
            {"positives", r.positives},
            {"composite_auc_default", opt(r.composite_auc_default)},
            {"composite_auc_calibrated", opt(r.composite_auc_calibrated)},
            {"warnings", r.warnings}};
}

inline std::string render_table(const CalibrationReport& r) {
    const auto cell = [](const std::optional<double>& v) { return v ? format_double(*v, 4) : std::string("-"); };
    std::ostringstream out;
    out << "metric        auc     pearson  optimal  weight  status\n";
    for (const auto& m : r.metrics) {
        std::string name = m.metric;
        name.resize(12, ' ');
        out << name << "  " << cell(m.auc) << "  " << (m.pearson && *m.pearson >= 0 ? " " : "") << cell(m.pearson)
            << "  " << cell(m.optimal_weight) << "   " << format_double(m.weight, 4) << "  " << to_string(m.status)
            << "\n";
    }
    out << "rows " << r.rows << " (" << r.positives << " rated reliable), ratios " << format_double(r.ratios.auc, 2)
        << "/" << format_double(r.ratios.pearson, 2) << "\n";
    out << "composite AUC: default " << cell(r.composite_auc_default) << ", calibrated "
        << cell(r.composite_auc_calibrated) << "\n";
    return out.str();
}

}  // namespace reld
