/// @file metric_names.hpp
/// @brief The fixed metric order and per-metric value ranges.

#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "reld/error.hpp"

namespace reld {

/// Column order for exports, feature vectors, and composite summation.
inline constexpr std::array<std::string_view, 14> kMetricOrder = {
    "f1",     "recall",  "bleu",        "rouge1",     "rouge2",   "rougeL",     "distinct1",
    "distinct2", "greedy", "emb_avg", "emb_extrema", "bert_score", "goodness", "similarity"};

enum class MetricRange {
    unit,    // [0, 1]
    cosine,  // [-1, 1]
    likert,  // integer 1..5
};

inline MetricRange metric_range(std::string_view name) {
    if (name == "greedy" || name == "emb_avg" || name == "emb_extrema" || name == "bert_score") {
        return MetricRange::cosine;
    }
    if (name == "goodness" || name == "similarity") return MetricRange::likert;
    if (std::find(kMetricOrder.begin(), kMetricOrder.end(), name) != kMetricOrder.end()) {
        return MetricRange::unit;
    }
    fail(ErrorKind::config, "unknown metric '" + std::string(name) + "'");
}

inline std::size_t metric_index(std::string_view name) {
    const auto it = std::find(kMetricOrder.begin(), kMetricOrder.end(), name);
    if (it == kMetricOrder.end()) fail(ErrorKind::config, "unknown metric '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - kMetricOrder.begin());
}

/// Maps a raw metric value onto [0,1]. Out-of-range input is clamped and a
/// warning appended when `warnings` is given.
inline double normalize_metric(std::string_view name, double raw, std::vector<std::string>* warnings = nullptr) {
    double lo = 0.0, hi = 1.0;
    switch (metric_range(name)) {
        case MetricRange::unit: break;
        case MetricRange::cosine: lo = -1.0; break;
        case MetricRange::likert: lo = 1.0; hi = 5.0; break;
    }
    if (!(raw >= lo && raw <= hi)) {
        if (warnings) {
            warnings->push_back(std::string(name) + " value " + std::to_string(raw) + " outside [" +
                                std::to_string(lo) + ", " + std::to_string(hi) + "], clamped");
        }
        raw = raw != raw ? lo : std::clamp(raw, lo, hi);
    }
    switch (metric_range(name)) {
        case MetricRange::unit: return raw;
        case MetricRange::cosine: return (raw + 1.0) / 2.0;
        case MetricRange::likert: return (raw - 1.0) / 4.0;
    }
    return raw;
}

}  // namespace reld
