/// @file scoring.hpp
/// @brief Composite final score, final tag, and the ternary human metric label.

#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "reld/discriminator.hpp"
#include "reld/error.hpp"
#include "reld/metric_names.hpp"
#include "reld/metrics.hpp"
#include "reld/text.hpp"
#include "reld/util.hpp"

namespace reld {

enum class WeightProvenance { default_weights, calibrated };

struct WeightConfig {
    std::map<std::string, double> weights;
    std::string version = "default-v1";
    WeightProvenance provenance = WeightProvenance::default_weights;

    /// Every metric at weight 1 except recall and ROUGE-1/2/L at weight 2.
    static WeightConfig defaults() {
        WeightConfig c;
        for (auto name : kMetricOrder) {
            const bool emphasized = name == "recall" || name == "rouge1" || name == "rouge2" || name == "rougeL";
            c.weights[std::string(name)] = emphasized ? 2.0 : 1.0;
        }
        return c;
    }

    void validate() const {
        bool any_positive = false;
        for (const auto& [name, w] : weights) {
            metric_range(name);  // throws on unknown names
            if (!std::isfinite(w) || w < 0.0) fail(ErrorKind::config, "weight for " + name + " must be a non-negative number");
            any_positive = any_positive || w > 0.0;
        }
        if (!any_positive) fail(ErrorKind::config, "weight config needs at least one positive weight");
    }

    /// Plain-text form: "metric = weight" lines plus version and provenance.
    std::string to_text() const {
        std::ostringstream out;
        out.precision(17);
        out << "version = " << version << "\n";
        out << "provenance = " << (provenance == WeightProvenance::calibrated ? "calibrated" : "default") << "\n";
        for (auto name : kMetricOrder) {
            const auto it = weights.find(std::string(name));
            if (it != weights.end()) out << name << " = " << it->second << "\n";
        }
        return out.str();
    }

    static WeightConfig parse(const std::string& text) {
        WeightConfig c;
        std::istringstream in(text);
        std::size_t line_no = 0;
        for (std::string line; std::getline(in, line);) {
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) fail(ErrorKind::config, "weights line " + std::to_string(line_no) + ": expected 'key = value'");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key == "version") {
                c.version = value;
            } else if (key == "provenance") {
                if (value == "calibrated") {
                    c.provenance = WeightProvenance::calibrated;
                } else if (value == "default") {
                    c.provenance = WeightProvenance::default_weights;
                } else {
                    fail(ErrorKind::config, "unknown provenance '" + value + "'");
                }
            } else {
                std::size_t used = 0;
                double w = 0.0;
                try {
                    w = std::stod(value, &used);
                } catch (const std::exception&) {
                    used = 0;
                }
                if (used != value.size() || value.empty()) {
                    fail(ErrorKind::config, "weights line " + std::to_string(line_no) + ": bad number '" + value + "'");
                }
                c.weights[key] = w;
            }
        }
        c.validate();
        return c;
    }

    static WeightConfig load(const std::filesystem::path& path) { return parse(read_file(path)); }
};

/// Sum of w_m * norm_m over sum of w_m, accumulated in kMetricOrder.
inline double composite_score(const std::map<std::string, double>& normalized, const WeightConfig& config) {
    double num = 0.0, den = 0.0;
    for (auto name : kMetricOrder) {
        const auto w = config.weights.find(std::string(name));
        if (w == config.weights.end()) continue;
        const auto v = normalized.find(std::string(name));
        if (v == normalized.end()) fail(ErrorKind::config, "weight configured for missing metric " + std::string(name));
        num += w->second * v->second;
        den += w->second;
    }
    for (const auto& [name, w] : config.weights) metric_index(name);
    if (den <= 0.0) fail(ErrorKind::config, "weight config needs at least one positive weight");
    return std::clamp(num / den, 0.0, 1.0);
}

inline double composite_score(const MetricVector& mv, const WeightConfig& config) {
    return composite_score(mv.normalized, config);
}

/// 1 iff the score is strictly greater than 0.5.
inline int final_tag(double final_score) { return final_score > 0.5 ? 1 : 0; }

/// 1: matches gold with goodness 4-5. 2: differs from gold with goodness 1-3.
/// 0: any other combination.
inline int human_label(bool answer_matches_gold, int goodness) {
    if (goodness < 1 || goodness > 5) fail(ErrorKind::data, "goodness " + std::to_string(goodness) + " outside [1,5]");
    if (answer_matches_gold && goodness >= 4) return 1;
    if (!answer_matches_gold && goodness <= 3) return 2;
    return 0;
}

/// Canonicalized exact match against any gold answer (MC letter replies resolved first).
inline bool answer_matches_gold(const QASample& sample, const std::string& answer) {
    const auto resolved = resolve_option_letter(sample, answer);
    const std::string a = canonicalize(resolved.value_or(answer));
    for (const auto& g : sample.gold_answers) {
        if (canonicalize(g) == a) return true;
    }
    return false;
}

struct ScoreRecord {
    std::string sample_id;
    std::string model_id;
    std::string dataset;
    double final_score = 0.0;
    int final_tag = 0;
    std::optional<int> human_label;
    int class_bucket = 0;
    int k = 10;
};

inline ScoreRecord make_score_record(const MetricVector& mv, const WeightConfig& config, int k,
                                     std::optional<int> human = std::nullopt) {
    ScoreRecord r;
    r.sample_id = mv.sample_id;
    r.model_id = mv.model_id;
    r.dataset = mv.dataset;
    r.final_score = composite_score(mv, config);
    r.final_tag = final_tag(r.final_score);
    r.human_label = human;
    r.class_bucket = bucketize(r.final_score, k);
    r.k = k;
    return r;
}

inline nlohmann::json to_json(const ScoreRecord& r) {
    nlohmann::json j{{"sample_id", r.sample_id}, {"model_id", r.model_id},   {"dataset", r.dataset},
                     {"final_score", r.final_score}, {"final_tag", r.final_tag}, {"class_bucket", r.class_bucket},
                     {"k", r.k}};
    j["human_label"] = r.human_label ? nlohmann::json(*r.human_label) : nlohmann::json(nullptr);
    return j;
}

inline ScoreRecord score_record_from_json(const nlohmann::json& j) {
    ScoreRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.model_id = j.value("model_id", "");
    r.dataset = j.value("dataset", "");
    r.final_score = j.at("final_score").get<double>();
    r.final_tag = j.at("final_tag").get<int>();
    r.class_bucket = j.at("class_bucket").get<int>();
    r.k = j.value("k", 10);
    if (j.contains("human_label") && !j["human_label"].is_null()) r.human_label = j["human_label"].get<int>();
    return r;
}

}  // namespace reld
