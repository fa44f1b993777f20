/// @file assessment.hpp
/// @brief Judge-LLM goodness/similarity ratings.

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace reld {

struct LlmAssessment {
    std::string sample_id;
    std::string model_id;  // model whose answer was judged
    int goodness = 1;      // 1..5
    int similarity = 1;    // 1..5
    std::string judge_model;
    std::string raw_reply;
    std::vector<std::string> warnings;
};

inline nlohmann::json to_json(const LlmAssessment& a) {
    return {{"sample_id", a.sample_id}, {"model_id", a.model_id},       {"goodness", a.goodness},
            {"similarity", a.similarity}, {"judge_model", a.judge_model}, {"raw_reply", a.raw_reply},
            {"warnings", a.warnings}};
}

inline LlmAssessment assessment_from_json(const nlohmann::json& j) {
    LlmAssessment a;
    a.sample_id = j.at("sample_id").get<std::string>();
    a.model_id = j.value("model_id", "");
    a.goodness = j.at("goodness").get<int>();
    a.similarity = j.at("similarity").get<int>();
    a.judge_model = j.value("judge_model", "");
    a.raw_reply = j.value("raw_reply", "");
    a.warnings = j.value("warnings", std::vector<std::string>{});
    return a;
}

}  // namespace reld
