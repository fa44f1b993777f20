/// @file demo.hpp
/// @brief Synthetic demo corpus: four small QA datasets, scripted replies for
/// two answer models and a judge, human ratings and a pipeline config.

#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "reld/util.hpp"

namespace reld::demo {

inline constexpr std::uint64_t kSeed = 20240611;
inline constexpr std::size_t kPerDataset = 50;
inline constexpr double kRatingNoise = 0.05;

struct Fact {
    std::string sentence;
    std::string question;
    std::string answer;
    std::vector<std::string> alternatives;  // same type, never the answer
};

namespace detail {

inline const std::vector<std::string> kNames = {"Alice", "Bruno", "Chen",  "Dana",  "Elif",   "Farid", "Greta",
                                                "Hiro",  "Ines",  "Jonas", "Kemal", "Lena",   "Marco", "Nadia",
                                                "Omar",  "Petra", "Quinn", "Rosa",  "Sven",   "Tomas"};
inline const std::vector<std::string> kColors = {"red", "blue", "green", "yellow", "purple", "orange", "black", "white"};
inline const std::vector<std::string> kObjects = {"bicycle", "umbrella", "lamp", "backpack", "kettle", "scarf", "clock", "notebook"};
inline const std::vector<std::string> kRooms = {"kitchen", "garage", "hallway", "attic", "office", "bedroom"};
inline const std::vector<std::string> kCities = {"Lisbon", "Oslo", "Krakow", "Nairobi", "Lima", "Osaka", "Quebec", "Tbilisi"};
inline const std::vector<std::string> kJobs = {"baker", "nurse", "pilot", "carpenter", "librarian", "chemist", "gardener", "translator"};
inline const std::vector<std::string> kPlaces = {"harbor", "hospital", "airport", "museum", "school", "market"};

inline const std::vector<std::string> kNamesZh = {"王芳", "李强", "张伟", "刘洋", "陈静", "杨帆", "赵磊", "黄敏",
                                                  "周婷", "吴昊", "徐丽", "孙浩", "马超", "朱琳", "胡军", "郭瑞"};
inline const std::vector<std::string> kColorsZh = {"红", "蓝", "绿", "黄", "紫", "橙", "黑", "白"};
inline const std::vector<std::string> kObjectsZh = {"雨伞", "台灯", "背包", "水壶", "围巾", "闹钟", "笔记本", "自行车"};
inline const std::vector<std::string> kCitiesZh = {"成都", "杭州", "西安", "厦门", "青岛", "昆明", "大连", "苏州"};
inline const std::vector<std::string> kJobsZh = {"医生", "教师", "厨师", "律师", "司机", "记者", "画家", "工程师"};

inline const std::vector<std::string> kOffTopic = {
    "The museum closes early on public holidays.",
    "Heavy rain is expected along the coast tomorrow.",
    "Most trains on the northern line run every ten minutes.",
    "The recipe calls for two cups of flour and a pinch of salt.",
    "Ticket prices for the concert went up last spring.",
    "The library will repaint its reading room next month.",
    "Several species of owl hunt mostly at night.",
    "The football match ended in a draw after extra time.",
};
inline const std::vector<std::string> kOffTopicZh = {
    "明天沿海地区会有大雨。", "博物馆在节假日提前关门。", "这道菜需要两勺面粉和少许盐。",
    "音乐会的票价去年涨了。", "图书馆下个月要重新粉刷阅览室。", "足球比赛加时后打成了平局。",
};

inline const std::string& pick(const std::vector<std::string>& v, Rng& rng) {
    return v[uniform_index(rng, v.size())];
}

inline std::vector<std::string> others(const std::vector<std::string>& v, const std::string& except, Rng& rng, std::size_t n) {
    std::vector<std::string> rest;
    for (const auto& x : v) {
        if (x != except) rest.push_back(x);
    }
    seeded_shuffle(rest, rng);
    rest.resize(std::min(n, rest.size()));
    return rest;
}

inline std::string cap(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

}  // namespace detail

inline Fact fact_en(Rng& rng, const std::string& name) {
    using namespace detail;
    switch (rng() % 3) {
        case 0: {
            const auto& c = pick(kColors, rng);
            const auto& o = pick(kObjects, rng);
            return {name + " keeps a " + c + " " + o + " in the " + pick(kRooms, rng) + ".",
                    "What color is the " + o + " that " + name + " keeps?", c, others(kColors, c, rng, 3)};
        }
        case 1: {
            const auto& c = pick(kCities, rng);
            const auto year = std::to_string(1990 + rng() % 30);
            return {name + " moved to " + c + " in " + year + ".", "Which city did " + name + " move to?", c,
                    others(kCities, c, rng, 3)};
        }
        default: {
            const auto& j = pick(kJobs, rng);
            return {name + " works as a " + j + " at the " + pick(kPlaces, rng) + ".",
                    "What does " + name + " work as?", j, others(kJobs, j, rng, 3)};
        }
    }
}

inline Fact fact_zh(Rng& rng, const std::string& name) {
    using namespace detail;
    switch (rng() % 3) {
        case 0: {
            const auto c = pick(kColorsZh, rng) + "色";
            const auto& o = pick(kObjectsZh, rng);
            return {name + "有一个" + c + "的" + o + "。", name + "的" + o + "是什么颜色？", c, {}};
        }
        case 1: {
            const auto& c = pick(kCitiesZh, rng);
            return {name + "在" + std::to_string(1990 + rng() % 30) + "年搬到了" + c + "。", name + "搬到了哪个城市？", c,
                    others(kCitiesZh, c, rng, 3)};
        }
        default: {
            const auto& j = pick(kJobsZh, rng);
            return {name + "的职业是" + j + "。", name + "是做什么工作的？", j, others(kJobsZh, j, rng, 3)};
        }
    }
}

enum class Grade { good, medium, bad };

struct DemoItem {
    std::string id;
    std::string dataset;
    bool zh = false;
    bool mc = false;
    Fact fact;
};

/// Answer text and judge reply for one graded answer.
inline std::pair<std::string, std::string> scripted_answer(const DemoItem& item, Grade g, Rng& rng) {
    using namespace detail;
    if (item.zh) {
        switch (g) {
            case Grade::good: return {item.fact.answer + "。", "Goodness: 5\nSimilarity: 5"};
            case Grade::medium: return {"根据材料，答案是" + item.fact.answer + "。", "Goodness: 4\nSimilarity: 4"};
            case Grade::bad: return {pick(kOffTopicZh, rng), "Goodness: 1\nSimilarity: 1"};
        }
    }
    switch (g) {
        case Grade::good: return {cap(item.fact.answer) + ".", "Goodness: 5\nSimilarity: 5"};
        case Grade::medium: return {"The passage says " + item.fact.answer + ".", "Goodness: 4\nSimilarity: 4"};
        case Grade::bad: return {pick(kOffTopic, rng), "Goodness: 1\nSimilarity: 1"};
    }
    return {};
}

inline Grade draw_grade(Rng& rng, const std::array<double, 2>& cut) {
    const double u = uniform_real(rng);
    return u < cut[0] ? Grade::good : u < cut[1] ? Grade::medium : Grade::bad;
}

struct DemoModel {
    std::string name;
    std::array<double, 2> cut;  // P(good), P(good or medium)
};

inline const std::vector<DemoModel>& demo_models() {
    static const std::vector<DemoModel> models = {{"demo-large", {0.55, 0.7}}, {"demo-small", {0.35, 0.5}}};
    return models;
}

/// All files of the demo, keyed by path relative to the demo directory.
inline std::map<std::string, std::string> demo_files() {
    using nlohmann::json;
    using namespace detail;
    std::map<std::string, std::string> files;
    Rng rng(kSeed);
    std::vector<DemoItem> items;

    const auto context_for = [&](const Fact& f, bool zh) {
        std::vector<std::string> parts = {f.sentence};
        for (int i = 0; i < 2; ++i) {
            parts.push_back(zh ? fact_zh(rng, pick(kNamesZh, rng)).sentence : fact_en(rng, pick(kNames, rng)).sentence);
        }
        seeded_shuffle(parts, rng);
        std::string out;
        for (const auto& p : parts) out += (out.empty() || zh ? "" : " ") + p;
        return out;
    };

    // extractive, English; field names differ from the canonical ones
    {
        std::string raw;
        for (std::size_t i = 0; i < kPerDataset; ++i) {
            DemoItem it{"squadlike-" + std::to_string(i), "squadlike", false, false, fact_en(rng, kNames[i % kNames.size()])};
            raw += json{{"qid", it.id}, {"passage", context_for(it.fact, false)}, {"query", it.fact.question},
                        {"answers", json::array({it.fact.answer})}}.dump() + "\n";
            items.push_back(std::move(it));
        }
        raw += json{{"qid", "squadlike-broken"}, {"passage", "An unanswered record."}, {"query", "Where is the answer?"}}.dump() + "\n";
        files["datasets/squadlike.jsonl"] = raw;
        files["datasets/squadlike.descriptor.json"] =
            json{{"dataset", "squadlike"}, {"kind", "ERC"}, {"language", "EN"},
                 {"fields", {{"id", "qid"}, {"context", "passage"}, {"question", "query"}, {"gold_answers", "answers"}}}}
                .dump(2) + "\n";
    }
    // multiple choice, English, JSON array file
    {
        json raw = json::array();
        for (std::size_t i = 0; i < kPerDataset; ++i) {
            DemoItem it{"choice-" + std::to_string(i), "choice", false, true, fact_en(rng, kNames[(i + 7) % kNames.size()])};
            raw.push_back({{"id", it.id}, {"context", context_for(it.fact, false)}, {"question", it.fact.question},
                           {"correct", it.fact.answer}, {"wrong", it.fact.alternatives}});
            items.push_back(std::move(it));
        }
        files["datasets/choice.json"] = raw.dump(1) + "\n";
        files["datasets/choice.descriptor.json"] =
            json{{"dataset", "choice"}, {"kind", "MC"}, {"language", "EN"},
                 {"fields", {{"gold_answers", "correct"}, {"distractors", "wrong"}}}}
                .dump(2) + "\n";
    }
    // multi-turn dialogue, English
    {
        std::string raw;
        for (std::size_t i = 0; i < kPerDataset; ++i) {
            DemoItem it{"dialog-" + std::to_string(i), "dialog", false, false, fact_en(rng, kNames[(i + 13) % kNames.size()])};
            const auto filler = fact_en(rng, pick(kNames, rng)).sentence;
            json turns = json::array({json::array({"user", "Have you heard any news from our friends?"}),
                                      json::array({"assistant", "Yes. " + it.fact.sentence}),
                                      json::array({"user", "Nice. Anything else?"}),
                                      json::array({"assistant", filler})});
            raw += json{{"id", it.id}, {"dialogue", {{"turns", turns}}}, {"question", it.fact.question},
                        {"gold", it.fact.answer}}.dump() + "\n";
            items.push_back(std::move(it));
        }
        files["datasets/dialog.jsonl"] = raw;
        files["datasets/dialog.descriptor.json"] =
            json{{"dataset", "dialog"}, {"kind", "MTD"}, {"language", "EN"},
                 {"fields", {{"history", "dialogue.turns"}, {"gold_answers", "gold"}}}}
                .dump(2) + "\n";
    }
    // extractive, Chinese, nested fields
    {
        std::string raw;
        for (std::size_t i = 0; i < kPerDataset; ++i) {
            DemoItem it{"zhread-" + std::to_string(i), "zhread", true, false, fact_zh(rng, kNamesZh[i % kNamesZh.size()])};
            raw += json{{"meta", {{"id", it.id}}}, {"q", {{"text", it.fact.question}}}, {"ctx", context_for(it.fact, true)},
                        {"gold", json::array({it.fact.answer})}}.dump() + "\n";
            items.push_back(std::move(it));
        }
        files["datasets/zhread.jsonl"] = raw;
        files["datasets/zhread.descriptor.json"] =
            json{{"dataset", "zhread"}, {"kind", "ERC"}, {"language", "ZH"},
                 {"fields", {{"id", "meta.id"}, {"question", "q.text"}, {"context", "ctx"}, {"gold_answers", "gold"}}}}
                .dump(2) + "\n";
    }

    std::string ratings;
    for (const auto& it : items) {
        json mock{{"models", json::object()}};
        for (const auto& m : demo_models()) {
            const auto grade = draw_grade(rng, m.cut);
            const auto [answer, verdict] = scripted_answer(it, grade, rng);
            mock["models"][m.name] = {{"generate", {answer}}, {"judge", {verdict}}};
            int label = grade == Grade::bad ? 0 : 1;
            if (uniform_real(rng) < kRatingNoise) label = 1 - label;
            ratings += json{{"sample_id", it.id}, {"model_id", m.name}, {"label", label}}.dump() + "\n";
        }
        files["mock/" + it.id + ".json"] = mock.dump(2) + "\n";
    }
    files["human_ratings.jsonl"] = ratings;

    json sources = json::array();
    for (const auto& [ds, rec] : std::vector<std::pair<std::string, std::string>>{
             {"squadlike", "squadlike.jsonl"}, {"choice", "choice.json"}, {"dialog", "dialog.jsonl"}, {"zhread", "zhread.jsonl"}}) {
        sources.push_back({{"descriptor", "datasets/" + ds + ".descriptor.json"}, {"records", "datasets/" + rec}});
    }
    json generators = json::array();
    for (const auto& m : demo_models()) generators.push_back({{"kind", "mock"}, {"model", m.name}, {"mock_dir", "mock"}});
    const json config{
        {"seed", 7},
        {"out", "../../out/demo"},
        {"sources", sources},
        {"generators", generators},
        {"judge", {{"kind", "mock"}, {"model", "demo-judge"}, {"mock_dir", "mock"}}},
        {"embedding", {{"kind", "hash"}, {"dim", 64}}},
        {"human_ratings", "human_ratings.jsonl"},
        {"calibration", {{"auc_ratio", 0.5}, {"pearson_ratio", 0.5}, {"apply", false}}},
        {"discriminator",
         {{"k", 4}, {"strategies", {"normalization", "discrete", "weighted_average"}}, {"epochs", 150}, {"learning_rate", 0.5}, {"batch_size", 32}}},
        {"evaluation",
         {{"folds", 10}, {"grid", true}, {"grid_ks", {4, 6, 8, 10}}, {"iid_ood", {{"enabled", true}, {"repeats", 5}}}}}};
    files["pipeline.json"] = config.dump(2) + "\n";
    return files;
}

inline void write_demo(const std::filesystem::path& dir) {
    for (const auto& [rel, content] : demo_files()) write_file(dir / rel, content);
}

}  // namespace reld::demo
