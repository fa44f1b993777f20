/// @file annotation.hpp
/// @brief Human rating campaigns: seeded item sampling, rater groups,
/// per-item agreement with discard-and-replace, and an event-sourced store.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "reld/error.hpp"
#include "reld/evaluation.hpp"
#include "reld/util.hpp"

namespace reld {

/// A (sample, answer) pair eligible for rating.
struct PoolEntry {
    std::string sample_id;
    std::string model_id;
    std::string dataset;
    std::string question;
    std::string context;
    std::string answer;
    std::vector<std::string> gold_answers;
};

inline nlohmann::json to_json(const PoolEntry& e) {
    return {{"sample_id", e.sample_id}, {"model_id", e.model_id}, {"dataset", e.dataset},
            {"question", e.question},   {"context", e.context},   {"answer", e.answer},
            {"gold_answers", e.gold_answers}};
}

inline PoolEntry pool_entry_from_json(const nlohmann::json& j) {
    PoolEntry e;
    try {
        e.sample_id = j.at("sample_id").get<std::string>();
        e.dataset = j.at("dataset").get<std::string>();
        e.question = j.at("question").get<std::string>();
        e.answer = j.at("answer").get<std::string>();
        e.model_id = j.value("model_id", "");
        e.context = j.value("context", "");
        e.gold_answers = j.value("gold_answers", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorKind::validation, std::string("bad pool entry: ") + ex.what());
    }
    return e;
}

enum class ItemState { pending, rated, flagged, replaced };

inline const char* to_string(ItemState s) {
    switch (s) {
        case ItemState::pending: return "pending";
        case ItemState::rated: return "rated";
        case ItemState::flagged: return "flagged";
        case ItemState::replaced: return "replaced";
    }
    return "pending";
}

inline ItemState parse_item_state(const std::string& s) {
    if (s == "pending") return ItemState::pending;
    if (s == "rated") return ItemState::rated;
    if (s == "flagged") return ItemState::flagged;
    if (s == "replaced") return ItemState::replaced;
    fail(ErrorKind::data, "unknown item state '" + s + "'");
}

struct Rating {
    int score = 0;
    std::string at;
};

struct CampaignItem {
    std::string id;
    PoolEntry entry;
    int group = 0;
    ItemState state = ItemState::pending;
    std::map<std::string, Rating> ratings;  // rater token -> rating
    std::string replaces;
    std::string replaced_by;

    bool active() const { return state == ItemState::pending || state == ItemState::rated; }
};

struct CampaignConfig {
    std::string id;
    std::uint64_t seed = 0;
    std::size_t per_dataset_count = 1000;
    int groups = 3;
    int raters_per_group = 3;
    double threshold = 0.7;

    void validate() const {
        if (id.empty() || id.find('/') != std::string::npos) fail(ErrorKind::validation, "campaign id must be a non-empty string without '/'");
        if (per_dataset_count == 0) fail(ErrorKind::validation, "per_dataset_count must be positive");
        if (groups < 1) fail(ErrorKind::validation, "groups must be at least 1");
        if (raters_per_group < 1) fail(ErrorKind::validation, "raters_per_group must be at least 1");
        if (!(threshold > 0.0 && threshold <= 1.0)) fail(ErrorKind::validation, "threshold must lie in (0,1]");
    }

    nlohmann::json to_json() const {
        return {{"id", id},         {"seed", seed},         {"per_dataset_count", per_dataset_count},
                {"groups", groups}, {"raters_per_group", raters_per_group}, {"threshold", threshold}};
    }

    static CampaignConfig from_json(const nlohmann::json& j) {
        CampaignConfig c;
        try {
            c.id = j.value("id", "");
            c.seed = j.value("seed", std::uint64_t{0});
            c.per_dataset_count = j.value("per_dataset_count", std::size_t{1000});
            c.groups = j.value("groups", 3);
            c.raters_per_group = j.value("raters_per_group", 3);
            c.threshold = j.value("threshold", 0.7);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::validation, std::string("bad campaign config: ") + e.what());
        }
        return c;
    }
};

struct Campaign {
    CampaignConfig config;
    std::vector<std::vector<std::string>> raters;  // per group
    std::map<std::string, int> rater_group;
    std::vector<CampaignItem> items;               // ascending id
    std::map<std::string, std::size_t> item_index;
    std::map<std::string, std::deque<PoolEntry>> remainder;  // unsampled, in draw order
    std::size_t next_number = 1;
    std::vector<std::string> warnings;
    std::vector<std::string> audit;

    CampaignItem& item(const std::string& id) {
        const auto it = item_index.find(id);
        if (it == item_index.end()) fail(ErrorKind::not_found, "unknown item '" + id + "'");
        return items[it->second];
    }
    const CampaignItem& item(const std::string& id) const { return const_cast<Campaign*>(this)->item(id); }

    int group_of(const std::string& rater) const {
        const auto it = rater_group.find(rater);
        if (it == rater_group.end()) fail(ErrorKind::authorization, "unknown rater token");
        return it->second;
    }

    std::size_t add_item(PoolEntry entry, int group, std::string replaces = {}) {
        char id[32];
        std::snprintf(id, sizeof id, "item-%06zu", next_number++);
        CampaignItem it;
        it.id = id;
        it.entry = std::move(entry);
        it.group = group;
        it.replaces = std::move(replaces);
        item_index[it.id] = items.size();
        items.push_back(std::move(it));
        return items.size() - 1;
    }
};

inline std::string rater_token(const CampaignConfig& c, int group, int member) {
    return "r-" + sha256_hex(c.id + "|" + std::to_string(c.seed) + "|" + std::to_string(group) + "|" +
                             std::to_string(member))
                      .substr(0, 16);
}

/// Draws min(per_dataset_count, size) entries per dataset and deals them
/// evenly across groups. Input order does not matter.
inline Campaign create_campaign(const CampaignConfig& config, std::vector<PoolEntry> pool) {
    config.validate();
    if (pool.empty()) fail(ErrorKind::data, "campaign pool is empty");
    Campaign c;
    c.config = config;
    for (int g = 0; g < config.groups; ++g) {
        c.raters.emplace_back();
        for (int m = 0; m < config.raters_per_group; ++m) {
            const auto token = rater_token(config, g, m);
            c.raters.back().push_back(token);
            c.rater_group[token] = g;
        }
    }

    std::map<std::string, std::vector<PoolEntry>> by_dataset;
    for (auto& e : pool) by_dataset[e.dataset].push_back(std::move(e));
    std::vector<PoolEntry> drawn;
    for (auto& [dataset, entries] : by_dataset) {
        std::sort(entries.begin(), entries.end(), [](const PoolEntry& a, const PoolEntry& b) {
            return std::tie(a.sample_id, a.model_id) < std::tie(b.sample_id, b.model_id);
        });
        for (std::size_t i = 1; i < entries.size(); ++i) {
            if (entries[i].sample_id == entries[i - 1].sample_id && entries[i].model_id == entries[i - 1].model_id) {
                fail(ErrorKind::data, "duplicate pool entry " + entries[i].sample_id + " in " + dataset);
            }
        }
        Rng rng(derive_seed(config.seed, "sample/" + dataset));
        seeded_shuffle(entries, rng);
        const std::size_t take = std::min(config.per_dataset_count, entries.size());
        if (take < config.per_dataset_count) {
            c.warnings.push_back("dataset " + dataset + " has " + std::to_string(entries.size()) + " items, fewer than " +
                                 std::to_string(config.per_dataset_count) + "; taking all");
        }
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (i < take) {
                drawn.push_back(std::move(entries[i]));
            } else {
                c.remainder[dataset].push_back(std::move(entries[i]));
            }
        }
    }

    std::vector<std::size_t> order(drawn.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, "groups"));
    seeded_shuffle(order, rng);
    std::vector<int> group(drawn.size());
    for (std::size_t i = 0; i < order.size(); ++i) group[order[i]] = static_cast<int>(i % config.groups);
    for (std::size_t i = 0; i < drawn.size(); ++i) c.add_item(std::move(drawn[i]), group[i]);
    return c;
}

/// Majority fraction of the item's ratings; 2/3 for a single dissent among three.
inline double item_agreement(const CampaignItem& item) {
    if (item.ratings.empty()) return 0.0;
    std::size_t ones = 0;
    for (const auto& [_, r] : item.ratings) ones += r.score == 1;
    const std::size_t n = item.ratings.size();
    return static_cast<double>(std::max(ones, n - ones)) / static_cast<double>(n);
}

/// Majority label; ties resolve to 0.
inline int consensus_label(const CampaignItem& item) {
    std::size_t ones = 0;
    for (const auto& [_, r] : item.ratings) ones += r.score == 1;
    return ones * 2 > item.ratings.size() ? 1 : 0;
}

inline nlohmann::json item_view(const Campaign& c, const CampaignItem& item) {
    return {{"item_id", item.id},
            {"dataset", item.entry.dataset},
            {"sample_id", item.entry.sample_id},
            {"question", item.entry.question},
            {"context", item.entry.context},
            {"answer", item.entry.answer},
            {"group", item.group},
            {"replaces", item.replaces},
            {"ratings", item.ratings.size()},
            {"raters_needed", c.config.raters_per_group}};
}

/// Lowest-id pending item in the rater's group that the rater has not rated.
inline const CampaignItem* next_item(const Campaign& c, const std::string& rater) {
    const int g = c.group_of(rater);
    for (const auto& it : c.items) {
        if (it.group == g && it.state == ItemState::pending && !it.ratings.count(rater)) return &it;
    }
    return nullptr;
}

struct SubmitResult {
    bool duplicate = false;
    bool changed = false;  // state mutated; an event must be logged
    nlohmann::json body;
};

inline SubmitResult submit_rating(Campaign& c, const std::string& item_id, const std::string& rater, int score,
                                  const std::string& at) {
    if (score != 0 && score != 1) fail(ErrorKind::validation, "score must be 0 or 1, got " + std::to_string(score));
    const int g = c.group_of(rater);
    auto& item = c.item(item_id);
    if (item.group != g) fail(ErrorKind::authorization, "rater does not belong to the group of " + item_id);
    if (!item.active()) fail(ErrorKind::validation, item_id + " is " + to_string(item.state) + " and takes no ratings");

    SubmitResult out;
    const auto prev = item.ratings.find(rater);
    if (prev != item.ratings.end() && prev->second.score == score) {
        out.duplicate = true;
    } else {
        if (prev != item.ratings.end()) {
            c.audit.push_back(at + " " + rater + " changed " + item_id + " from " + std::to_string(prev->second.score) +
                              " to " + std::to_string(score));
        }
        item.ratings[rater] = Rating{score, at};
        if (item.ratings.size() == c.raters[static_cast<std::size_t>(g)].size()) item.state = ItemState::rated;
        out.changed = true;
    }
    out.body = {{"ack", true},
                {"duplicate", out.duplicate},
                {"item_id", item.id},
                {"state", to_string(item.state)},
                {"ratings", item.ratings.size()},
                {"consensus_so_far", consensus_label(item)},
                {"agreement_so_far", item_agreement(item)},
                {"gold_answers", item.entry.gold_answers}};
    return out;
}

/// Nominal alpha over the ratings of every active item; nullopt when too few
/// ratings are pairable.
inline std::optional<double> campaign_alpha(const Campaign& c) {
    RatingMatrix m;
    for (const auto& it : c.items) {
        if (!it.active() || it.ratings.empty()) continue;
        m.emplace_back();
        for (const auto& [_, r] : it.ratings) m.back().push_back(r.score);
    }
    try {
        return krippendorff_alpha(m);
    } catch (const Error&) {
        return std::nullopt;
    }
}

inline nlohmann::json agreement_report(const Campaign& c) {
    nlohmann::json items = nlohmann::json::array();
    std::map<std::string, std::map<std::string, std::size_t>> progress;
    std::size_t flagged = 0;
    for (const auto& it : c.items) {
        auto& p = progress[it.entry.dataset];
        ++p[to_string(it.state)];
        if (it.state == ItemState::flagged || it.state == ItemState::replaced) ++flagged;
        if (it.state == ItemState::pending) continue;
        items.push_back({{"item_id", it.id},
                         {"state", to_string(it.state)},
                         {"agreement", item_agreement(it)},
                         {"below_threshold", item_agreement(it) < c.config.threshold}});
    }
    const auto alpha = campaign_alpha(c);
    return {{"campaign", c.config.id},
            {"alpha", alpha ? nlohmann::json(*alpha) : nlohmann::json(nullptr)},
            {"threshold", c.config.threshold},
            {"flagged", flagged},
            {"items", items},
            {"progress", progress}};
}

/// Flags fully rated items below the threshold and replaces each with the
/// next unsampled entry of its dataset, routed to the same group.
inline nlohmann::json agreement_gate(Campaign& c) {
    const bool any_rated = std::any_of(c.items.begin(), c.items.end(),
                                       [](const CampaignItem& it) { return it.state == ItemState::rated; });
    if (!any_rated) fail(ErrorKind::validation, "agreement gate needs at least one fully rated item");
    const auto alpha = campaign_alpha(c);
    nlohmann::json flagged = nlohmann::json::array(), replacements = nlohmann::json::object(),
                   discarded = nlohmann::json::array();
    const std::size_t n = c.items.size();  // replacements appended below are not gated now
    for (std::size_t i = 0; i < n; ++i) {
        if (c.items[i].state != ItemState::rated || item_agreement(c.items[i]) >= c.config.threshold) continue;
        c.items[i].state = ItemState::flagged;
        flagged.push_back(c.items[i].id);
        auto& queue = c.remainder[c.items[i].entry.dataset];
        if (queue.empty()) {
            discarded.push_back(c.items[i].id);
            c.audit.push_back("discarded " + c.items[i].id + ": no unsampled items left in " + c.items[i].entry.dataset);
            continue;
        }
        PoolEntry next = std::move(queue.front());
        queue.pop_front();
        const std::size_t r = c.add_item(std::move(next), c.items[i].group, c.items[i].id);
        c.items[i].state = ItemState::replaced;
        c.items[i].replaced_by = c.items[r].id;
        replacements[c.items[i].id] = c.items[r].id;
    }
    return {{"alpha", alpha ? nlohmann::json(*alpha) : nlohmann::json(nullptr)},
            {"flagged", flagged},
            {"replacements", replacements},
            {"discarded", discarded}};
}

struct ExportRow {
    std::string item_id;
    std::string sample_id;
    std::string model_id;
    std::string dataset;
    int label = 0;
    double agreement = 0.0;
};

inline nlohmann::json to_json(const ExportRow& r) {
    return {{"item_id", r.item_id}, {"sample_id", r.sample_id}, {"model_id", r.model_id},
            {"dataset", r.dataset}, {"label", r.label},         {"agreement", r.agreement}};
}

/// Consensus labels of rated items at or above the threshold, in item order.
inline std::vector<ExportRow> export_ratings(const Campaign& c) {
    std::vector<ExportRow> out;
    for (const auto& it : c.items) {
        if (it.state != ItemState::rated || item_agreement(it) < c.config.threshold) continue;
        out.push_back({it.id, it.entry.sample_id, it.entry.model_id, it.entry.dataset, consensus_label(it),
                       item_agreement(it)});
    }
    if (out.empty()) fail(ErrorKind::validation, "campaign " + c.config.id + " has no exportable items");
    return out;
}

inline nlohmann::json campaign_summary(const Campaign& c) {
    std::map<std::string, std::size_t> states;
    std::vector<std::size_t> per_group(c.raters.size(), 0);
    for (const auto& it : c.items) {
        ++states[to_string(it.state)];
        if (it.active()) ++per_group[static_cast<std::size_t>(it.group)];
    }
    std::map<std::string, std::size_t> left;
    for (const auto& [d, q] : c.remainder) left[d] = q.size();
    return {{"id", c.config.id},         {"config", c.config.to_json()}, {"items", c.items.size()},
            {"states", states},          {"active_per_group", per_group}, {"replacement_pool", left},
            {"warnings", c.warnings},    {"audit", c.audit}};
}

// ---------------------------------------------------------------------------
// Full state (snapshots and replay comparison)
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const Campaign& c) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& it : c.items) {
        nlohmann::json ratings = nlohmann::json::object();
        for (const auto& [rater, r] : it.ratings) ratings[rater] = {{"score", r.score}, {"at", r.at}};
        items.push_back({{"id", it.id},
                         {"entry", to_json(it.entry)},
                         {"group", it.group},
                         {"state", to_string(it.state)},
                         {"ratings", ratings},
                         {"replaces", it.replaces},
                         {"replaced_by", it.replaced_by}});
    }
    nlohmann::json remainder = nlohmann::json::object();
    for (const auto& [d, q] : c.remainder) {
        remainder[d] = nlohmann::json::array();
        for (const auto& e : q) remainder[d].push_back(to_json(e));
    }
    return {{"config", c.config.to_json()}, {"raters", c.raters},     {"items", items},
            {"remainder", remainder},       {"next_number", c.next_number},
            {"warnings", c.warnings},       {"audit", c.audit}};
}

inline Campaign campaign_from_json(const nlohmann::json& j) {
    Campaign c;
    c.config = CampaignConfig::from_json(j.at("config"));
    c.raters = j.at("raters").get<std::vector<std::vector<std::string>>>();
    for (std::size_t g = 0; g < c.raters.size(); ++g) {
        for (const auto& t : c.raters[g]) c.rater_group[t] = static_cast<int>(g);
    }
    for (const auto& ij : j.at("items")) {
        CampaignItem it;
        it.id = ij.at("id").get<std::string>();
        it.entry = pool_entry_from_json(ij.at("entry"));
        it.group = ij.at("group").get<int>();
        it.state = parse_item_state(ij.at("state").get<std::string>());
        for (const auto& [rater, r] : ij.at("ratings").items()) {
            it.ratings[rater] = Rating{r.at("score").get<int>(), r.at("at").get<std::string>()};
        }
        it.replaces = ij.value("replaces", "");
        it.replaced_by = ij.value("replaced_by", "");
        c.item_index[it.id] = c.items.size();
        c.items.push_back(std::move(it));
    }
    for (const auto& [d, arr] : j.at("remainder").items()) {
        auto& q = c.remainder[d];
        for (const auto& e : arr) q.push_back(pool_entry_from_json(e));
    }
    c.next_number = j.at("next_number").get<std::size_t>();
    c.warnings = j.value("warnings", std::vector<std::string>{});
    c.audit = j.value("audit", std::vector<std::string>{});
    return c;
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

/// Applies one logged event. "create" builds the campaign; the rest mutate it.
inline void apply_event(std::optional<Campaign>& c, const nlohmann::json& event) {
    const auto type = event.at("type").get<std::string>();
    if (type == "create") {
        std::vector<PoolEntry> pool;
        for (const auto& e : event.at("pool")) pool.push_back(pool_entry_from_json(e));
        c = create_campaign(CampaignConfig::from_json(event.at("config")), std::move(pool));
        return;
    }
    if (!c) fail(ErrorKind::data, "event log does not start with a create event");
    if (type == "rating") {
        submit_rating(*c, event.at("item_id").get<std::string>(), event.at("rater").get<std::string>(),
                      event.at("score").get<int>(), event.at("at").get<std::string>());
    } else if (type == "gate") {
        agreement_gate(*c);
    } else {
        fail(ErrorKind::data, "unknown event type '" + type + "'");
    }
}

inline Campaign replay_events(const std::vector<nlohmann::json>& events) {
    std::optional<Campaign> c;
    for (const auto& e : events) apply_event(c, e);
    if (!c) fail(ErrorKind::data, "empty event log");
    return std::move(*c);
}

inline std::vector<nlohmann::json> read_event_log(const std::filesystem::path& path) {
    std::vector<nlohmann::json> events;
    for (const auto& line : read_lines(path)) {
        if (trim(line).empty()) continue;
        events.push_back(nlohmann::json::parse(line));
    }
    return events;
}

inline std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Campaigns persisted as <dir>/<id>/events.jsonl plus snapshot.json every
/// `snapshot_every` events. Writers hold the lock exclusively; readers share it.
class CampaignStore {
public:
    explicit CampaignStore(std::filesystem::path dir, std::size_t snapshot_every = 100)
        : dir_(std::move(dir)), snapshot_every_(std::max<std::size_t>(1, snapshot_every)) {
        std::filesystem::create_directories(dir_);
        for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
            if (entry.is_directory() && std::filesystem::exists(entry.path() / "events.jsonl")) {
                load(entry.path().filename().string());
            }
        }
    }

    const std::filesystem::path& dir() const { return dir_; }

    /// Body: campaign config fields plus "items", an array of pool entries.
    nlohmann::json create(const nlohmann::json& body) {
        if (!body.is_object() || !body.contains("items") || !body["items"].is_array()) {
            fail(ErrorKind::validation, "campaign body needs an \"items\" array");
        }
        auto config = CampaignConfig::from_json(body);
        if (config.id.empty()) config.id = "c-" + sha256_hex(body.dump()).substr(0, 12);
        std::vector<PoolEntry> pool;
        for (const auto& e : body["items"]) pool.push_back(pool_entry_from_json(e));
        nlohmann::json pool_json = nlohmann::json::array();
        for (const auto& e : pool) pool_json.push_back(to_json(e));

        std::unique_lock lock(mu_);
        if (campaigns_.count(config.id)) fail(ErrorKind::validation, "campaign '" + config.id + "' already exists");
        Slot slot{create_campaign(config, std::move(pool)), 0};
        std::filesystem::create_directories(dir_ / config.id);
        auto& s = campaigns_.emplace(config.id, std::move(slot)).first->second;
        append(s, {{"type", "create"}, {"config", config.to_json()}, {"pool", pool_json}});
        auto out = campaign_summary(s.campaign);
        out["raters"] = s.campaign.raters;
        return out;
    }

    nlohmann::json summary(const std::string& id) const {
        std::shared_lock lock(mu_);
        return campaign_summary(get(id).campaign);
    }

    nlohmann::json next(const std::string& id, const std::string& rater) const {
        std::shared_lock lock(mu_);
        const auto& c = get(id).campaign;
        const auto* item = next_item(c, rater);
        if (!item) return {{"status", "exhausted"}};
        return {{"status", "item"}, {"item", item_view(c, *item)}};
    }

    /// Body: {"item_id", "rater", "score", optional "timestamp"}.
    nlohmann::json rate(const std::string& id, const nlohmann::json& body) {
        std::string item_id, rater, at;
        int score = 0;
        try {
            item_id = body.at("item_id").get<std::string>();
            rater = body.at("rater").get<std::string>();
            score = body.at("score").get<int>();
            at = body.value("timestamp", "");
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::validation, std::string("bad rating body: ") + e.what());
        }
        if (at.empty()) at = utc_now();
        std::unique_lock lock(mu_);
        auto& s = get(id);
        auto result = submit_rating(s.campaign, item_id, rater, score, at);
        if (result.changed) {
            append(s, {{"type", "rating"}, {"item_id", item_id}, {"rater", rater}, {"score", score}, {"at", at}});
        }
        return result.body;
    }

    nlohmann::json agreement(const std::string& id) const {
        std::shared_lock lock(mu_);
        return agreement_report(get(id).campaign);
    }

    nlohmann::json gate(const std::string& id) {
        std::unique_lock lock(mu_);
        auto& s = get(id);
        auto out = agreement_gate(s.campaign);
        append(s, {{"type", "gate"}});
        return out;
    }

    std::vector<ExportRow> export_rows(const std::string& id) const {
        std::shared_lock lock(mu_);
        return export_ratings(get(id).campaign);
    }

    /// Full state; equal to replay_events(read_event_log(...)) at all times.
    nlohmann::json state(const std::string& id) const {
        std::shared_lock lock(mu_);
        return to_json(get(id).campaign);
    }

    std::filesystem::path event_log(const std::string& id) const { return dir_ / id / "events.jsonl"; }

private:
    struct Slot {
        Campaign campaign;
        std::size_t seq = 0;  // events written
    };

    const Slot& get(const std::string& id) const {
        const auto it = campaigns_.find(id);
        if (it == campaigns_.end()) fail(ErrorKind::not_found, "unknown campaign '" + id + "'");
        return it->second;
    }
    Slot& get(const std::string& id) { return const_cast<Slot&>(std::as_const(*this).get(id)); }

    void append(Slot& s, nlohmann::json event) {
        event["seq"] = ++s.seq;
        const auto dir = dir_ / s.campaign.config.id;
        {
            std::ofstream out(dir / "events.jsonl", std::ios::app);
            out << event.dump() << "\n";
            if (!out) fail(ErrorKind::data, "cannot append to " + (dir / "events.jsonl").string());
        }
        if (s.seq % snapshot_every_ == 0) {
            write_file(dir / "snapshot.json", nlohmann::json{{"seq", s.seq}, {"state", to_json(s.campaign)}}.dump());
        }
    }

    void load(const std::string& id) {
        const auto dir = dir_ / id;
        const auto events = read_event_log(dir / "events.jsonl");
        std::optional<Campaign> c;
        std::size_t start = 0;
        if (std::filesystem::exists(dir / "snapshot.json")) {
            const auto snap = nlohmann::json::parse(read_file(dir / "snapshot.json"));
            const auto seq = snap.at("seq").get<std::size_t>();
            if (seq <= events.size()) {
                c = campaign_from_json(snap.at("state"));
                start = seq;
            }
        }
        for (std::size_t i = start; i < events.size(); ++i) apply_event(c, events[i]);
        if (!c) fail(ErrorKind::data, "campaign " + id + " has an empty event log");
        campaigns_.emplace(id, Slot{std::move(*c), events.size()});
    }

    std::filesystem::path dir_;
    std::size_t snapshot_every_;
    mutable std::shared_mutex mu_;
    std::map<std::string, Slot> campaigns_;
};

}  // namespace reld
