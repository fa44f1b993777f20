/// @file llm_gateway.hpp
/// @brief Answer generation and judge assessment against chat-completion
/// endpoints: majority voting, per-window merging, quality gates, caching.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "reld/assessment.hpp"
#include "reld/corpus.hpp"
#include "reld/error.hpp"
#include "reld/metrics.hpp"
#include "reld/text.hpp"
#include "reld/util.hpp"

namespace reld {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Chat clients
// ---------------------------------------------------------------------------

enum class CallRole { generate, judge };

inline const char* to_string(CallRole r) { return r == CallRole::judge ? "judge" : "generate"; }

struct ChatRequest {
    std::string sample_id;
    CallRole role = CallRole::generate;
    std::size_t ordinal = 0;     // per (sample, role) call counter
    std::string subject_model;   // for judge calls: the model whose answer is rated
    std::string prompt;
};

class ChatClient {
public:
    virtual ~ChatClient() = default;
    /// Returns the reply text or throws Error(endpoint).
    virtual std::string complete(const ChatRequest& request) = 0;
    virtual std::string endpoint_id() const = 0;
    virtual std::string model() const = 0;
    std::size_t request_count() const { return requests_.load(); }

protected:
    void count_request() { ++requests_; }

private:
    std::atomic<std::size_t> requests_{0};
};

struct EndpointConfig {
    std::string kind = "mock";  // mock | http
    std::string model = "mock-model";
    std::string base_url;       // e.g. https://api.example.com/v1
    std::string token_env = "RELD_API_TOKEN";
    std::filesystem::path mock_dir;
    std::filesystem::path cache_dir;  // empty disables caching
    int retries = 2;
    int timeout_s = 60;
    double temperature = 0.7;
    std::size_t max_in_flight = 4;

    static EndpointConfig from_json(const json& j, const std::filesystem::path& base = {}) {
        EndpointConfig c;
        c.kind = j.value("kind", c.kind);
        c.model = j.value("model", c.model);
        c.base_url = j.value("base_url", c.base_url);
        c.token_env = j.value("token_env", c.token_env);
        const auto resolve = [&](const std::string& p) -> std::filesystem::path {
            if (p.empty()) return {};
            const std::filesystem::path path(p);
            return path.is_absolute() || base.empty() ? path : base / path;
        };
        c.mock_dir = resolve(j.value("mock_dir", std::string{}));
        c.cache_dir = resolve(j.value("cache_dir", std::string{}));
        c.retries = j.value("retries", c.retries);
        c.timeout_s = j.value("timeout_s", c.timeout_s);
        c.temperature = j.value("temperature", c.temperature);
        c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
        if (c.kind != "mock" && c.kind != "http") fail(ErrorKind::config, "endpoint kind must be mock or http, got " + c.kind);
        if (c.kind == "mock" && c.mock_dir.empty()) fail(ErrorKind::config, "mock endpoint needs mock_dir");
        if (c.kind == "http" && c.base_url.empty()) fail(ErrorKind::config, "http endpoint needs base_url");
        if (c.retries < 0) fail(ErrorKind::config, "retries must be non-negative");
        if (c.max_in_flight == 0) fail(ErrorKind::config, "max_in_flight must be at least 1");
        return c;
    }

    json to_json() const {
        return {{"kind", kind},           {"model", model},         {"base_url", base_url},
                {"token_env", token_env}, {"mock_dir", mock_dir.string()}, {"cache_dir", cache_dir.string()},
                {"retries", retries},     {"timeout_s", timeout_s}, {"temperature", temperature},
                {"max_in_flight", max_in_flight}};
    }
};

/// Canned replies from `<dir>/<sample_id>.json`:
///   {"generate": [...], "judge": [...]}
/// optionally nested per model under "models". Call n gets reply n; the last
/// reply repeats once the list runs out.
class MockChatClient final : public ChatClient {
public:
    MockChatClient(std::filesystem::path dir, std::string model) : dir_(std::move(dir)), model_(std::move(model)) {}

    std::string complete(const ChatRequest& req) override {
        count_request();
        const auto path = dir_ / (req.sample_id + ".json");
        if (!std::filesystem::exists(path)) {
            fail(ErrorKind::endpoint, "sample " + req.sample_id + ": mock endpoint has no replies at " + path.string());
        }
        json doc;
        try {
            doc = json::parse(read_file(path));
        } catch (const json::exception& e) {
            fail(ErrorKind::endpoint, "sample " + req.sample_id + ": malformed mock file: " + e.what());
        }
        const std::string& key_model = req.role == CallRole::judge ? req.subject_model : model_;
        const json* section = &doc;
        if (doc.contains("models") && doc["models"].contains(key_model)) section = &doc["models"][key_model];
        const char* role = to_string(req.role);
        if (!section->contains(role) || !(*section)[role].is_array() || (*section)[role].empty()) {
            fail(ErrorKind::endpoint, "sample " + req.sample_id + ": mock file has no " + role + " replies");
        }
        const auto& replies = (*section)[role];
        const std::size_t i = std::min(req.ordinal, replies.size() - 1);
        return replies[i].get<std::string>();
    }

    std::string endpoint_id() const override { return "mock:" + dir_.string(); }
    std::string model() const override { return model_; }

private:
    std::filesystem::path dir_;
    std::string model_;
};

/// OpenAI-style /chat/completions client.
class HttpChatClient final : public ChatClient {
public:
    explicit HttpChatClient(EndpointConfig config) : config_(std::move(config)) {
        const auto scheme_end = config_.base_url.find("://");
        if (scheme_end == std::string::npos) fail(ErrorKind::config, "base_url needs a scheme: " + config_.base_url);
        const auto path_start = config_.base_url.find('/', scheme_end + 3);
        origin_ = config_.base_url.substr(0, path_start);
        prefix_ = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }

    std::string complete(const ChatRequest& req) override {
        const json body = {{"model", config_.model},
                           {"temperature", config_.temperature},
                           {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})}};
        httplib::Headers headers;
        if (const char* token = std::getenv(config_.token_env.c_str()); token && *token) {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
        std::string last_error;
        for (int attempt = 0; attempt <= config_.retries; ++attempt) {
            count_request();
            httplib::Client cli(origin_);
            cli.set_connection_timeout(config_.timeout_s, 0);
            cli.set_read_timeout(config_.timeout_s, 0);
            auto res = cli.Post(prefix_ + "/chat/completions", headers, body.dump(), "application/json");
            if (!res) {
                last_error = httplib::to_string(res.error());
                continue;
            }
            if (res->status == 200) {
                try {
                    const auto reply = json::parse(res->body);
                    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
                } catch (const json::exception& e) {
                    fail(ErrorKind::endpoint, "sample " + req.sample_id + ": unexpected reply shape: " + e.what());
                }
            }
            last_error = "HTTP " + std::to_string(res->status);
            if (res->status >= 400 && res->status < 500 && res->status != 429) break;
        }
        fail(ErrorKind::endpoint, "sample " + req.sample_id + ": endpoint " + config_.base_url + " failed after " +
                                      std::to_string(config_.retries + 1) + " tries: " + last_error);
    }

    std::string endpoint_id() const override { return config_.base_url; }
    std::string model() const override { return config_.model; }

private:
    EndpointConfig config_;
    std::string origin_;
    std::string prefix_;
};

/// Disk cache in front of another client. The key covers endpoint, model,
/// role, call ordinal and prompt, so repeated attempts stay distinct.
class CachingChatClient final : public ChatClient {
public:
    CachingChatClient(std::unique_ptr<ChatClient> inner, std::filesystem::path dir)
        : inner_(std::move(inner)), dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    static std::string cache_key(const ChatClient& client, const ChatRequest& req) {
        return sha256_hex(client.endpoint_id() + "\n" + client.model() + "\n" + to_string(req.role) + "\n" +
                          std::to_string(req.ordinal) + "\n" + req.prompt);
    }

    std::string complete(const ChatRequest& req) override {
        const auto path = dir_ / (cache_key(*inner_, req) + ".json");
        if (std::filesystem::exists(path)) {
            ++hits_;
            return json::parse(read_file(path)).at("reply").get<std::string>();
        }
        count_request();
        const std::string reply = inner_->complete(req);
        const json entry = {{"endpoint", inner_->endpoint_id()}, {"model", inner_->model()},
                            {"role", to_string(req.role)},        {"ordinal", req.ordinal},
                            {"sample_id", req.sample_id},         {"reply", reply}};
        // write-then-rename keeps concurrent writers of the same key safe
        auto tmp = path;
        tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
        write_file(tmp, entry.dump());
        std::filesystem::rename(tmp, path);
        return reply;
    }

    std::string endpoint_id() const override { return inner_->endpoint_id(); }
    std::string model() const override { return inner_->model(); }
    std::size_t hits() const { return hits_.load(); }

private:
    std::unique_ptr<ChatClient> inner_;
    std::filesystem::path dir_;
    std::atomic<std::size_t> hits_{0};
};

inline std::unique_ptr<ChatClient> make_client(const EndpointConfig& config) {
    std::unique_ptr<ChatClient> client;
    if (config.kind == "mock") {
        client = std::make_unique<MockChatClient>(config.mock_dir, config.model);
    } else {
        client = std::make_unique<HttpChatClient>(config);
    }
    if (!config.cache_dir.empty()) client = std::make_unique<CachingChatClient>(std::move(client), config.cache_dir);
    return client;
}

// ---------------------------------------------------------------------------
// Quality gate and majority selection
// ---------------------------------------------------------------------------

struct QualityResult {
    bool pass = true;
    std::string reason;
};

inline QualityResult quality_check(std::string_view answer, const QASample* sample = nullptr) {
    if (trim(answer).empty()) return {false, "empty answer"};
    if (sample && resolve_option_letter(*sample, answer)) return {};
    if (!is_sentence_terminal(last_visible_codepoint(answer))) return {false, "missing sentence-ending punctuation"};
    return {};
}

/// Canonical-text majority; otherwise the highest mean pairwise ROUGE-L;
/// otherwise the earliest attempt.
inline std::size_t majority_index(const std::vector<std::string>& attempts, Language lang = Language::en) {
    if (attempts.empty()) fail(ErrorKind::usage, "majority_select needs at least one attempt");
    std::vector<std::string> canon;
    for (const auto& a : attempts) canon.push_back(canonicalize(a));
    for (std::size_t i = 0; i < canon.size(); ++i) {
        const auto votes = std::count(canon.begin(), canon.end(), canon[i]);
        if (votes * 2 > static_cast<long>(canon.size())) return i;
    }
    std::vector<TokenSequence> toks;
    for (const auto& a : attempts) toks.push_back(tokenize(a, lang));
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t i = 0; i < attempts.size(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < attempts.size(); ++j) {
            if (i != j) sum += rouge(toks[i], toks[j], RougeVariant::l).f1;
        }
        const double mean = attempts.size() > 1 ? sum / static_cast<double>(attempts.size() - 1) : 0.0;
        if (mean > best_score) {
            best_score = mean;
            best = i;
        }
    }
    return best;
}

inline std::string majority_select(const std::vector<std::string>& attempts, Language lang = Language::en) {
    return attempts[majority_index(attempts, lang)];
}

inline const std::set<std::string>& focus_stopwords() {
    static const std::set<std::string> words = {
        "a",    "an",   "the",   "is",   "are",  "was", "were", "be",   "of",  "in",   "on",   "at",
        "to",   "for",  "by",    "with", "and",  "or",  "what", "who",  "whom", "when", "where", "which",
        "why",  "how",  "does",  "do",   "did",  "it",  "this", "that", "from", "as",   "his",  "her",
        "its",  "their", "he",   "she",  "they", "we",  "you",  "i",    "about"};
    return words;
}

/// Question tokens that carry content.
inline std::set<std::string> focus_tokens(const std::string& question, Language lang) {
    std::set<std::string> out;
    for (const auto& t : tokenize(question, lang).tokens) {
        if (!focus_stopwords().count(t)) out.insert(t);
    }
    return out;
}

/// Picks one window output: the longest (in tokens) that mentions a focus
/// token of the question, else the longest non-empty one. Ties go to the
/// earlier window.
inline std::size_t merge_window_outputs(const std::vector<std::string>& outputs, const std::string& question,
                                        Language lang) {
    if (outputs.empty()) fail(ErrorKind::usage, "no window outputs to merge");
    const auto focus = focus_tokens(question, lang);
    std::optional<std::size_t> best_focused, best_any;
    std::size_t focused_len = 0, any_len = 0;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        const auto toks = tokenize(outputs[i], lang);
        if (toks.empty()) continue;
        const bool mentions = std::any_of(toks.tokens.begin(), toks.tokens.end(),
                                          [&](const std::string& t) { return focus.count(t) > 0; });
        if (mentions && (!best_focused || toks.size() > focused_len)) {
            best_focused = i;
            focused_len = toks.size();
        }
        if (!best_any || toks.size() > any_len) {
            best_any = i;
            any_len = toks.size();
        }
    }
    return best_focused.value_or(best_any.value_or(0));
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

enum class Quality { pass, regenerated, failed };

inline const char* to_string(Quality q) {
    switch (q) {
        case Quality::pass: return "pass";
        case Quality::regenerated: return "regenerated";
        case Quality::failed: return "failed";
    }
    return "failed";
}

inline Quality parse_quality(std::string_view s) {
    if (s == "pass") return Quality::pass;
    if (s == "regenerated") return Quality::regenerated;
    if (s == "failed") return Quality::failed;
    fail(ErrorKind::data, "unknown quality " + std::string(s));
}

inline constexpr std::size_t kGenerationAttempts = 3;

struct GenerationRecord {
    std::string sample_id;
    std::string model_id;
    std::vector<std::string> attempts;                   // exactly three
    std::vector<std::vector<std::string>> window_outputs;  // [attempt][window]
    std::string final_answer;
    Quality quality = Quality::pass;
    std::string quality_reason;
    std::vector<double> latency_ms;  // per attempt

    bool usable() const { return quality != Quality::failed; }
};

inline json to_json(const GenerationRecord& r) {
    return {{"sample_id", r.sample_id},
            {"model_id", r.model_id},
            {"attempts", r.attempts},
            {"window_outputs", r.window_outputs},
            {"final_answer", r.final_answer},
            {"quality", to_string(r.quality)},
            {"quality_reason", r.quality_reason},
            {"latency_ms", r.latency_ms}};
}

inline GenerationRecord generation_from_json(const json& j) {
    GenerationRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.attempts = j.at("attempts").get<std::vector<std::string>>();
    r.window_outputs = j.value("window_outputs", std::vector<std::vector<std::string>>{});
    r.final_answer = j.at("final_answer").get<std::string>();
    r.quality = parse_quality(j.at("quality").get<std::string>());
    r.quality_reason = j.value("quality_reason", "");
    r.latency_ms = j.value("latency_ms", std::vector<double>{});
    if (r.attempts.size() != kGenerationAttempts) {
        fail(ErrorKind::data, "generation record " + r.sample_id + " must have exactly 3 attempts");
    }
    return r;
}

struct GenerationOptions {
    std::size_t window_size = 4000;
    std::size_t stride = 4000;
    PromptOptions prompt;
};

/// Three attempts, each running every window and merging the window outputs.
/// An attempt that fails the quality gate is regenerated once.
inline GenerationRecord generate_answer(const QASample& sample, const std::vector<Window>& windows, ChatClient& client,
                                        const PromptOptions& prompt = {}) {
    if (windows.empty()) fail(ErrorKind::usage, "sample " + sample.id + ": no windows");
    GenerationRecord rec;
    rec.sample_id = sample.id;
    rec.model_id = client.model();
    std::size_t ordinal = 0;
    std::vector<bool> regenerated(kGenerationAttempts, false);
    const auto call = [&](const Window& w) {
        ChatRequest req;
        req.sample_id = sample.id;
        req.role = CallRole::generate;
        req.ordinal = ordinal++;
        // a single window is the whole field, so the plain template applies
        req.prompt = windows.size() == 1 ? render_prompt(sample, prompt) : render_prompt(sample, prompt, w.text);
        return trim(client.complete(req));
    };

    for (std::size_t a = 0; a < kGenerationAttempts; ++a) {
        const auto start = std::chrono::steady_clock::now();
        std::vector<std::string> outputs;
        for (const auto& w : windows) outputs.push_back(call(w));
        std::size_t pick = merge_window_outputs(outputs, sample.question, sample.language);
        if (!quality_check(outputs[pick], &sample).pass) {
            outputs[pick] = call(windows[pick]);
            regenerated[a] = true;
            pick = merge_window_outputs(outputs, sample.question, sample.language);
        }
        rec.attempts.push_back(outputs[pick]);
        rec.window_outputs.push_back(std::move(outputs));
        rec.latency_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
    }

    const std::size_t chosen = majority_index(rec.attempts, sample.language);
    rec.final_answer = rec.attempts[chosen];
    const auto qc = quality_check(rec.final_answer, &sample);
    if (!qc.pass) {
        rec.quality = Quality::failed;
        rec.quality_reason = qc.reason;
    } else if (std::find(regenerated.begin(), regenerated.end(), true) != regenerated.end()) {
        rec.quality = Quality::regenerated;
        rec.quality_reason = "incomplete reply regenerated";
    }
    return rec;
}

inline GenerationRecord generate_answer(const QASample& sample, ChatClient& client, const GenerationOptions& opts = {}) {
    return generate_answer(sample, sample_windows(sample, opts.window_size, opts.stride, opts.prompt), client, opts.prompt);
}

// ---------------------------------------------------------------------------
// Judge
// ---------------------------------------------------------------------------

inline constexpr const char* kJudgePromptVersion = "judge-v1";

inline std::string render_judge_prompt(const QASample& sample, const std::string& answer) {
    std::string gold;
    for (const auto& g : sample.gold_answers) gold += (gold.empty() ? "" : " | ") + escape_field(g);
    const auto resolved = resolve_option_letter(sample, answer);
    return "[" + std::string(kJudgePromptVersion) +
           "] You are grading an answer to a question.\nQuestion: " + escape_field(sample.question) +
           "\nReference answer: " + gold + "\nCandidate answer: " + escape_field(resolved.value_or(answer)) +
           "\nRate the goodness of the candidate answer from 1 (wrong or useless) to 5 (fully correct and well formed), "
           "and its similarity to the reference answer from 1 (unrelated) to 5 (equivalent).\n"
           "Reply with exactly two lines:\nGoodness: <1-5>\nSimilarity: <1-5>";
}

struct JudgeScores {
    int goodness = 0;
    int similarity = 0;
    std::vector<std::string> warnings;
};

/// Reads "Goodness: n" and "Similarity: n" (':' or '=' separators, any case).
/// Out-of-range integers are clamped to [1,5] with a warning.
inline std::optional<JudgeScores> parse_judge_reply(const std::string& reply) {
    static const std::regex good_re(R"(goodness\s*[:=]\s*(-?\d+))", std::regex::icase);
    static const std::regex sim_re(R"(similarity\s*[:=]\s*(-?\d+))", std::regex::icase);
    std::smatch g, s;
    if (!std::regex_search(reply, g, good_re) || !std::regex_search(reply, s, sim_re)) return std::nullopt;
    JudgeScores out;
    const auto clamp = [&](const std::string& digits, const char* label) {
        long v = 0;
        try {
            v = std::stol(digits);
        } catch (const std::exception&) {
            v = digits.front() == '-' ? 1 : 5;
        }
        if (v < 1 || v > 5) {
            const long c = std::clamp(v, 1L, 5L);
            out.warnings.push_back(std::string(label) + " " + digits + " clamped to " + std::to_string(c));
            v = c;
        }
        return static_cast<int>(v);
    };
    out.goodness = clamp(g[1].str(), "goodness");
    out.similarity = clamp(s[1].str(), "similarity");
    return out;
}

inline LlmAssessment judge_assess(const QASample& sample, const std::string& answer, const std::string& answer_model,
                                  ChatClient& judge, int parse_retries = 2) {
    if (trim(answer).empty()) fail(ErrorKind::usage, "sample " + sample.id + ": cannot judge an empty answer");
    ChatRequest req;
    req.sample_id = sample.id;
    req.role = CallRole::judge;
    req.subject_model = answer_model;
    req.prompt = render_judge_prompt(sample, answer);
    std::string reply;
    for (int attempt = 0; attempt <= parse_retries; ++attempt) {
        req.ordinal = static_cast<std::size_t>(attempt);
        reply = judge.complete(req);
        if (auto parsed = parse_judge_reply(reply)) {
            LlmAssessment a;
            a.sample_id = sample.id;
            a.model_id = answer_model;
            a.goodness = parsed->goodness;
            a.similarity = parsed->similarity;
            a.judge_model = judge.model();
            a.raw_reply = reply;
            a.warnings = std::move(parsed->warnings);
            return a;
        }
    }
    fail(ErrorKind::assessment, "sample " + sample.id + ": judge reply unparsable after " +
                                    std::to_string(parse_retries + 1) + " tries: " + reply);
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

struct BatchFailure {
    std::string sample_id;
    ErrorKind kind = ErrorKind::endpoint;
    std::string message;
};

template <typename T>
struct BatchResult {
    std::vector<T> records;  // sorted by (sample_id, model_id)
    std::vector<BatchFailure> failures;
};

/// Keyed store: one record per (sample, model), later writes replace earlier ones.
template <typename T>
class KeyedRecords {
public:
    void put(T rec) {
        std::lock_guard lock(mu_);
        auto key = std::make_pair(rec.sample_id, rec.model_id);
        by_key_.insert_or_assign(std::move(key), std::move(rec));
    }
    std::vector<T> sorted() const {
        std::lock_guard lock(mu_);
        std::vector<T> out;
        for (const auto& [_, r] : by_key_) out.push_back(r);
        return out;
    }

private:
    mutable std::mutex mu_;
    std::map<std::pair<std::string, std::string>, T> by_key_;
};

template <typename Fn>
BatchResult<std::invoke_result_t<Fn, std::size_t>> run_batch(std::size_t n, std::size_t in_flight,
                                                             const std::vector<std::string>& ids, Fn&& make) {
    using T = std::invoke_result_t<Fn, std::size_t>;
    KeyedRecords<T> store;
    std::vector<std::optional<ErrorKind>> kinds(n);
    const auto errors = run_bounded(n, in_flight, [&](std::size_t i) {
        try {
            store.put(make(i));
        } catch (const Error& e) {
            kinds[i] = e.kind();
            throw;
        }
    });
    BatchResult<T> out;
    out.records = store.sorted();
    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) out.failures.push_back({ids[i], kinds[i].value_or(ErrorKind::data), *errors[i]});
    }
    return out;
}

inline BatchResult<GenerationRecord> generate_all(const std::vector<QASample>& samples, ChatClient& client,
                                                  const GenerationOptions& opts = {}, std::size_t in_flight = 4) {
    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.id);
    return run_batch(samples.size(), in_flight, ids,
                     [&](std::size_t i) { return generate_answer(samples[i], client, opts); });
}

/// Judges every usable generation. Unusable records are skipped; parse
/// failures become BatchFailure entries with kind assessment.
inline BatchResult<LlmAssessment> assess_all(const std::vector<QASample>& samples,
                                             const std::vector<GenerationRecord>& generations, ChatClient& judge,
                                             std::size_t in_flight = 4, int parse_retries = 2) {
    std::map<std::string, const QASample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;
    std::vector<const GenerationRecord*> todo;
    std::vector<std::string> ids;
    for (const auto& g : generations) {
        if (!g.usable()) continue;
        if (!by_id.count(g.sample_id)) fail(ErrorKind::data, "generation for unknown sample " + g.sample_id);
        todo.push_back(&g);
        ids.push_back(g.sample_id);
    }
    return run_batch(todo.size(), in_flight, ids, [&](std::size_t i) {
        return judge_assess(*by_id.at(todo[i]->sample_id), todo[i]->final_answer, todo[i]->model_id, judge, parse_retries);
    });
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& records) {
    std::string out;
    for (const auto& r : records) out += to_json(r).dump() + "\n";
    write_file(path, out);
}

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::vector<json> out;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
        ++line_no;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            fail(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline std::vector<GenerationRecord> read_generations(const std::filesystem::path& path) {
    std::vector<GenerationRecord> out;
    for (const auto& j : read_jsonl(path)) out.push_back(generation_from_json(j));
    return out;
}

inline std::vector<LlmAssessment> read_assessments(const std::filesystem::path& path) {
    std::vector<LlmAssessment> out;
    for (const auto& j : read_jsonl(path)) out.push_back(assessment_from_json(j));
    return out;
}

}  // namespace reld
