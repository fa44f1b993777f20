/// @file corpus.hpp
/// @brief QA samples in the three standardized formats, dataset ingestion,
/// type-adaptive prompt rendering, and sliding-window segmentation.

#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "reld/error.hpp"
#include "reld/text.hpp"
#include "reld/util.hpp"

namespace reld {

using json = nlohmann::json;

/// Extractive reading comprehension, multiple choice, multi-turn dialogue.
enum class SampleKind { erc, mc, mtd };

inline const char* to_string(SampleKind k) {
    switch (k) {
        case SampleKind::erc: return "ERC";
        case SampleKind::mc: return "MC";
        case SampleKind::mtd: return "MTD";
    }
    return "?";
}

inline SampleKind parse_kind(std::string_view s) {
    if (s == "ERC") return SampleKind::erc;
    if (s == "MC") return SampleKind::mc;
    if (s == "MTD") return SampleKind::mtd;
    fail(ErrorKind::config, "unknown sample kind '" + std::string(s) + "' (expected ERC, MC or MTD)");
}

struct Turn {
    std::string speaker;
    std::string utterance;

    bool operator==(const Turn&) const = default;
};

struct QASample {
    std::string id;
    std::string dataset;
    SampleKind kind = SampleKind::erc;
    std::string context;         // ERC/MC only
    std::vector<Turn> history;   // MTD only
    std::string question;
    std::vector<std::string> gold_answers;
    std::vector<std::string> distractors;  // MC only
    Language language = Language::en;
    std::uint64_t shuffle_seed = 0;  // MC candidate order

    bool operator==(const QASample&) const = default;
};

/// Returns the first invariant the sample violates, if any.
inline std::optional<std::string> validate(const QASample& s) {
    if (s.id.empty()) return "empty id";
    if (s.question.empty()) return "empty question";
    if (s.gold_answers.empty()) return "no gold answer";
    for (const auto& g : s.gold_answers) {
        if (trim(g).empty()) return "empty gold answer";
    }
    switch (s.kind) {
        case SampleKind::erc:
        case SampleKind::mc:
            if (trim(s.context).empty()) return "empty context";
            if (!s.history.empty()) return "history on a context-based sample";
            if (s.kind == SampleKind::mc && s.distractors.empty()) return "no distractors";
            if (s.kind == SampleKind::erc && !s.distractors.empty()) return "distractors on ERC sample";
            break;
        case SampleKind::mtd:
            if (s.history.empty()) return "empty history";
            if (!s.context.empty()) return "context on a dialogue sample";
            if (!s.distractors.empty()) return "distractors on MTD sample";
            break;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// JSON lines
// ---------------------------------------------------------------------------

inline json to_json(const QASample& s) {
    json history = json::array();
    for (const auto& t : s.history) history.push_back({{"speaker", t.speaker}, {"utterance", t.utterance}});
    return json{{"id", s.id},
                {"dataset", s.dataset},
                {"kind", to_string(s.kind)},
                {"context", s.context},
                {"history", history},
                {"question", s.question},
                {"gold_answers", s.gold_answers},
                {"distractors", s.distractors},
                {"language", to_string(s.language)},
                {"shuffle_seed", s.shuffle_seed}};
}

inline std::vector<Turn> parse_history(const json& j) {
    std::vector<Turn> out;
    if (j.is_null()) return out;
    if (!j.is_array()) fail(ErrorKind::data, "history must be an array");
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& t = j[i];
        if (t.is_object()) {
            out.push_back({t.value("speaker", ""), t.value("utterance", "")});
        } else if (t.is_array() && t.size() == 2) {
            out.push_back({t[0].get<std::string>(), t[1].get<std::string>()});
        } else if (t.is_string()) {
            out.push_back({i % 2 == 0 ? "A" : "B", t.get<std::string>()});
        } else {
            fail(ErrorKind::data, "unrecognized history turn");
        }
    }
    return out;
}

namespace detail {

inline std::vector<std::string> string_list(const json& j) {
    if (j.is_null()) return {};
    if (j.is_string()) return {j.get<std::string>()};
    if (!j.is_array()) fail(ErrorKind::data, "expected string or array of strings");
    std::vector<std::string> out;
    for (const auto& v : j) out.push_back(v.get<std::string>());
    return out;
}

inline std::string optional_string(const json& j, const char* key) {
    const auto it = j.find(key);
    return it == j.end() || it->is_null() ? std::string{} : it->get<std::string>();
}

}  // namespace detail

inline QASample sample_from_json(const json& j) {
    QASample s;
    s.id = j.at("id").get<std::string>();
    s.dataset = detail::optional_string(j, "dataset");
    s.kind = parse_kind(j.at("kind").get<std::string>());
    s.context = detail::optional_string(j, "context");
    s.history = parse_history(j.contains("history") ? j["history"] : json());
    s.question = j.at("question").get<std::string>();
    s.gold_answers = detail::string_list(j.contains("gold_answers") ? j["gold_answers"] : json());
    s.distractors = detail::string_list(j.contains("distractors") ? j["distractors"] : json());
    s.language = parse_language(detail::optional_string(j, "language"));
    s.shuffle_seed = j.value("shuffle_seed", std::uint64_t{0});
    return s;
}

inline std::string to_jsonl(const std::vector<QASample>& samples) {
    std::string out;
    for (const auto& s : samples) out += to_json(s).dump() + "\n";
    return out;
}

/// Reads a corpus file in the standardized format; any invalid line is a data error.
inline std::vector<QASample> read_corpus(const std::filesystem::path& path) {
    std::vector<QASample> samples;
    std::set<std::string> ids;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
        ++line_no;
        QASample s;
        try {
            s = sample_from_json(json::parse(line));
        } catch (const json::exception& e) {
            fail(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (auto why = validate(s)) {
            fail(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": " + *why);
        }
        if (!ids.insert(s.id).second) {
            fail(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": duplicate id " + s.id);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

inline void write_corpus(const std::filesystem::path& path, const std::vector<QASample>& samples) {
    write_file(path, to_jsonl(samples));
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

/// Maps an external dataset's fields onto QASample keys. Source field names may
/// be dotted paths into nested objects ("answers.text").
struct DatasetDescriptor {
    std::string dataset;
    SampleKind kind = SampleKind::erc;
    Language language = Language::en;
    std::map<std::string, std::string> fields;  // target key -> source path

    static DatasetDescriptor from_json(const json& j) {
        DatasetDescriptor d;
        d.dataset = j.at("dataset").get<std::string>();
        d.kind = parse_kind(j.at("kind").get<std::string>());
        d.language = parse_language(j.value("language", "EN"));
        if (j.contains("fields")) {
            for (const auto& [k, v] : j["fields"].items()) d.fields[k] = v.get<std::string>();
        }
        return d;
    }

    static DatasetDescriptor load(const std::filesystem::path& path) {
        try {
            return from_json(json::parse(read_file(path)));
        } catch (const json::exception& e) {
            fail(ErrorKind::config, "descriptor " + path.string() + ": " + e.what());
        }
    }

    std::string source_for(const std::string& key) const {
        const auto it = fields.find(key);
        return it == fields.end() ? key : it->second;
    }
};

struct IngestReject {
    std::size_t index;
    std::string reason;
};

struct IngestResult {
    std::vector<QASample> samples;
    std::vector<IngestReject> rejects;
};

namespace detail {

inline const json* lookup_path(const json& record, const std::string& path) {
    const json* cur = &record;
    std::size_t start = 0;
    while (start <= path.size()) {
        const auto dot = path.find('.', start);
        const auto part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!cur->is_object()) return nullptr;
        const auto it = cur->find(part);
        if (it == cur->end() || it->is_null()) return nullptr;
        cur = &*it;
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    return cur;
}

}  // namespace detail

/// Converts external records into samples. Bad records are rejected with a
/// reason and do not stop ingestion.
inline IngestResult ingest_dataset(const std::vector<json>& raw_records, const DatasetDescriptor& desc) {
    IngestResult result;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < raw_records.size(); ++i) {
        const auto& rec = raw_records[i];
        const auto get = [&](const char* key) { return detail::lookup_path(rec, desc.source_for(key)); };
        try {
            QASample s;
            s.dataset = desc.dataset;
            s.kind = desc.kind;
            s.language = desc.language;
            const json* id = get("id");
            s.id = id ? (id->is_string() ? id->get<std::string>() : id->dump())
                      : desc.dataset + "-" + std::to_string(i);

            const json* question = get("question");
            if (!question) {
                result.rejects.push_back({i, "missing question"});
                continue;
            }
            s.question = question->get<std::string>();

            const json* gold = get("gold_answers");
            if (!gold) {
                result.rejects.push_back({i, "missing gold answer"});
                continue;
            }
            s.gold_answers = detail::string_list(*gold);

            if (desc.kind == SampleKind::mtd) {
                const json* hist = get("history");
                if (hist) s.history = parse_history(*hist);
            } else {
                const json* ctx = get("context");
                if (!ctx) {
                    result.rejects.push_back({i, "missing context"});
                    continue;
                }
                s.context = ctx->get<std::string>();
            }
            if (desc.kind == SampleKind::mc) {
                if (const json* dis = get("distractors")) s.distractors = detail::string_list(*dis);
            }
            s.shuffle_seed = derive_seed(fnv1a64(s.dataset), s.id);

            if (auto why = validate(s)) {
                result.rejects.push_back({i, *why});
                continue;
            }
            if (!ids.insert(s.id).second) {
                result.rejects.push_back({i, "duplicate id " + s.id});
                continue;
            }
            result.samples.push_back(std::move(s));
        } catch (const json::exception& e) {
            result.rejects.push_back({i, std::string("malformed field: ") + e.what()});
        } catch (const Error& e) {
            result.rejects.push_back({i, e.what()});
        }
    }
    return result;
}

/// Reads raw records from a JSON array file or a JSON-lines file.
inline std::vector<json> read_raw_records(const std::filesystem::path& path) {
    const auto content = read_file(path);
    const auto first = content.find_first_not_of(" \t\r\n");
    std::vector<json> out;
    try {
        if (first != std::string::npos && content[first] == '[') {
            for (auto& r : json::parse(content)) out.push_back(std::move(r));
        } else {
            for (const auto& line : read_lines(path)) out.push_back(json::parse(line));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::data, path.string() + ": " + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

struct PromptOptions {
    std::size_t max_history_turns = 0;  // 0 keeps every turn
};

/// Newlines become a literal "\n" so prompts stay on one line.
inline std::string escape_field(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '\n') {
            out += "\\n";
        } else if (c == '\r') {
            continue;
        } else {
            out += c;
        }
    }
    return out;
}

/// MC candidates (gold first answer plus distractors) in the sample's seeded order.
inline std::vector<std::string> candidate_order(const QASample& s) {
    std::vector<std::string> options{s.gold_answers.front()};
    options.insert(options.end(), s.distractors.begin(), s.distractors.end());
    Rng rng(s.shuffle_seed);
    seeded_shuffle(options, rng);
    return options;
}

inline std::string option_label(std::size_t index) {
    return std::string(1, static_cast<char>('A' + index % 26));
}

/// Maps a letter-only MC reply ("B", "b)", "(C)") to its candidate text.
inline std::optional<std::string> resolve_option_letter(const QASample& s, std::string_view answer) {
    if (s.kind != SampleKind::mc) return std::nullopt;
    std::string a = trim(answer);
    while (!a.empty() && (a.front() == '(' || a.front() == ' ')) a.erase(a.begin());
    while (!a.empty() && (a.back() == ')' || a.back() == '.' || a.back() == ' ')) a.pop_back();
    if (a.size() != 1 || !std::isalpha(static_cast<unsigned char>(a[0]))) return std::nullopt;
    const auto idx = static_cast<std::size_t>(std::toupper(static_cast<unsigned char>(a[0])) - 'A');
    const auto options = candidate_order(s);
    if (idx >= options.size()) return std::nullopt;
    return options[idx];
}

inline std::string render_history(const std::vector<Turn>& history, std::size_t max_turns) {
    const std::size_t first = max_turns == 0 || history.size() <= max_turns ? 0 : history.size() - max_turns;
    std::string out;
    for (std::size_t i = first; i < history.size(); ++i) {
        if (!out.empty()) out += " / ";
        out += escape_field(history[i].speaker) + ": " + escape_field(history[i].utterance);
    }
    return out;
}

/// Renders the instruction template for the sample's kind. `context_override`
/// replaces the context (or dialogue history) with one window's text.
inline std::string render_prompt(const QASample& s, const PromptOptions& opts = {},
                                 const std::optional<std::string>& context_override = std::nullopt) {
    const std::string q = escape_field(s.question);
    switch (s.kind) {
        case SampleKind::erc:
            return "Given the following context " + escape_field(context_override.value_or(s.context)) +
                   " and the question " + q + ". Please provide the answer.";
        case SampleKind::mc: {
            std::string candidates;
            const auto options = candidate_order(s);
            for (std::size_t i = 0; i < options.size(); ++i) {
                if (i) candidates += ", ";
                candidates += "(" + option_label(i) + ") " + escape_field(options[i]);
            }
            return "Given the following context " + escape_field(context_override.value_or(s.context)) +
                   " and the question " + q +
                   ". Please select the best answer from the candidate answers {" + candidates + "}.";
        }
        case SampleKind::mtd: {
            const std::string h =
                context_override ? escape_field(*context_override) : render_history(s.history, opts.max_history_turns);
            return "Given the history conversation " + h + " and the current question " + q +
                   ". Please provide the answer.";
        }
    }
    return {};
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

struct Window {
    std::string sample_id;
    std::size_t index = 0;
    std::string text;
    std::size_t token_begin = 0;  // [begin, end) in tokens
    std::size_t token_end = 0;

    std::size_t size() const noexcept { return token_end - token_begin; }
};

/// Window i starts at token i*stride; the final window ends at the last token.
inline std::vector<Window> segment_windows(std::string_view text, std::size_t window_size, std::size_t stride,
                                           Language lang = Language::en, const std::string& sample_id = {}) {
    if (window_size == 0) fail(ErrorKind::usage, "window size must be at least 1");
    if (stride == 0) fail(ErrorKind::usage, "stride must be at least 1");
    if (stride > window_size) fail(ErrorKind::usage, "gap between windows: stride exceeds window size");
    const auto spans = tokenize_spans(text, lang);
    if (spans.empty()) fail(ErrorKind::data, "empty input");

    const std::size_t n = spans.size();
    const std::size_t count = n <= window_size ? 1 : (n - window_size + stride - 1) / stride + 1;
    std::vector<Window> windows;
    windows.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Window w;
        w.sample_id = sample_id;
        w.index = i;
        w.token_begin = i * stride;
        w.token_end = std::min(w.token_begin + window_size, n);
        w.text = std::string(text.substr(spans[w.token_begin].begin,
                                         spans[w.token_end - 1].end - spans[w.token_begin].begin));
        windows.push_back(std::move(w));
    }
    return windows;
}

/// Windows over the sample's long-text field: the context, or for dialogue
/// samples the rendered history.
inline std::vector<Window> sample_windows(const QASample& s, std::size_t window_size, std::size_t stride,
                                          const PromptOptions& opts = {}) {
    const std::string text = s.kind == SampleKind::mtd ? render_history(s.history, opts.max_history_turns) : s.context;
    return segment_windows(text, window_size, stride, s.language, s.id);
}

}  // namespace reld
