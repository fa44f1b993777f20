/// @file metrics.hpp
/// @brief Machine metrics over (generated answer, gold answer) token sequences:
/// lexical F1/recall, BLEU, ROUGE-1/2/L, Distinct-N, and embedding-based
/// greedy matching, average, extrema, and BERTScore-style F1.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "reld/assessment.hpp"
#include "reld/corpus.hpp"
#include "reld/error.hpp"
#include "reld/metric_names.hpp"
#include "reld/text.hpp"
#include "reld/util.hpp"

namespace reld {

struct Overlap {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline double harmonic_mean(double p, double r) {
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

namespace detail {

using NgramCounts = std::unordered_map<std::string, int>;

inline NgramCounts count_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
    NgramCounts counts;
    if (n == 0 || tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t k = 1; k < n; ++k) {
            key += '\x1f';
            key += tokens[i + k];
        }
        ++counts[key];
    }
    return counts;
}

inline long clipped_matches(const NgramCounts& pred, const NgramCounts& gold) {
    long matches = 0;
    for (const auto& [gram, c] : pred) {
        const auto it = gold.find(gram);
        if (it != gold.end()) matches += std::min(c, it->second);
    }
    return matches;
}

inline std::size_t ngram_total(std::size_t len, std::size_t n) { return len >= n ? len - n + 1 : 0; }

}  // namespace detail

/// Multiset unigram overlap.
inline Overlap lexical_overlap(const TokenSequence& pred, const TokenSequence& gold) {
    if (pred.empty() || gold.empty()) return {};
    const auto common = static_cast<double>(
        detail::clipped_matches(detail::count_ngrams(pred.tokens, 1), detail::count_ngrams(gold.tokens, 1)));
    Overlap o;
    o.precision = common / static_cast<double>(pred.size());
    o.recall = common / static_cast<double>(gold.size());
    o.f1 = harmonic_mean(o.precision, o.recall);
    return o;
}

inline constexpr double kBleuZeroPrecision = 1e-9;

/// Sentence BLEU. Only zero n-gram precisions are smoothed, so identical
/// inputs score exactly 1.
inline double bleu(const TokenSequence& pred, const TokenSequence& gold, std::size_t max_n = 4) {
    if (pred.empty()) return 0.0;
    const std::size_t order = std::min(max_n, pred.size());
    if (order == 0) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= order; ++n) {
        const auto matches = detail::clipped_matches(detail::count_ngrams(pred.tokens, n),
                                                     detail::count_ngrams(gold.tokens, n));
        double p = static_cast<double>(matches) / static_cast<double>(detail::ngram_total(pred.size(), n));
        if (p == 0.0) p = kBleuZeroPrecision;
        log_sum += std::log(p);
    }
    const double bp = std::min(1.0, std::exp(1.0 - static_cast<double>(gold.size()) / static_cast<double>(pred.size())));
    return bp * std::exp(log_sum / static_cast<double>(order));
}

enum class RougeVariant { n1, n2, l };

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline Overlap rouge(const TokenSequence& pred, const TokenSequence& gold, RougeVariant variant) {
    Overlap o;
    if (variant == RougeVariant::l) {
        if (pred.empty() || gold.empty()) return o;
        const auto lcs = static_cast<double>(lcs_length(pred.tokens, gold.tokens));
        o.precision = lcs / static_cast<double>(pred.size());
        o.recall = lcs / static_cast<double>(gold.size());
    } else {
        const std::size_t n = variant == RougeVariant::n1 ? 1 : 2;
        const auto pred_total = detail::ngram_total(pred.size(), n);
        const auto gold_total = detail::ngram_total(gold.size(), n);
        if (pred_total == 0 || gold_total == 0) return o;
        const auto matches = static_cast<double>(
            detail::clipped_matches(detail::count_ngrams(pred.tokens, n), detail::count_ngrams(gold.tokens, n)));
        o.precision = matches / static_cast<double>(pred_total);
        o.recall = matches / static_cast<double>(gold_total);
    }
    o.f1 = harmonic_mean(o.precision, o.recall);
    return o;
}

/// Unique n-grams over total n-grams; zero when the sequence has fewer than n tokens.
inline double distinct_n(const TokenSequence& pred, std::size_t n) {
    if (n != 1 && n != 2) fail(ErrorKind::usage, "distinct_n supports n = 1 or 2");
    const auto total = detail::ngram_total(pred.size(), n);
    if (total == 0) return 0.0;
    return static_cast<double>(detail::count_ngrams(pred.tokens, n).size()) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

using Vector = std::vector<double>;

/// Deterministic token -> vector source. Implementations must be safe to share
/// read-only across threads.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dimension() const = 0;
    virtual Vector lookup(const std::string& token) const = 0;
    virtual std::string version() const = 0;
};

/// Unit vector whose direction is seeded by the token's hash.
inline Vector hashed_unit_vector(const std::string& token, std::size_t dim, std::uint64_t salt) {
    Rng rng(derive_seed(salt, token));
    Vector v(dim);
    double norm = 0.0;
    for (auto& x : v) {
        x = 2.0 * uniform_real(rng) - 1.0;
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (auto& x : v) x /= norm;
    }
    return v;
}

class HashEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HashEmbeddingProvider(std::size_t dim = 64, std::uint64_t salt = 0x5eed)
        : dim_(dim), salt_(salt) {
        if (dim == 0) fail(ErrorKind::config, "embedding dimension must be positive");
    }
    std::size_t dimension() const override { return dim_; }
    Vector lookup(const std::string& token) const override { return hashed_unit_vector(token, dim_, salt_); }
    std::string version() const override { return "hash-v1-d" + std::to_string(dim_) + "-s" + std::to_string(salt_); }

private:
    std::size_t dim_;
    std::uint64_t salt_;
};

enum class OovPolicy { zero_vector, hashed, error };

inline OovPolicy parse_oov_policy(std::string_view s) {
    if (s == "zero" || s == "zero_vector") return OovPolicy::zero_vector;
    if (s == "hash" || s == "hashed") return OovPolicy::hashed;
    if (s == "error") return OovPolicy::error;
    fail(ErrorKind::config, "unknown OOV policy '" + std::string(s) + "'");
}

/// File-backed table: header line "dim N", then "token v1 ... vN" per line.
class TableEmbeddingProvider final : public EmbeddingProvider {
public:
    TableEmbeddingProvider(std::size_t dim, std::unordered_map<std::string, Vector> table,
                           OovPolicy oov = OovPolicy::hashed)
        : dim_(dim), table_(std::move(table)), oov_(oov) {
        if (dim == 0) fail(ErrorKind::config, "embedding dimension must be positive");
    }

    static TableEmbeddingProvider load(const std::filesystem::path& path, OovPolicy oov = OovPolicy::hashed) {
        std::istringstream in(read_file(path));
        std::string line;
        if (!std::getline(in, line)) fail(ErrorKind::config, path.string() + ": empty embedding file");
        std::istringstream header(line);
        std::string tag;
        std::size_t dim = 0;
        if (!(header >> tag >> dim) || tag != "dim" || dim == 0) {
            fail(ErrorKind::config, path.string() + ": expected header 'dim N'");
        }
        std::unordered_map<std::string, Vector> table;
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            std::istringstream row(line);
            std::string token;
            row >> token;
            Vector v;
            for (double x; row >> x;) v.push_back(x);
            if (v.size() != dim) {
                fail(ErrorKind::config, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                            std::to_string(dim) + " values, got " + std::to_string(v.size()));
            }
            table[token] = std::move(v);
        }
        return TableEmbeddingProvider(dim, std::move(table), oov);
    }

    std::size_t dimension() const override { return dim_; }

    Vector lookup(const std::string& token) const override {
        const auto it = table_.find(token);
        if (it != table_.end()) return it->second;
        switch (oov_) {
            case OovPolicy::zero_vector: return Vector(dim_, 0.0);
            case OovPolicy::hashed: return hashed_unit_vector(token, dim_, 0x5eed);
            case OovPolicy::error: break;
        }
        fail(ErrorKind::config, "token '" + token + "' not in embedding table");
    }

    std::string version() const override { return "table-v1-d" + std::to_string(dim_) + "-n" + std::to_string(table_.size()); }

    std::size_t vocabulary_size() const { return table_.size(); }

private:
    std::size_t dim_;
    std::unordered_map<std::string, Vector> table_;
    OovPolicy oov_;
};

enum class EmbeddingMethod { greedy, average, extrema, bertscore };

namespace detail {

inline double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Cosine with zero vectors mapped to 0. dot/sqrt(|a|^2 |b|^2) keeps cos(a,a) exactly 1.
inline double cosine(const Vector& a, const Vector& b) {
    const double na = dot(a, a);
    const double nb = dot(b, b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot(a, b) / std::sqrt(na * nb), -1.0, 1.0);
}

inline std::vector<Vector> embed_all(const TokenSequence& seq, const EmbeddingProvider& provider) {
    std::vector<Vector> out;
    out.reserve(seq.size());
    for (const auto& tok : seq.tokens) {
        auto v = provider.lookup(tok);
        if (v.size() != provider.dimension()) {
            fail(ErrorKind::config, "embedding provider returned " + std::to_string(v.size()) +
                                        " values for '" + tok + "', expected " +
                                        std::to_string(provider.dimension()));
        }
        out.push_back(std::move(v));
    }
    return out;
}

// Mean over `from` of the best cosine against any vector of `to`.
inline double directed_greedy(const std::vector<Vector>& from, const std::vector<Vector>& to) {
    double sum = 0.0;
    for (const auto& f : from) {
        double best = -1.0;
        for (const auto& t : to) best = std::max(best, cosine(f, t));
        sum += best;
    }
    return sum / static_cast<double>(from.size());
}

inline Vector mean_vector(const std::vector<Vector>& vs) {
    Vector m(vs.front().size(), 0.0);
    for (const auto& v : vs) {
        for (std::size_t i = 0; i < v.size(); ++i) m[i] += v[i];
    }
    for (auto& x : m) x /= static_cast<double>(vs.size());
    return m;
}

// Per dimension the value of largest magnitude; equal magnitudes prefer the positive one.
inline Vector extrema_vector(const std::vector<Vector>& vs) {
    Vector e = vs.front();
    for (std::size_t k = 1; k < vs.size(); ++k) {
        for (std::size_t i = 0; i < e.size(); ++i) {
            const double x = vs[k][i];
            if (std::abs(x) > std::abs(e[i]) || (std::abs(x) == std::abs(e[i]) && x > e[i])) e[i] = x;
        }
    }
    return e;
}

}  // namespace detail

inline double embed_similarity(const TokenSequence& pred, const TokenSequence& gold, const EmbeddingProvider& provider,
                               EmbeddingMethod method) {
    if (pred.empty() || gold.empty()) return 0.0;
    const auto p = detail::embed_all(pred, provider);
    const auto g = detail::embed_all(gold, provider);
    switch (method) {
        case EmbeddingMethod::greedy:
            return (detail::directed_greedy(p, g) + detail::directed_greedy(g, p)) / 2.0;
        case EmbeddingMethod::average:
            return detail::cosine(detail::mean_vector(p), detail::mean_vector(g));
        case EmbeddingMethod::extrema:
            return detail::cosine(detail::extrema_vector(p), detail::extrema_vector(g));
        case EmbeddingMethod::bertscore: {
            // Harmonic mean is only meaningful for positive P and R.
            const double precision = detail::directed_greedy(p, g);
            const double recall = detail::directed_greedy(g, p);
            if (precision <= 0.0 || recall <= 0.0) return 0.0;
            return harmonic_mean(precision, recall);
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Metric vectors
// ---------------------------------------------------------------------------

struct MetricVector {
    std::string sample_id;
    std::string model_id;
    std::string dataset;
    double f1 = 0, recall = 0, bleu = 0, rouge1 = 0, rouge2 = 0, rougeL = 0;
    double distinct1 = 0, distinct2 = 0;
    double greedy = 0, emb_avg = 0, emb_extrema = 0, bert_score = 0;
    int goodness = 1, similarity = 1;
    std::map<std::string, double> normalized;
    std::vector<std::string> warnings;

    double raw(std::string_view name) const {
        switch (metric_index(name)) {
            case 0: return f1;
            case 1: return recall;
            case 2: return bleu;
            case 3: return rouge1;
            case 4: return rouge2;
            case 5: return rougeL;
            case 6: return distinct1;
            case 7: return distinct2;
            case 8: return greedy;
            case 9: return emb_avg;
            case 10: return emb_extrema;
            case 11: return bert_score;
            case 12: return goodness;
            default: return similarity;
        }
    }

    void normalize() {
        normalized.clear();
        for (auto name : kMetricOrder) normalized[std::string(name)] = normalize_metric(name, raw(name), &warnings);
    }

    /// Normalized values in the fixed metric order; the discriminator's input.
    std::vector<double> features() const {
        std::vector<double> out;
        out.reserve(kMetricOrder.size());
        for (auto name : kMetricOrder) {
            const auto it = normalized.find(std::string(name));
            if (it == normalized.end()) fail(ErrorKind::data, "metric vector " + sample_id + " lacks normalized " + std::string(name));
            out.push_back(it->second);
        }
        return out;
    }
};

inline std::vector<std::string> feature_names() {
    return {kMetricOrder.begin(), kMetricOrder.end()};
}

/// Scores one answer against every gold answer and keeps the per-metric maximum.
inline MetricVector compute_metric_vector(const QASample& sample, const std::string& answer,
                                          const LlmAssessment& assessment, const EmbeddingProvider& provider,
                                          const std::string& model_id = {}) {
    MetricVector mv;
    mv.sample_id = sample.id;
    mv.model_id = model_id.empty() ? assessment.model_id : model_id;
    mv.dataset = sample.dataset;
    try {
        const auto resolved = resolve_option_letter(sample, answer);
        const auto pred = tokenize(resolved.value_or(answer), sample.language);
        mv.distinct1 = distinct_n(pred, 1);
        mv.distinct2 = distinct_n(pred, 2);
        mv.greedy = mv.emb_avg = mv.emb_extrema = mv.bert_score = -1.0;
        for (const auto& g : sample.gold_answers) {
            const auto gold = tokenize(g, sample.language);
            const auto lex = lexical_overlap(pred, gold);
            mv.f1 = std::max(mv.f1, lex.f1);
            mv.recall = std::max(mv.recall, lex.recall);
            mv.bleu = std::max(mv.bleu, bleu(pred, gold));
            mv.rouge1 = std::max(mv.rouge1, rouge(pred, gold, RougeVariant::n1).f1);
            mv.rouge2 = std::max(mv.rouge2, rouge(pred, gold, RougeVariant::n2).f1);
            mv.rougeL = std::max(mv.rougeL, rouge(pred, gold, RougeVariant::l).f1);
            mv.greedy = std::max(mv.greedy, embed_similarity(pred, gold, provider, EmbeddingMethod::greedy));
            mv.emb_avg = std::max(mv.emb_avg, embed_similarity(pred, gold, provider, EmbeddingMethod::average));
            mv.emb_extrema = std::max(mv.emb_extrema, embed_similarity(pred, gold, provider, EmbeddingMethod::extrema));
            mv.bert_score = std::max(mv.bert_score, embed_similarity(pred, gold, provider, EmbeddingMethod::bertscore));
        }
    } catch (const Error& e) {
        throw Error(e.kind(), "sample " + sample.id + ": " + e.what());
    }
    mv.goodness = assessment.goodness;
    mv.similarity = assessment.similarity;
    mv.normalize();
    return mv;
}

struct ScoringJob {
    const QASample* sample;
    std::string answer;
    LlmAssessment assessment;
    std::string model_id;
};

/// Parallel batch scoring; output is ordered by (sample id, model id) regardless of thread count.
inline std::vector<MetricVector> compute_metric_vectors(const std::vector<ScoringJob>& jobs,
                                                        const EmbeddingProvider& provider, unsigned threads = 1) {
    std::vector<MetricVector> out(jobs.size());
    threads = std::max(1u, threads);
    const auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            out[i] = compute_metric_vector(*jobs[i].sample, jobs[i].answer, jobs[i].assessment, provider, jobs[i].model_id);
        }
    };
    const std::size_t chunk = (jobs.size() + threads - 1) / threads;
    std::vector<std::future<void>> pending;
    for (std::size_t b = 0; b < jobs.size(); b += chunk) {
        pending.push_back(std::async(std::launch::async, work, b, std::min(jobs.size(), b + chunk)));
    }
    for (auto& f : pending) f.get();
    std::sort(out.begin(), out.end(), [](const MetricVector& a, const MetricVector& b) {
        return std::tie(a.sample_id, a.model_id) < std::tie(b.sample_id, b.model_id);
    });
    return out;
}

inline nlohmann::json to_json(const MetricVector& mv) {
    nlohmann::json j{{"sample_id", mv.sample_id}, {"model_id", mv.model_id}, {"dataset", mv.dataset}};
    for (auto name : kMetricOrder) j[std::string(name)] = mv.raw(name);
    j["goodness"] = mv.goodness;
    j["similarity"] = mv.similarity;
    j["normalized"] = mv.normalized;
    if (!mv.warnings.empty()) j["warnings"] = mv.warnings;
    return j;
}

inline MetricVector metric_vector_from_json(const nlohmann::json& j) {
    MetricVector mv;
    mv.sample_id = j.at("sample_id").get<std::string>();
    mv.model_id = j.value("model_id", "");
    mv.dataset = j.value("dataset", "");
    mv.f1 = j.at("f1");
    mv.recall = j.at("recall");
    mv.bleu = j.at("bleu");
    mv.rouge1 = j.at("rouge1");
    mv.rouge2 = j.at("rouge2");
    mv.rougeL = j.at("rougeL");
    mv.distinct1 = j.at("distinct1");
    mv.distinct2 = j.at("distinct2");
    mv.greedy = j.at("greedy");
    mv.emb_avg = j.at("emb_avg");
    mv.emb_extrema = j.at("emb_extrema");
    mv.bert_score = j.at("bert_score");
    mv.goodness = j.at("goodness");
    mv.similarity = j.at("similarity");
    if (j.contains("normalized")) {
        mv.normalized = j["normalized"].get<std::map<std::string, double>>();
    } else {
        mv.normalize();
    }
    mv.warnings = j.value("warnings", std::vector<std::string>{});
    return mv;
}

/// CSV columns: sample_id, model_id, dataset, the 14 raw metrics in kMetricOrder,
/// then the 14 normalized values prefixed "norm_".
inline std::string metric_csv_header() {
    std::string h = "sample_id,model_id,dataset";
    for (auto name : kMetricOrder) h += "," + std::string(name);
    for (auto name : kMetricOrder) h += ",norm_" + std::string(name);
    return h;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string metric_csv_row(const MetricVector& mv) {
    std::ostringstream row;
    row.precision(17);
    row << csv_escape(mv.sample_id) << ',' << csv_escape(mv.model_id) << ',' << csv_escape(mv.dataset);
    for (auto name : kMetricOrder) row << ',' << mv.raw(name);
    for (auto name : kMetricOrder) row << ',' << mv.normalized.at(std::string(name));
    return row.str();
}

}  // namespace reld
