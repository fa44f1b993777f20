/// @file evaluation.hpp
/// @brief Experiment protocols: k-fold cross-validation, ROC curves, IID/OOD
/// ratio sweeps, Krippendorff's alpha, answer categories, vocabulary divergence.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "reld/calibration.hpp"
#include "reld/discriminator.hpp"
#include "reld/error.hpp"
#include "reld/text.hpp"
#include "reld/util.hpp"

namespace reld {

inline double accuracy(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) fail(ErrorKind::data, "accuracy: length mismatch");
    if (predictions.empty()) fail(ErrorKind::data, "accuracy of an empty set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// ROC
// ---------------------------------------------------------------------------

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
};

/// Sweeps the threshold down through every distinct score; trapezoidal area.
inline RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) fail(ErrorKind::data, "roc_curve: scores and labels differ in length");
    require_binary_labels(labels);
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t negatives = labels.size() - positives;
    if (positives == 0 || negatives == 0) fail(ErrorKind::data, "undefined ROC: labels contain a single class");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    RocCurve curve;
    curve.points.push_back({0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    double area2 = 0.0;  // twice the area in units of (1/P)(1/N)
    for (std::size_t i = 0; i < order.size();) {
        const std::size_t tp0 = tp, fp0 = fp;
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            labels[order[j]] == 1 ? ++tp : ++fp;
            ++j;
        }
        area2 += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0);
        curve.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                                static_cast<double>(tp) / static_cast<double>(positives)});
        i = j;
    }
    curve.auc = area2 / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
    return curve;
}

// ---------------------------------------------------------------------------
// Records and the discriminator wrapper
// ---------------------------------------------------------------------------

/// One scored (sample, answer) pair as seen by the experiments.
struct EvalRecord {
    std::string sample_id;
    std::string model_id;
    std::string dataset;
    std::vector<double> features;
    double final_score = 0.0;
    int final_tag = 0;
    std::optional<int> human;  // 0/1 human rating, when collected

    std::string key() const { return sample_id + "|" + model_id; }
};

struct DiscriminatorConfig {
    int k = 10;
    std::vector<BinaryStrategy> strategies = {BinaryStrategy::weighted_average};
    TrainConfig train;
    std::vector<std::string> feature_names;

    nlohmann::json to_json() const {
        std::vector<std::string> names;
        for (auto s : strategies) names.emplace_back(reld::to_string(s));
        return {{"k", k},
                {"strategies", names},
                {"epochs", train.epochs},
                {"learning_rate", train.learning_rate},
                {"batch_size", train.batch_size}};
    }
};

inline HeadParams train_on(const std::vector<const EvalRecord*>& rows, const DiscriminatorConfig& cfg,
                           std::uint64_t seed) {
    require_supported_class_count(cfg.k);
    std::vector<LabeledFeatures> data;
    data.reserve(rows.size());
    for (const auto* r : rows) data.push_back({r->features, bucketize(r->final_score, cfg.k)});
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    return train_head(data, cfg.k, tc, cfg.feature_names);
}

/// Accuracy against final tags and, when both human classes are present,
/// AUC of the reliability score against human ratings.
struct SplitScores {
    double accuracy = 0.0;
    std::optional<double> human_auc;
    std::size_t rows = 0;
};

inline SplitScores score_split(const HeadParams& head, const std::vector<const EvalRecord*>& rows,
                               BinaryStrategy strategy) {
    if (rows.empty()) fail(ErrorKind::data, "cannot evaluate on an empty split");
    std::vector<int> predictions, tags, human_labels;
    std::vector<double> human_scores;
    for (const auto* r : rows) {
        const double p = reliability(head, r->features, strategy);
        predictions.push_back(decide(p) == Verdict::reliable ? 1 : 0);
        tags.push_back(r->final_tag);
        if (r->human) {
            human_scores.push_back(p);
            human_labels.push_back(*r->human);
        }
    }
    SplitScores s;
    s.rows = rows.size();
    s.accuracy = accuracy(predictions, tags);
    const auto pos = std::count(human_labels.begin(), human_labels.end(), 1);
    if (pos > 0 && pos < static_cast<long>(human_labels.size())) s.human_auc = auc(human_scores, human_labels);
    return s;
}

// ---------------------------------------------------------------------------
// k-fold cross-validation
// ---------------------------------------------------------------------------

struct FoldPlan {
    std::size_t k = 10;
    std::map<std::string, std::size_t> assignments;  // record key -> fold
    std::string stratified_on;                       // "final_tag" or "" when off
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        return {{"k", k}, {"stratified_on", stratified_on}, {"seed", seed}, {"assignments", assignments}};
    }
};

/// Keys are sorted first, so the plan depends only on the key set. With
/// stratification each label group is shuffled and dealt round-robin,
/// continuing the deal across groups so fold sizes differ by at most one.
inline FoldPlan make_fold_plan(const std::vector<std::pair<std::string, int>>& keyed_labels, std::size_t k,
                               std::uint64_t seed, bool stratify = true) {
    if (k < 2) fail(ErrorKind::usage, "fold count must be at least 2");
    if (keyed_labels.size() < k) {
        fail(ErrorKind::data, "k-fold needs at least k records (" + std::to_string(keyed_labels.size()) + " < " +
                                  std::to_string(k) + ")");
    }
    std::map<int, std::vector<std::string>> groups;
    std::set<std::string> seen;
    for (const auto& [key, label] : keyed_labels) {
        if (!seen.insert(key).second) fail(ErrorKind::data, "duplicate record " + key);
        groups[stratify ? label : 0].push_back(key);
    }
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.stratified_on = stratify ? "final_tag" : "";
    std::size_t dealt = 0;
    for (auto& [label, keys] : groups) {
        std::sort(keys.begin(), keys.end());
        Rng rng(derive_seed(seed, "fold-group-" + std::to_string(label)));
        seeded_shuffle(keys, rng);
        for (const auto& key : keys) plan.assignments[key] = dealt++ % k;
    }
    return plan;
}

struct StrategyFolds {
    std::vector<double> fold_accuracy;
    std::vector<std::optional<double>> fold_human_auc;
    double mean_accuracy = 0.0;
    std::optional<double> mean_human_auc;  // over folds where it is defined
};

struct CvReport {
    FoldPlan plan;
    DiscriminatorConfig config;
    std::map<std::string, StrategyFolds> by_strategy;

    const StrategyFolds& primary() const { return by_strategy.at(to_string(config.strategies.front())); }
};

inline CvReport kfold_cv(const std::vector<EvalRecord>& records, const DiscriminatorConfig& cfg, std::size_t folds = 10,
                         std::uint64_t seed = 0, bool stratify = true, std::size_t threads = default_threads()) {
    if (cfg.strategies.empty()) fail(ErrorKind::usage, "at least one conversion strategy is required");
    std::vector<std::pair<std::string, int>> keyed;
    std::map<std::string, const EvalRecord*> by_key;
    for (const auto& r : records) {
        keyed.emplace_back(r.key(), r.final_tag);
        by_key[r.key()] = &r;
    }
    CvReport report;
    report.plan = make_fold_plan(keyed, folds, seed, stratify);
    report.config = cfg;

    // per fold, per strategy
    std::vector<std::vector<SplitScores>> results(folds);
    parallel_for(folds, threads, [&](std::size_t f) {
        std::vector<const EvalRecord*> train, test;
        for (const auto& [key, fold] : report.plan.assignments) (fold == f ? test : train).push_back(by_key.at(key));
        const auto head = train_on(train, cfg, derive_seed(seed, "fold-" + std::to_string(f)));
        for (auto s : cfg.strategies) results[f].push_back(score_split(head, test, s));
    });

    for (std::size_t si = 0; si < cfg.strategies.size(); ++si) {
        StrategyFolds sf;
        double auc_sum = 0.0;
        std::size_t auc_n = 0;
        for (std::size_t f = 0; f < folds; ++f) {
            sf.fold_accuracy.push_back(results[f][si].accuracy);
            sf.fold_human_auc.push_back(results[f][si].human_auc);
            if (results[f][si].human_auc) {
                auc_sum += *results[f][si].human_auc;
                ++auc_n;
            }
        }
        sf.mean_accuracy = std::accumulate(sf.fold_accuracy.begin(), sf.fold_accuracy.end(), 0.0) /
                           static_cast<double>(folds);
        if (auc_n) sf.mean_human_auc = auc_sum / static_cast<double>(auc_n);
        report.by_strategy[to_string(cfg.strategies[si])] = std::move(sf);
    }
    return report;
}

inline nlohmann::json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const CvReport& r) {
    nlohmann::json strategies;
    for (const auto& [name, sf] : r.by_strategy) {
        nlohmann::json aucs = nlohmann::json::array();
        for (const auto& a : sf.fold_human_auc) aucs.push_back(opt_json(a));
        strategies[name] = {{"fold_accuracy", sf.fold_accuracy},
                            {"fold_human_auc", aucs},
                            {"mean_accuracy", sf.mean_accuracy},
                            {"mean_human_auc", opt_json(sf.mean_human_auc)}};
    }
    return {{"plan", r.plan.to_json()}, {"config", r.config.to_json()}, {"strategies", strategies}};
}

/// Columns per model; rows Automatic (ACC), Human (AUC), Average score.
inline std::string render_model_table(const std::map<std::string, CvReport>& by_model) {
    const auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("  -  "); };
    std::ostringstream out;
    out << std::left;
    std::string header = "LLM          ", automatic = "Automatic    ", human = "Human        ",
                average = "Average score";
    for (const auto& [model, rep] : by_model) {
        const auto& p = rep.primary();
        std::string col = model.substr(0, 12);
        col.resize(12, ' ');
        header += " | " + col;
        std::string a = format_double(p.mean_accuracy), h = cell(p.mean_human_auc);
        const std::string avg = p.mean_human_auc ? format_double((p.mean_accuracy + *p.mean_human_auc) / 2) : a;
        a.resize(12, ' ');
        h.resize(12, ' ');
        std::string v = avg;
        v.resize(12, ' ');
        automatic += " | " + a;
        human += " | " + h;
        average += " | " + v;
    }
    out << header << "\n" << automatic << "\n" << human << "\n" << average << "\n";
    return out.str();
}

/// Rows K, columns conversion strategies, cells mean CV accuracy.
struct GridCell {
    int k = 0;
    std::string strategy;
    double mean_accuracy = 0.0;
    std::optional<double> mean_human_auc;
    std::vector<double> fold_accuracy;
};

inline std::vector<GridCell> strategy_grid(const std::vector<EvalRecord>& records, DiscriminatorConfig base,
                                           std::size_t folds = 10, std::uint64_t seed = 0,
                                           const std::vector<int>& ks = {4, 6, 8, 10}) {
    base.strategies.assign(std::begin(kAllStrategies), std::end(kAllStrategies));
    std::vector<GridCell> cells;
    for (int k : ks) {
        base.k = k;
        const auto rep = kfold_cv(records, base, folds, seed);
        for (auto s : kAllStrategies) {
            const auto& sf = rep.by_strategy.at(to_string(s));
            cells.push_back({k, to_string(s), sf.mean_accuracy, sf.mean_human_auc, sf.fold_accuracy});
        }
    }
    return cells;
}

inline std::string render_grid_table(const std::vector<GridCell>& cells) {
    std::vector<std::string> strategies;
    for (auto s : kAllStrategies) strategies.emplace_back(to_string(s));
    std::ostringstream out;
    out << "K   ";
    for (const auto& s : strategies) {
        std::string c = s;
        c.resize(18, ' ');
        out << " | " << c;
    }
    out << "\n";
    std::set<int> ks;
    for (const auto& c : cells) ks.insert(c.k);
    for (int k : ks) {
        std::string label = std::to_string(k);
        label.resize(4, ' ');
        out << label;
        for (const auto& s : strategies) {
            const auto it = std::find_if(cells.begin(), cells.end(), [&](const GridCell& c) { return c.k == k && c.strategy == s; });
            std::string v = it == cells.end() ? "-" : format_double(it->mean_accuracy);
            v.resize(18, ' ');
            out << " | " << v;
        }
        out << "\n";
    }
    return out.str();
}

inline nlohmann::json to_json(const std::vector<GridCell>& cells) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& c : cells) {
        out.push_back({{"k", c.k},
                       {"strategy", c.strategy},
                       {"mean_accuracy", c.mean_accuracy},
                       {"mean_human_auc", opt_json(c.mean_human_auc)},
                       {"fold_accuracy", c.fold_accuracy}});
    }
    return out;
}

// ---------------------------------------------------------------------------
// IID / OOD
// ---------------------------------------------------------------------------

struct IidOodConfig {
    std::size_t repeats = 5;
    std::size_t downsample = 3000;
    double validation_fraction = 0.30;
    std::uint64_t seed = 0;
    DiscriminatorConfig discriminator;
};

struct Summary {
    std::vector<double> values;
    double mean = 0.0;
    double half_range = 0.0;
    double min = 0.0;
    double max = 0.0;

    static Summary of(std::vector<double> v) {
        Summary s;
        s.values = std::move(v);
        if (s.values.empty()) return s;
        s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / static_cast<double>(s.values.size());
        const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
        s.min = *lo;
        s.max = *hi;
        s.half_range = (s.max - s.min) / 2.0;
        return s;
    }

    nlohmann::json to_json() const {
        return {{"values", values}, {"mean", mean}, {"half_range", half_range}, {"min", min}, {"max", max}};
    }
};

struct RatioRow {
    std::size_t iid_count = 0;
    std::size_t ood_count = 0;
    Summary iid_accuracy;
    Summary ood_accuracy;
    Summary iid_human_auc;  // repeats where it is defined
    Summary ood_human_auc;
    std::vector<std::vector<std::string>> iid_datasets;  // per repeat
    std::vector<std::string> warnings;
};

inline RatioRow iid_ood_experiment(const std::map<std::string, std::vector<EvalRecord>>& datasets,
                                   std::size_t iid_count, const IidOodConfig& cfg,
                                   std::size_t threads = default_threads()) {
    if (datasets.size() < 2) fail(ErrorKind::data, "IID/OOD needs at least 2 datasets");
    if (iid_count < 1 || iid_count >= datasets.size()) {
        fail(ErrorKind::usage, "iid count must be in [1, " + std::to_string(datasets.size() - 1) + "], got " +
                                   std::to_string(iid_count));
    }
    if (cfg.repeats == 0) fail(ErrorKind::usage, "repeats must be at least 1");
    if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0)) {
        fail(ErrorKind::usage, "validation fraction must lie in (0,1)");
    }
    std::vector<std::string> names;
    for (const auto& [name, _] : datasets) names.push_back(name);

    RatioRow row;
    row.iid_count = iid_count;
    row.ood_count = datasets.size() - iid_count;
    for (const auto& [name, recs] : datasets) {
        if (recs.size() < cfg.downsample) {
            row.warnings.push_back(name + " has " + std::to_string(recs.size()) + " records, fewer than " +
                                   std::to_string(cfg.downsample) + "; taken whole");
        }
    }

    struct Repeat {
        SplitScores iid, ood;
        std::vector<std::string> iid_names;
    };
    std::vector<Repeat> repeats(cfg.repeats);
    parallel_for(cfg.repeats, threads, [&](std::size_t rep) {
        const std::string tag = "ratio-" + std::to_string(iid_count) + "-repeat-" + std::to_string(rep);
        Rng rng(derive_seed(cfg.seed, tag));
        auto order = names;
        seeded_shuffle(order, rng);
        std::vector<const EvalRecord*> iid_pool, ood_pool;
        for (std::size_t d = 0; d < order.size(); ++d) {
            const auto& recs = datasets.at(order[d]);
            std::vector<const EvalRecord*> picked;
            for (const auto& r : recs) picked.push_back(&r);
            seeded_shuffle(picked, rng);
            picked.resize(std::min(picked.size(), cfg.downsample));
            auto& pool = d < iid_count ? iid_pool : ood_pool;
            pool.insert(pool.end(), picked.begin(), picked.end());
            if (d < iid_count) repeats[rep].iid_names.push_back(order[d]);
        }
        std::sort(repeats[rep].iid_names.begin(), repeats[rep].iid_names.end());
        seeded_shuffle(iid_pool, rng);
        const auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(iid_pool.size())));
        if (n_val == 0 || n_val >= iid_pool.size()) fail(ErrorKind::data, "IID pool too small to split");
        std::vector<const EvalRecord*> validation(iid_pool.begin(), iid_pool.begin() + static_cast<std::ptrdiff_t>(n_val));
        std::vector<const EvalRecord*> train(iid_pool.begin() + static_cast<std::ptrdiff_t>(n_val), iid_pool.end());
        const auto head = train_on(train, cfg.discriminator, derive_seed(cfg.seed, tag + "-train"));
        const auto strategy = cfg.discriminator.strategies.front();
        repeats[rep].iid = score_split(head, validation, strategy);
        repeats[rep].ood = score_split(head, ood_pool, strategy);
    });

    std::vector<double> iid_acc, ood_acc, iid_auc, ood_auc;
    for (const auto& r : repeats) {
        iid_acc.push_back(r.iid.accuracy);
        ood_acc.push_back(r.ood.accuracy);
        if (r.iid.human_auc) iid_auc.push_back(*r.iid.human_auc);
        if (r.ood.human_auc) ood_auc.push_back(*r.ood.human_auc);
        row.iid_datasets.push_back(r.iid_names);
    }
    row.iid_accuracy = Summary::of(iid_acc);
    row.ood_accuracy = Summary::of(ood_acc);
    row.iid_human_auc = Summary::of(iid_auc);
    row.ood_human_auc = Summary::of(ood_auc);
    return row;
}

/// Every ratio from 1:(n-1) to (n-1):1.
inline std::vector<RatioRow> iid_ood_sweep(const std::map<std::string, std::vector<EvalRecord>>& datasets,
                                           const IidOodConfig& cfg) {
    std::vector<RatioRow> rows;
    for (std::size_t n = 1; n < datasets.size(); ++n) rows.push_back(iid_ood_experiment(datasets, n, cfg));
    return rows;
}

inline nlohmann::json to_json(const std::vector<RatioRow>& rows, const IidOodConfig& cfg) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        out.push_back({{"ratio", std::to_string(r.iid_count) + ":" + std::to_string(r.ood_count)},
                       {"iid_accuracy", r.iid_accuracy.to_json()},
                       {"ood_accuracy", r.ood_accuracy.to_json()},
                       {"iid_human_auc", r.iid_human_auc.to_json()},
                       {"ood_human_auc", r.ood_human_auc.to_json()},
                       {"iid_datasets", r.iid_datasets},
                       {"warnings", r.warnings}});
    }
    return {{"rows", out},
            {"config",
             {{"repeats", cfg.repeats},
              {"downsample", cfg.downsample},
              {"validation_fraction", cfg.validation_fraction},
              {"seed", cfg.seed},
              {"discriminator", cfg.discriminator.to_json()}}}};
}

/// Ratio columns with mean and half-range, plus an Average column.
inline std::string render_ratio_table(const std::vector<RatioRow>& rows) {
    const auto fmt = [](const Summary& s) {
        if (s.values.empty()) return std::string("-");
        return format_double(s.mean) + "±" + format_double(s.half_range).substr(1);
    };
    const auto pad = [](std::string s, std::size_t w) {
        // "±" is two bytes in UTF-8 but one column wide
        const std::size_t visible = s.size() - (s.find("±") != std::string::npos ? 1 : 0);
        if (visible < w) s += std::string(w - visible, ' ');
        return s;
    };
    std::ostringstream out;
    out << pad("Metrics", 10) << pad("Split", 6);
    for (const auto& r : rows) out << " | " << pad(std::to_string(r.iid_count) + " to " + std::to_string(r.ood_count), 11);
    out << " | Average\n";
    const auto line = [&](const std::string& metric, const std::string& split, auto pick) {
        out << pad(metric, 10) << pad(split, 6);
        std::vector<double> means, halves;
        for (const auto& r : rows) {
            const Summary& s = pick(r);
            out << " | " << pad(fmt(s), 11);
            if (!s.values.empty()) {
                means.push_back(s.mean);
                halves.push_back(s.half_range);
            }
        }
        if (means.empty()) {
            out << " | -\n";
            return;
        }
        Summary avg;
        avg.values = means;
        avg.mean = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
        avg.half_range = std::accumulate(halves.begin(), halves.end(), 0.0) / static_cast<double>(halves.size());
        out << " | " << fmt(avg) << "\n";
    };
    line("Automatic", "IID", [](const RatioRow& r) -> const Summary& { return r.iid_accuracy; });
    line("", "OOD", [](const RatioRow& r) -> const Summary& { return r.ood_accuracy; });
    line("Human", "IID", [](const RatioRow& r) -> const Summary& { return r.iid_human_auc; });
    line("", "OOD", [](const RatioRow& r) -> const Summary& { return r.ood_human_auc; });
    return out.str();
}

// ---------------------------------------------------------------------------
// Agreement
// ---------------------------------------------------------------------------

using RatingMatrix = std::vector<std::vector<std::optional<int>>>;  // item x rater

/// Nominal Krippendorff's alpha from the coincidence matrix. Items with fewer
/// than two ratings are not pairable and contribute nothing.
inline double krippendorff_alpha(const RatingMatrix& ratings) {
    std::map<int, std::size_t> index;
    for (const auto& item : ratings) {
        for (const auto& v : item) {
            if (v) index.emplace(*v, 0);
        }
    }
    std::size_t next = 0;
    for (auto& [_, i] : index) i = next++;
    const std::size_t c = index.size();
    std::vector<double> o(c * c, 0.0);
    for (const auto& item : ratings) {
        std::vector<std::size_t> values;
        for (const auto& v : item) {
            if (v) values.push_back(index.at(*v));
        }
        const std::size_t m = values.size();
        if (m < 2) continue;
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t b = 0; b < m; ++b) {
                if (a != b) o[values[a] * c + values[b]] += 1.0 / static_cast<double>(m - 1);
            }
        }
    }
    std::vector<double> marginals(c, 0.0);
    double n = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < c; ++j) marginals[i] += o[i * c + j];
        n += marginals[i];
    }
    if (n < 2.0) fail(ErrorKind::data, "Krippendorff's alpha needs at least 2 pairable values");
    double disagree_observed = 0.0, disagree_expected = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            if (i == j) continue;
            disagree_observed += o[i * c + j];
            disagree_expected += marginals[i] * marginals[j];
        }
    }
    if (disagree_observed == 0.0) return 1.0;
    const double d_o = disagree_observed / n;
    const double d_e = disagree_expected / (n * (n - 1.0));
    return 1.0 - d_o / d_e;
}

// ---------------------------------------------------------------------------
// Answer categories and vocabulary
// ---------------------------------------------------------------------------

/// 1: correct, predicted reliable. 2: correct, predicted unreliable.
/// 3: incorrect, predicted reliable. 4: incorrect, predicted unreliable.
inline int categorize(bool gold_correct, bool predicted_reliable) {
    if (gold_correct) return predicted_reliable ? 1 : 2;
    return predicted_reliable ? 3 : 4;
}

struct TokenScore {
    std::string token;
    double log_odds = 0.0;  // in favour of the side it is listed under
    std::size_t count_a = 0;
    std::size_t count_b = 0;
};

struct VocabReport {
    std::vector<TokenScore> side_a;
    std::vector<TokenScore> side_b;
    std::size_t total_a = 0;
    std::size_t total_b = 0;
    std::size_t vocabulary = 0;
};

/// Add-one smoothed log-odds log((cA+1)/(cB+1) * (NB+V)/(NA+V)). Each side
/// ranks the tokens it contains, most distinctive first, ties by token.
inline VocabReport vocab_divergence(const std::vector<std::vector<std::string>>& set_a,
                                    const std::vector<std::vector<std::string>>& set_b, std::size_t top_k) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
    VocabReport rep;
    for (const auto& seq : set_a) {
        for (const auto& t : seq) {
            ++counts[t].first;
            ++rep.total_a;
        }
    }
    for (const auto& seq : set_b) {
        for (const auto& t : seq) {
            ++counts[t].second;
            ++rep.total_b;
        }
    }
    if (rep.total_a == 0 || rep.total_b == 0) fail(ErrorKind::data, "vocabulary comparison needs tokens on both sides");
    rep.vocabulary = counts.size();
    const double v = static_cast<double>(rep.vocabulary);
    const double na = static_cast<double>(rep.total_a), nb = static_cast<double>(rep.total_b);
    for (const auto& [tok, c] : counts) {
        const double lo = std::log((static_cast<double>(c.first) + 1.0) / (static_cast<double>(c.second) + 1.0) *
                                   ((nb + v) / (na + v)));
        if (c.first > 0) rep.side_a.push_back({tok, lo, c.first, c.second});
        if (c.second > 0) rep.side_b.push_back({tok, -lo, c.first, c.second});
    }
    const auto rank = [top_k](std::vector<TokenScore>& side) {
        std::stable_sort(side.begin(), side.end(),
                         [](const TokenScore& x, const TokenScore& y) { return x.log_odds > y.log_odds; });
        if (side.size() > top_k) side.resize(top_k);
    };
    rank(rep.side_a);
    rank(rep.side_b);
    return rep;
}

inline nlohmann::json to_json(const VocabReport& r) {
    const auto side = [](const std::vector<TokenScore>& s) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& t : s) {
            out.push_back({{"token", t.token}, {"log_odds", t.log_odds}, {"count_a", t.count_a}, {"count_b", t.count_b}});
        }
        return out;
    };
    return {{"side_a", side(r.side_a)},
            {"side_b", side(r.side_b)},
            {"total_a", r.total_a},
            {"total_b", r.total_b},
            {"vocabulary", r.vocabulary}};
}

}  // namespace reld
