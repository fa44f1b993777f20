/// @file oracles.hpp
/// @brief Independent reference computations used only by tests. Nothing here
/// calls into the library's metric, training, or AUC code paths.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace oracle {

using Tokens = std::vector<std::string>;

/// Occurrences of the n-gram starting at `at` in `seq` scanned position by position.
inline int occurrences(const Tokens& gram_src, std::size_t at, std::size_t n, const Tokens& seq) {
    int c = 0;
    for (std::size_t i = 0; i + n <= seq.size(); ++i) {
        bool eq = true;
        for (std::size_t k = 0; k < n && eq; ++k) eq = seq[i + k] == gram_src[at + k];
        c += eq ? 1 : 0;
    }
    return c;
}

/// Clipped n-gram matches: each distinct pred n-gram counted once, credited
/// min(count in pred, count in gold).
inline int clipped(const Tokens& pred, const Tokens& gold, std::size_t n) {
    int total = 0;
    for (std::size_t i = 0; i + n <= pred.size(); ++i) {
        bool first = true;  // only the first occurrence represents its gram
        for (std::size_t j = 0; j < i && first; ++j) {
            bool eq = true;
            for (std::size_t k = 0; k < n && eq; ++k) eq = pred[j + k] == pred[i + k];
            first = !eq;
        }
        if (!first) continue;
        total += std::min(occurrences(pred, i, n, pred), occurrences(pred, i, n, gold));
    }
    return total;
}

inline std::size_t grams(std::size_t len, std::size_t n) { return len >= n ? len - n + 1 : 0; }

struct Prf {
    double p = 0, r = 0, f = 0;
};

inline double f_of(double p, double r) { return p + r == 0 ? 0.0 : 2 * p * r / (p + r); }

inline Prf unigram_overlap(const Tokens& pred, const Tokens& gold) {
    if (pred.empty() || gold.empty()) return {};
    const double c = clipped(pred, gold, 1);
    Prf o{c / pred.size(), c / gold.size(), 0};
    o.f = f_of(o.p, o.r);
    return o;
}

inline Prf rouge_n(const Tokens& pred, const Tokens& gold, std::size_t n) {
    if (grams(pred.size(), n) == 0 || grams(gold.size(), n) == 0) return {};
    const double c = clipped(pred, gold, n);
    Prf o{c / grams(pred.size(), n), c / grams(gold.size(), n), 0};
    o.f = f_of(o.p, o.r);
    return o;
}

inline bool is_subsequence(const Tokens& sub, const Tokens& seq) {
    std::size_t j = 0;
    for (std::size_t i = 0; i < seq.size() && j < sub.size(); ++i) {
        if (seq[i] == sub[j]) ++j;
    }
    return j == sub.size();
}

/// Longest common subsequence by enumerating every subsequence of `a`.
inline std::size_t lcs_exhaustive(const Tokens& a, const Tokens& b) {
    std::size_t best = 0;
    const std::uint32_t limit = 1u << a.size();
    for (std::uint32_t mask = 0; mask < limit; ++mask) {
        Tokens sub;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (mask & (1u << i)) sub.push_back(a[i]);
        }
        if (sub.size() > best && is_subsequence(sub, b)) best = sub.size();
    }
    return best;
}

inline Prf rouge_l(const Tokens& pred, const Tokens& gold) {
    if (pred.empty() || gold.empty()) return {};
    const double l = static_cast<double>(lcs_exhaustive(pred, gold));
    Prf o{l / pred.size(), l / gold.size(), 0};
    o.f = f_of(o.p, o.r);
    return o;
}

/// BLEU as a product of (smoothed) precisions raised to 1/N, times brevity penalty.
inline double bleu(const Tokens& pred, const Tokens& gold, std::size_t max_n = 4) {
    if (pred.empty()) return 0.0;
    const std::size_t order = std::min(max_n, pred.size());
    double product = 1.0;
    for (std::size_t n = 1; n <= order; ++n) {
        double p = static_cast<double>(clipped(pred, gold, n)) / static_cast<double>(grams(pred.size(), n));
        if (p == 0.0) p = 1e-9;
        product *= p;
    }
    double bp = 1.0;
    if (gold.size() > pred.size()) bp = std::exp(1.0 - static_cast<double>(gold.size()) / pred.size());
    return bp * std::pow(product, 1.0 / static_cast<double>(order));
}

/// Distinct-n by pairwise comparison of every n-gram against all earlier ones.
inline double distinct(const Tokens& pred, std::size_t n) {
    const std::size_t total = grams(pred.size(), n);
    if (total == 0) return 0.0;
    std::size_t unique = 0;
    for (std::size_t i = 0; i < total; ++i) {
        bool seen = false;
        for (std::size_t j = 0; j < i && !seen; ++j) {
            bool eq = true;
            for (std::size_t k = 0; k < n && eq; ++k) eq = pred[i + k] == pred[j + k];
            seen = eq;
        }
        unique += seen ? 0 : 1;
    }
    return static_cast<double>(unique) / static_cast<double>(total);
}

/// Every sequence of length 0..max_len over `alphabet`.
inline std::vector<Tokens> all_sequences(const Tokens& alphabet, std::size_t max_len) {
    std::vector<Tokens> out{{}};
    std::vector<Tokens> frontier{{}};
    for (std::size_t len = 1; len <= max_len; ++len) {
        std::vector<Tokens> next;
        for (const auto& s : frontier) {
            for (const auto& a : alphabet) {
                auto t = s;
                t.push_back(a);
                next.push_back(t);
            }
        }
        out.insert(out.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    return out;
}

/// Mann-Whitney AUC by explicit enumeration of (positive, negative) pairs.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0;
    double pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            pairs += 1;
            wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
        }
    }
    return wins / pairs;
}

/// Central finite difference of f at x along coordinate i.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                 std::size_t i, double h) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double down = f(x);
    return (up - down) / (2 * h);
}

/// Mean cross-entropy of a linear softmax model written from the definition:
/// -(1/N) sum_n log( exp(z_y) / sum_c exp(z_c) ).
inline double softmax_ce(const std::vector<double>& w, const std::vector<double>& b,
                         const std::vector<std::vector<double>>& xs, const std::vector<int>& ys, int k) {
    const std::size_t nf = xs.front().size();
    double total = 0;
    for (std::size_t n = 0; n < xs.size(); ++n) {
        std::vector<double> z(k);
        for (int c = 0; c < k; ++c) {
            z[c] = b[c];
            for (std::size_t f = 0; f < nf; ++f) z[c] += w[c * nf + f] * xs[n][f];
        }
        double denom = 0;
        for (double v : z) denom += std::exp(v);
        total -= std::log(std::exp(z[ys[n]]) / denom);
    }
    return total / xs.size();
}

/// Nominal alpha from pair counts: D_o averages within-item disagreement
/// (each item's ordered pairs weighted 1/(m-1)), D_e counts disagreeing
/// ordered pairs over the flat list of all pairable values.
inline double alpha_by_pairs(const std::vector<std::vector<int>>& items) {
    std::vector<int> pooled;
    double observed = 0;
    for (const auto& item : items) {
        if (item.size() < 2) continue;
        pooled.insert(pooled.end(), item.begin(), item.end());
        double d = 0;
        for (std::size_t a = 0; a < item.size(); ++a) {
            for (std::size_t b = 0; b < item.size(); ++b) d += a != b && item[a] != item[b] ? 1 : 0;
        }
        observed += d / (item.size() - 1);
    }
    const double n = pooled.size();
    double expected = 0;
    for (std::size_t a = 0; a < pooled.size(); ++a) {
        for (std::size_t b = 0; b < pooled.size(); ++b) expected += a != b && pooled[a] != pooled[b] ? 1 : 0;
    }
    if (observed == 0) return 1.0;
    return 1.0 - (observed / n) / (expected / (n * (n - 1)));
}

/// Pearson from the textbook sum formula.
inline double pearson_sums(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = x.size();
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

}  // namespace oracle
