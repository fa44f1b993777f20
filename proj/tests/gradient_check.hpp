/// @file gradient_check.hpp
/// @brief Compares the head's analytic cross-entropy gradient with central
/// finite differences of an independently written loss.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "reld/discriminator.hpp"

namespace gradcheck {

struct Result {
    std::size_t instances = 0;
    std::size_t partials = 0;
    double max_relative_error = 0.0;
};

inline Result run(std::size_t instances, std::uint64_t seed, double step = 1e-5) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Result result;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const int k = 2 + static_cast<int>(rng() % 9);
        const std::size_t nf = 1 + rng() % 6;
        const std::size_t rows = 1 + rng() % 10;
        std::vector<reld::LabeledFeatures> data(rows);
        std::vector<std::vector<double>> xs(rows);
        std::vector<int> ys(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            data[r].features.resize(nf);
            for (auto& v : data[r].features) v = unit(rng);
            data[r].cls = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
            xs[r] = data[r].features;
            ys[r] = data[r].cls;
        }
        auto params = reld::HeadParams::zeros(k, std::vector<std::string>(nf, "f"));
        for (auto& w : params.weights) w = unit(rng);
        for (auto& b : params.bias) b = unit(rng);

        const auto analytic = reld::loss_and_gradient(params, data);

        // Parameters packed as [weights..., bias...] for the oracle.
        std::vector<double> packed = params.weights;
        packed.insert(packed.end(), params.bias.begin(), params.bias.end());
        const std::size_t nw = params.weights.size();
        const auto loss = [&](const std::vector<double>& theta) {
            std::vector<double> w(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(nw));
            std::vector<double> b(theta.begin() + static_cast<std::ptrdiff_t>(nw), theta.end());
            return oracle::softmax_ce(w, b, xs, ys, k);
        };
        for (std::size_t i = 0; i < packed.size(); ++i) {
            const double numeric = oracle::central_difference(loss, packed, i, step);
            const double exact = i < nw ? analytic.d_weights[i] : analytic.d_bias[i - nw];
            const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-6});
            result.max_relative_error = std::max(result.max_relative_error, std::abs(numeric - exact) / denom);
            ++result.partials;
        }
        ++result.instances;
    }
    return result;
}

}  // namespace gradcheck
