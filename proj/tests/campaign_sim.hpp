/// @file campaign_sim.hpp
/// @brief Synthetic rating pools and scripted raters for campaign tests.

#pragma once

#include <string>
#include <vector>

#include "reld/annotation.hpp"
#include "reld/util.hpp"

namespace sim {

inline std::vector<reld::PoolEntry> pool(std::size_t datasets, std::size_t per_dataset, const std::string& prefix = "ds") {
    std::vector<reld::PoolEntry> out;
    for (std::size_t d = 0; d < datasets; ++d) {
        for (std::size_t i = 0; i < per_dataset; ++i) {
            reld::PoolEntry e;
            e.dataset = prefix + std::to_string(d);
            e.sample_id = e.dataset + "-q" + std::to_string(i);
            e.model_id = "m";
            e.question = "Question " + std::to_string(i) + "?";
            e.context = "Context of " + e.sample_id + ".";
            e.answer = "Answer " + std::to_string(i) + ".";
            e.gold_answers = {"Gold " + std::to_string(i) + "."};
            out.push_back(std::move(e));
        }
    }
    return out;
}

/// The label every rater agrees on unless the item is controversial.
inline int true_label(const std::string& sample_id) { return static_cast<int>(reld::fnv1a64(sample_id) % 2); }

/// Roughly one item in `every` gets a single dissenting vote from member 0.
inline bool controversial(const std::string& sample_id, std::uint64_t every = 4) {
    return reld::fnv1a64(sample_id + "#dissent") % every == 0;
}

inline int scripted_score(const std::string& sample_id, std::size_t member, std::uint64_t every = 4) {
    const int y = true_label(sample_id);
    return member == 0 && controversial(sample_id, every) ? 1 - y : y;
}

}  // namespace sim
