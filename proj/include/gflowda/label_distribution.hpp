#pragma once

#include <map>
#include <set>
#include <vector>

namespace gflowda {

// Normalized mapping label id -> probability. Labels absent from the map
// carry probability zero.
struct LabelDistribution {
    std::map<int, double> probs;

    LabelDistribution() = default;
    explicit LabelDistribution(std::map<int, double> p) : probs(std::move(p)) {}

    double prob(int label) const {
        auto it = probs.find(label);
        return it == probs.end() ? 0.0 : it->second;
    }

    std::set<int> support() const {
        std::set<int> s;
        for (const auto& [label, p] : probs)
            if (p > 0.0) s.insert(label);
        return s;
    }

    double total() const;

    // all probabilities >= 0 and total within 1e-9 of 1
    bool valid() const;
    void validate() const; // throws std::invalid_argument
};

// Jensen-Shannon divergence, log base 2, so the result lies in [0, 1].
// Supports are unioned; missing labels count as probability 0; 0*log0 = 0.
double jsd(const LabelDistribution& p, const LabelDistribution& q);

// sum over `subset` of |p_i - q_i|
double l1_label_distance(const LabelDistribution& p, const LabelDistribution& q,
                         const std::set<int>& subset);

} // namespace gflowda
