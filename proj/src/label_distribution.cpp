#include "gflowda/label_distribution.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gflowda {

double LabelDistribution::total() const {
    double t = 0.0;
    for (const auto& [label, p] : probs) t += p;
    return t;
}

bool LabelDistribution::valid() const {
    for (const auto& [label, p] : probs)
        if (!(p >= 0.0) || !std::isfinite(p)) return false;
    return std::fabs(total() - 1.0) <= 1e-9;
}

void LabelDistribution::validate() const {
    for (const auto& [label, p] : probs) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw std::invalid_argument("LabelDistribution: probability of label " +
                                        std::to_string(label) + " is negative or non-finite");
    }
    if (std::fabs(total() - 1.0) > 1e-9)
        throw std::invalid_argument("LabelDistribution: probabilities sum to " +
                                    std::to_string(total()) + ", expected 1");
}

namespace {

// p*log2(p/q) with the 0*log0 convention
double kl_term(double p, double q) {
    if (p <= 0.0) return 0.0;
    return p * std::log2(p / q);
}

} // namespace

double jsd(const LabelDistribution& p, const LabelDistribution& q) {
    std::set<int> support;
    for (const auto& [label, v] : p.probs) support.insert(label);
    for (const auto& [label, v] : q.probs) support.insert(label);

    double acc = 0.0;
    for (int label : support) {
        double pi = p.prob(label);
        double qi = q.prob(label);
        double mi = 0.5 * (pi + qi);
        if (mi <= 0.0) continue;
        acc += 0.5 * kl_term(pi, mi) + 0.5 * kl_term(qi, mi);
    }
    if (acc < 0.0) acc = 0.0; // guard rounding
    if (acc > 1.0) acc = 1.0;
    return acc;
}

double l1_label_distance(const LabelDistribution& p, const LabelDistribution& q,
                         const std::set<int>& subset) {
    double acc = 0.0;
    for (int label : subset) acc += std::fabs(p.prob(label) - q.prob(label));
    return acc;
}

} // namespace gflowda
