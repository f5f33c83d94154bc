#include "gflowda/reward.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace gflowda {

void RewardConfig::validate() const {
    for (double bw : kernel_bandwidths)
        if (!(bw > 0.0)) throw std::invalid_argument("kernel bandwidths must be positive");
    if (accuracy_weight < 0.0 || mmd_weight < 0.0)
        throw std::invalid_argument("reward weights must be non-negative");
    if (!(reward_floor > 0.0)) throw std::invalid_argument("reward floor must be positive");
}

namespace {

double sq_dist(const std::vector<double>& x, const std::vector<double>& y) {
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        double d = x[k] - y[k];
        acc += d * d;
    }
    return acc;
}

// median pairwise Euclidean distance over the pooled set; 1.0 when degenerate
double median_bandwidth(const FeatureMatrix& a, const FeatureMatrix& b) {
    std::vector<const std::vector<double>*> pool;
    for (const auto& x : a) pool.push_back(&x);
    for (const auto& x : b) pool.push_back(&x);
    std::vector<double> dists;
    dists.reserve(pool.size() * (pool.size() - 1) / 2);
    for (std::size_t i = 0; i < pool.size(); ++i)
        for (std::size_t j = i + 1; j < pool.size(); ++j)
            dists.push_back(std::sqrt(sq_dist(*pool[i], *pool[j])));
    if (dists.empty()) return 1.0;
    std::sort(dists.begin(), dists.end());
    double med = dists[dists.size() / 2];
    return med > 0.0 ? med : 1.0;
}

void check_inputs(const FeatureMatrix& a, const FeatureMatrix& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("mmd: both sample sets must be non-empty");
    std::size_t dim = a[0].size();
    for (const auto& x : a)
        if (x.size() != dim) throw std::invalid_argument("mmd: ragged feature matrix");
    for (const auto& x : b)
        if (x.size() != dim) throw std::invalid_argument("mmd: dimension mismatch between sets");
}

double kernel_sum(double d2, const std::vector<double>& bandwidths) {
    double acc = 0.0;
    for (double s : bandwidths) acc += std::exp(-d2 / (2.0 * s * s));
    return acc;
}

} // namespace

double mmd(const FeatureMatrix& a, const FeatureMatrix& b, const RewardConfig& config) {
    check_inputs(a, b);
    std::vector<double> bw = config.kernel_bandwidths;
    if (bw.empty()) bw.push_back(median_bandwidth(a, b));

    double kaa = 0.0, kbb = 0.0, kab = 0.0;
    for (const auto& x : a)
        for (const auto& y : a) kaa += kernel_sum(sq_dist(x, y), bw);
    for (const auto& x : b)
        for (const auto& y : b) kbb += kernel_sum(sq_dist(x, y), bw);
    for (const auto& x : a)
        for (const auto& y : b) kab += kernel_sum(sq_dist(x, y), bw);

    double na = static_cast<double>(a.size());
    double nb = static_cast<double>(b.size());
    double v = kaa / (na * na) + kbb / (nb * nb) - 2.0 * kab / (na * nb);
    return v > 0.0 ? v : 0.0;
}

MmdWithGradients mmd_with_gradients(const FeatureMatrix& a, const FeatureMatrix& b,
                                    const RewardConfig& config) {
    check_inputs(a, b);
    std::vector<double> bw = config.kernel_bandwidths;
    if (bw.empty()) bw.push_back(median_bandwidth(a, b));

    std::size_t dim = a[0].size();
    MmdWithGradients r;
    r.grad_a.assign(a.size(), std::vector<double>(dim, 0.0));
    r.grad_b.assign(b.size(), std::vector<double>(dim, 0.0));

    double na = static_cast<double>(a.size());
    double nb = static_cast<double>(b.size());

    // d/dx of sum_s exp(-|x-y|^2 / (2 s^2)) is sum_s k_s * (y-x)/s^2
    auto accumulate = [&](const std::vector<double>& x, const std::vector<double>& y,
                          std::vector<double>& gx, std::vector<double>& gy, double coeff) {
        double d2 = sq_dist(x, y);
        double val = 0.0;
        for (double s : bw) {
            double k = std::exp(-d2 / (2.0 * s * s));
            val += k;
            double factor = coeff * k / (s * s);
            for (std::size_t kk = 0; kk < dim; ++kk) {
                double diff = y[kk] - x[kk];
                gx[kk] += factor * diff;
                gy[kk] -= factor * diff;
            }
        }
        return coeff * val;
    };

    double value = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
            value += accumulate(a[i], a[j], r.grad_a[i], r.grad_a[j], 1.0 / (na * na));
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            value += accumulate(b[i], b[j], r.grad_b[i], r.grad_b[j], 1.0 / (nb * nb));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            value += accumulate(a[i], b[j], r.grad_a[i], r.grad_b[j], -2.0 / (na * nb));

    r.value = value;
    return r;
}

double average_class_accuracy(const std::vector<int>& predictions, const std::vector<int>& truth) {
    if (predictions.size() != truth.size())
        throw std::invalid_argument("average_class_accuracy: length mismatch");
    if (truth.empty()) throw std::invalid_argument("average_class_accuracy: empty inputs");
    std::map<int, std::pair<int, int>> per_class; // label -> (correct, total)
    for (std::size_t i = 0; i < truth.size(); ++i) {
        auto& [correct, total] = per_class[truth[i]];
        total += 1;
        if (predictions[i] == truth[i]) correct += 1;
    }
    double acc = 0.0;
    for (const auto& [label, stats] : per_class)
        acc += static_cast<double>(stats.first) / static_cast<double>(stats.second);
    return acc / static_cast<double>(per_class.size());
}

double terminal_reward(const FeatureMatrix& target_features, const FeatureMatrix& selected_features,
                       const std::vector<int>& predictions, const std::vector<int>& truth,
                       const RewardConfig& config) {
    config.validate();
    double diversity = mmd(target_features, selected_features, config);
    double accuracy = average_class_accuracy(predictions, truth);
    double r = 1.0 + config.accuracy_weight * accuracy - config.mmd_weight * diversity;
    return r > config.reward_floor ? r : config.reward_floor;
}

} // namespace gflowda
