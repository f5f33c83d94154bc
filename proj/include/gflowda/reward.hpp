#pragma once

#include <vector>

#include "gflowda/state.hpp"

namespace gflowda {

struct RewardConfig {
    // RBF bandwidths (sigma of exp(-d^2 / (2 sigma^2))); empty means the
    // median pairwise-distance heuristic over the pooled samples
    std::vector<double> kernel_bandwidths;
    double accuracy_weight = 1.0;
    double mmd_weight = 1.0;
    double reward_floor = 1e-6;

    void validate() const;
};

// Biased (V-statistic) estimator of squared MMD with a sum of RBF kernels.
// Includes diagonal terms so the value is a true squared RKHS norm: always
// >= 0 and exactly 0 for identical sample sets.
double mmd(const FeatureMatrix& a, const FeatureMatrix& b, const RewardConfig& config);

struct MmdWithGradients {
    double value = 0.0;
    FeatureMatrix grad_a; // d value / d a[i][k]
    FeatureMatrix grad_b;
};

// Same estimator with gradients w.r.t. both feature sets (bandwidths treated
// as constants, as with the median heuristic).
MmdWithGradients mmd_with_gradients(const FeatureMatrix& a, const FeatureMatrix& b,
                                    const RewardConfig& config);

// Macro average: mean over classes present in `truth` of per-class accuracy.
double average_class_accuracy(const std::vector<int>& predictions, const std::vector<int>& truth);

// r = max(floor, 1 + accuracy_weight * accuracy - mmd_weight * mmd).
// The +1 shift keeps rewards strictly positive for the flow-matching log.
double terminal_reward(const FeatureMatrix& target_features, const FeatureMatrix& selected_features,
                       const std::vector<int>& predictions, const std::vector<int>& truth,
                       const RewardConfig& config);

} // namespace gflowda
