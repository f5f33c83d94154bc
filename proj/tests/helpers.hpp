#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "gflowda/nn.hpp"
#include "gflowda/scenario.hpp"

namespace testutil {

// Central finite differences over every entry of a parameter block, compared
// against the analytic gradient. Returns the worst relative error, using the
// larger magnitude as the scale (absolute once both are tiny).
inline double max_gradient_error(gflowda::Parameters& params, const gflowda::Parameters& analytic,
                                 const std::function<double()>& loss_fn, double step = 1e-4) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params.count(); ++i) {
        double original = params.at_flat(i);
        params.at_flat(i) = original + step;
        double up = loss_fn();
        params.at_flat(i) = original - step;
        double down = loss_fn();
        params.at_flat(i) = original;
        double numeric = (up - down) / (2.0 * step);
        double a = analytic.at_flat(i);
        double scale = std::max(std::fabs(a), std::fabs(numeric));
        double err = scale > 1e-6 ? std::fabs(a - numeric) / scale : std::fabs(a - numeric);
        worst = std::max(worst, err);
    }
    return worst;
}

// small well-separated two-cluster scenario used across suites
inline gflowda::ScenarioSpec tiny_scenario(int common = 2, int s_priv = 1, int t_priv = 1,
                                           int m = 60, int n = 60, std::uint64_t seed = 11) {
    gflowda::ScenarioSpec spec;
    spec.feature_dim = 2;
    int next = 0;
    for (int i = 0; i < common; ++i) spec.common_labels.push_back(next++);
    for (int i = 0; i < s_priv; ++i) spec.source_private.push_back(next++);
    for (int i = 0; i < t_priv; ++i) spec.target_private.push_back(next++);
    spec.source_count = m;
    spec.target_count = n;
    spec.seed = seed;

    auto all_source = spec.source_label_set();
    auto all_target = spec.target_label_set();
    double angle = 0.0;
    for (int label = 0; label < next; ++label) {
        std::vector<double> mean{4.0 * std::cos(angle), 4.0 * std::sin(angle)};
        angle += 2.0 * M_PI / next;
        if (all_source.count(label)) {
            spec.class_means[{"source", label}] = mean;
            spec.class_scales[{"source", label}] = 0.7;
        }
        if (all_target.count(label)) {
            std::vector<double> shifted = mean;
            shifted[0] += 0.5; // conditional shift
            spec.class_means[{"target", label}] = shifted;
            spec.class_scales[{"target", label}] = 0.7;
        }
    }
    int si = 0, ti = 0;
    for (int label : all_source) spec.source_priors.probs[label] = 1.0 + 0.3 * si++;
    for (int label : all_target) spec.target_priors.probs[label] = 1.0 + 0.5 * ti++;
    double sw = 0.0, tw = 0.0;
    for (const auto& [label, v] : spec.source_priors.probs) sw += v;
    for (const auto& [label, v] : spec.target_priors.probs) tw += v;
    for (auto& [label, v] : spec.source_priors.probs) v /= sw;
    for (auto& [label, v] : spec.target_priors.probs) v /= tw;
    return spec;
}

} // namespace testutil
