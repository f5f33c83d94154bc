#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gflowda/flow.hpp"
#include "gflowda/theory.hpp"

namespace gflowda {

// Verification fixtures shared by the CLI test subcommands and the
// acceptance suite.

// Enumerable selection instance: six samples, budget two, 15 terminal sets.
// The reward table is built so that an exact smooth flow solution exists:
// entropies come from the Perron eigenvector of the pairwise-similarity
// kernel, making the conservation equations solvable by construction.
struct EnumerableInstance {
    std::shared_ptr<FeatureMatrix> features;
    std::vector<std::vector<double>> predictions;
    TrajectoryState initial;
    std::map<std::pair<int, int>, double> reward_table; // keyed by sorted index pair
    LabelOracle oracle;

    static EnumerableInstance build(std::uint64_t seed = 4);
    static std::pair<int, int> key_of(const TrajectoryState& terminal);
    double reward(const TrajectoryState& terminal) const;
};

struct ProportionalityOptions {
    int episodes_max = 2000;
    int samples = 20000;
    std::uint64_t instance_seed = 4;
    double tv_limit = 0.05;
    double conservation_limit = 0.05;
};

struct ProportionalityResult {
    double total_variation = 0.0;            // sampled terminal sets vs r / sum r
    double uniform_total_variation = 0.0;    // how far a uniform policy would be
    double worst_conservation_gap = 0.0;     // max |log(eps+in) - log(eps+out)|
    int episodes_run = 0;
    bool tv_ok = false;
    bool conservation_ok = false;
    FlowNetwork network;
    EnumerableInstance instance;
};

ProportionalityResult run_proportionality_check(const ProportionalityOptions& options);

struct BoundCheckResult {
    int trials = 0;
    int violations = 0;
    double min_slack = 0.0;
    std::string first_violation; // empty when none
};

// Randomized soundness check of the five-term risk bound on exact joints.
// Selected-domain conditionals mirror the target's (label-conditioned
// subsampling semantics) and the selected label set covers the common one.
BoundCheckResult run_bound_soundness_check(int trials, std::uint64_t seed);

} // namespace gflowda
