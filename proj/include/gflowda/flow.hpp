#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gflowda/nn.hpp"
#include "gflowda/state.hpp"

namespace gflowda {

// Edge-flow scorer: a small MLP mapping one 4-value state row to a log-flow.
// Every candidate action is scored by its own row, so the network is
// independent of the number of target samples.
struct FlowNetwork {
    MlpSpec spec;
    Parameters params;

    static FlowNetwork make(int hidden_size, Rng& rng);

    std::string to_json() const;
    static FlowNetwork from_json(const std::string& text);
    void save(const std::string& path) const;
    static FlowNetwork load(const std::string& path);
};

struct TrainConfig {
    int episodes_max = 2000;
    int trajectory_buffer = 5;
    double epsilon = 1e-8; // log stabilizer in the flow-matching loss
    double learning_rate = 0.001;
    int budget = 0;
    // stop when no 50-episode window improves the best mean loss by a
    // relative 1e-4 for plateau_patience consecutive windows, or once the
    // window mean falls below plateau_floor
    bool plateau_stop = true;
    int plateau_window = 50;
    double plateau_tol = 1e-4;
    int plateau_patience = 12;
    double plateau_floor = 1e-6;

    void validate() const;
};

// exp of the network output on the action's state row; clamped to keep the
// flow finite under extreme parameters
double edge_flow(const FlowNetwork& fn, const TrajectoryState& ts, int action);

// P(a|s) = F(s,a) / sum over candidates, aligned with candidate_actions order
std::vector<double> forward_policy(const FlowNetwork& fn, const TrajectoryState& ts,
                                   const std::vector<int>& candidates);

struct Trajectory {
    std::vector<TrajectoryState> states; // s_0 ... s_f, budget+1 entries
    std::vector<int> actions;

    const TrajectoryState& terminal() const { return states.back(); }
};

Trajectory sample_trajectory(const FlowNetwork& fn, const TrajectoryState& initial, int budget,
                             const LabelOracle& oracle, Rng& rng);

// sum of edge flows from all parent states into ts (ts must not be initial)
double inflow(const FlowNetwork& fn, const TrajectoryState& ts);

// sum of edge flows out of ts over its candidate actions (ts must not be
// terminal for the caller's purposes; the function itself just sums)
double outflow(const FlowNetwork& fn, const TrajectoryState& ts);

struct FlowMatchingLoss {
    double value = 0.0;
    Parameters grads;
};

// Squared flow-matching residuals in log space over every non-initial state
// of the trajectory, with analytic gradients through both inflow and outflow.
FlowMatchingLoss flow_matching_loss(const FlowNetwork& fn, const Trajectory& trajectory,
                                    double reward, double epsilon);

using RewardFn = std::function<double(const TrajectoryState&)>;

struct EpisodeLogEntry {
    int episode = 0;
    double loss = 0.0;
    double mean_reward = 0.0;
};

struct TrainPolicyResult {
    FlowNetwork network;
    std::vector<EpisodeLogEntry> log;
    int episodes_run = 0;
    bool plateaued = false;
};

// Buffered flow-matching training: per episode, sample trajectory_buffer
// trajectories, score their terminal rewards, average the loss, one Adam step.
TrainPolicyResult train_policy(FlowNetwork network, const TrajectoryState& initial,
                               const LabelOracle& oracle, const RewardFn& reward_fn,
                               const TrainConfig& config, Rng& rng);

} // namespace gflowda
