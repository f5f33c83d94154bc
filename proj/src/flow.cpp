#include "gflowda/flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace gflowda {

namespace {

constexpr double kLogFlowClamp = 30.0; // flows stay within [e^-30, e^30]

double clamp_log_flow(double v) { return std::max(-kLogFlowClamp, std::min(kLogFlowClamp, v)); }

} // namespace

FlowNetwork FlowNetwork::make(int hidden_size, Rng& rng) {
    FlowNetwork fn;
    fn.spec.layer_sizes = {4, hidden_size, 1};
    fn.spec.activation = Activation::relu;
    fn.spec.output = OutputTransform::identity;
    fn.params = Parameters::init(fn.spec, rng);
    return fn;
}

std::string FlowNetwork::to_json() const { return params.to_json(); }

FlowNetwork FlowNetwork::from_json(const std::string& text) {
    FlowNetwork fn;
    fn.params = Parameters::from_json(text);
    if (fn.params.layers.empty() || fn.params.layers.front().in != 4 ||
        fn.params.layers.back().out != 1)
        throw std::invalid_argument("flow network checkpoint must map 4 inputs to 1 output");
    fn.spec.layer_sizes.clear();
    fn.spec.layer_sizes.push_back(fn.params.layers.front().in);
    for (const auto& layer : fn.params.layers) fn.spec.layer_sizes.push_back(layer.out);
    fn.spec.activation = Activation::relu;
    fn.spec.output = OutputTransform::identity;
    return fn;
}

void FlowNetwork::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write flow checkpoint: " + path);
    out << to_json() << "\n";
}

FlowNetwork FlowNetwork::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open flow checkpoint: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

void TrainConfig::validate() const {
    if (episodes_max < 0 || trajectory_buffer <= 0 || budget < 0)
        throw std::invalid_argument("train config counts must be positive");
    if (!(epsilon > 0.0) || !(learning_rate > 0.0))
        throw std::invalid_argument("train config epsilon and learning rate must be positive");
}

double edge_flow(const FlowNetwork& fn, const TrajectoryState& ts, int action) {
    if (action < 0 || action >= ts.sample_count() || ts.is_selected(action))
        throw std::invalid_argument("edge_flow: invalid action " + std::to_string(action));
    double out = forward(fn.spec, fn.params, ts.state.rows[action].as_vector())[0];
    return std::exp(clamp_log_flow(out));
}

std::vector<double> forward_policy(const FlowNetwork& fn, const TrajectoryState& ts,
                                   const std::vector<int>& candidates) {
    if (candidates.empty()) throw std::invalid_argument("forward_policy: no candidate actions");
    std::vector<double> flows(candidates.size());
    double total = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        flows[i] = edge_flow(fn, ts, candidates[i]);
        total += flows[i];
    }
    for (double& f : flows) f /= total;
    return flows;
}

Trajectory sample_trajectory(const FlowNetwork& fn, const TrajectoryState& initial, int budget,
                             const LabelOracle& oracle, Rng& rng) {
    if (budget > initial.sample_count() - initial.step)
        throw std::invalid_argument("sample_trajectory: budget exceeds available samples");
    Trajectory traj;
    traj.states.push_back(initial);
    for (int t = 0; t < budget; ++t) {
        const TrajectoryState& ts = traj.states.back();
        std::vector<int> candidates = candidate_actions(ts);
        std::vector<double> probs = forward_policy(fn, ts, candidates);
        double u = rng.uniform();
        double acc = 0.0;
        int chosen = candidates.back();
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            acc += probs[i];
            if (u < acc) {
                chosen = candidates[i];
                break;
            }
        }
        traj.actions.push_back(chosen);
        traj.states.push_back(apply_action(ts, chosen, oracle));
    }
    return traj;
}

double inflow(const FlowNetwork& fn, const TrajectoryState& ts) {
    if (ts.step == 0) throw std::invalid_argument("inflow: initial state has no parents");
    double total = 0.0;
    for (const auto& [parent, removed] : enumerate_parents(ts))
        total += edge_flow(fn, parent, removed);
    return total;
}

double outflow(const FlowNetwork& fn, const TrajectoryState& ts) {
    std::vector<int> candidates = candidate_actions(ts);
    if (candidates.empty()) throw std::invalid_argument("outflow: state has no outgoing edges");
    double total = 0.0;
    for (int a : candidates) total += edge_flow(fn, ts, a);
    return total;
}

namespace {

// one edge-flow evaluation with tape, for gradient accumulation
struct EdgeEval {
    double flow = 0.0;
    bool clamped = false;
    Tape tape;
};

EdgeEval eval_edge(const FlowNetwork& fn, const TrajectoryState& ts, int action) {
    EdgeEval e;
    double out = forward(fn.spec, fn.params, ts.state.rows[action].as_vector(), &e.tape)[0];
    double clamped = clamp_log_flow(out);
    e.clamped = clamped != out;
    e.flow = std::exp(clamped);
    return e;
}

} // namespace

FlowMatchingLoss flow_matching_loss(const FlowNetwork& fn, const Trajectory& trajectory,
                                    double reward, double epsilon) {
    if (trajectory.states.size() < 2)
        throw std::invalid_argument("flow_matching_loss: trajectory has no transitions");
    if (!(reward > 0.0)) throw std::invalid_argument("flow_matching_loss: reward must be positive");

    FlowMatchingLoss result;
    result.grads = Parameters::zeros_like(fn.spec);

    struct Contribution {
        const TrajectoryState* state;
        int action;
        EdgeEval eval;
        double coeff = 0.0; // dLoss/dFlow
    };

    for (std::size_t t = 1; t < trajectory.states.size(); ++t) {
        const TrajectoryState& st = trajectory.states[t];
        bool is_terminal = t + 1 == trajectory.states.size();

        std::vector<Contribution> contribs;
        double in_total = 0.0;
        auto parents = enumerate_parents(st);
        std::vector<TrajectoryState> parent_storage;
        parent_storage.reserve(parents.size());
        for (auto& [parent, removed] : parents) {
            parent_storage.push_back(std::move(parent));
            Contribution c;
            c.state = nullptr; // filled after storage settles
            c.action = removed;
            contribs.push_back(std::move(c));
        }
        for (std::size_t i = 0; i < contribs.size(); ++i) {
            contribs[i].state = &parent_storage[i];
            contribs[i].eval = eval_edge(fn, parent_storage[i], contribs[i].action);
            in_total += contribs[i].eval.flow;
        }
        std::size_t inflow_count = contribs.size();

        double out_total = 0.0;
        if (is_terminal) {
            out_total = reward;
        } else {
            for (int a : candidate_actions(st)) {
                Contribution c;
                c.state = &st;
                c.action = a;
                c.eval = eval_edge(fn, st, a);
                out_total += c.eval.flow;
                contribs.push_back(std::move(c));
            }
        }

        double diff = std::log(epsilon + in_total) - std::log(epsilon + out_total);
        result.value += diff * diff;

        double d_in = 2.0 * diff / (epsilon + in_total);
        double d_out = is_terminal ? 0.0 : -2.0 * diff / (epsilon + out_total);
        for (std::size_t i = 0; i < contribs.size(); ++i) {
            Contribution& c = contribs[i];
            double coeff = i < inflow_count ? d_in : d_out;
            if (c.eval.clamped || coeff == 0.0) continue;
            // d flow / d net_output = flow (exp), chain into the network
            BackwardResult bw = backward(fn.spec, fn.params, c.eval.tape, {coeff * c.eval.flow});
            result.grads.add_scaled(bw.param_grads, 1.0);
        }
    }
    return result;
}

TrainPolicyResult train_policy(FlowNetwork network, const TrajectoryState& initial,
                               const LabelOracle& oracle, const RewardFn& reward_fn,
                               const TrainConfig& config, Rng& rng) {
    config.validate();
    TrainPolicyResult result;
    OptimizerConfig opt;
    opt.kind = OptimizerKind::adam;
    opt.learning_rate = config.learning_rate;
    OptimizerState opt_state;
    double best_window = std::numeric_limits<double>::infinity();
    int stale_windows = 0;

    for (int episode = 0; episode < config.episodes_max; ++episode) {
        Parameters grads = Parameters::zeros_like(network.spec);
        double loss_acc = 0.0;
        double reward_acc = 0.0;
        for (int b = 0; b < config.trajectory_buffer; ++b) {
            Trajectory traj = sample_trajectory(network, initial, config.budget, oracle, rng);
            double reward = reward_fn(traj.terminal());
            FlowMatchingLoss loss = flow_matching_loss(network, traj, reward, config.epsilon);
            loss_acc += loss.value;
            reward_acc += reward;
            grads.add_scaled(loss.grads, 1.0 / config.trajectory_buffer);
        }
        optimizer_step(network.spec, network.params, grads, opt_state, opt);

        EpisodeLogEntry entry;
        entry.episode = episode;
        entry.loss = loss_acc / config.trajectory_buffer;
        entry.mean_reward = reward_acc / config.trajectory_buffer;
        result.log.push_back(entry);
        result.episodes_run = episode + 1;

        if (config.plateau_stop && (episode + 1) % config.plateau_window == 0) {
            double recent = 0.0;
            std::size_t sz = result.log.size();
            for (int i = 0; i < config.plateau_window; ++i) recent += result.log[sz - 1 - i].loss;
            recent /= config.plateau_window;
            if (recent <= config.plateau_floor) {
                result.plateaued = true;
                break;
            }
            if (recent < best_window * (1.0 - config.plateau_tol)) {
                best_window = recent;
                stale_windows = 0;
            } else if (++stale_windows >= config.plateau_patience) {
                result.plateaued = true;
                break;
            }
        }
    }
    result.network = std::move(network);
    return result;
}

} // namespace gflowda
