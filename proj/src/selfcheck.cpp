#include "gflowda/selfcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gflowda/state.hpp"

namespace gflowda {

namespace {

constexpr int kInstanceSize = 6;
constexpr double kFeatureSpread = 0.45; // cluster tightness; keeps cosines away from the -1 sentinel
constexpr double kSimCoeff = -0.8;      // reward contrast in the similarity direction
constexpr double kEntropyCoeff = 2.2;   // reward contrast in the entropy direction

} // namespace

EnumerableInstance EnumerableInstance::build(std::uint64_t seed) {
    const int n = kInstanceSize;
    Rng rng(seed);
    EnumerableInstance inst;
    inst.features = std::make_shared<FeatureMatrix>();
    std::vector<double> base(8, 0.0);
    for (double& v : base) v = rng.gaussian();
    for (int i = 0; i < n; ++i) {
        std::vector<double> x(8);
        for (int k = 0; k < 8; ++k) x[k] = base[k] + kFeatureSpread * rng.gaussian();
        inst.features->push_back(std::move(x));
    }
    SimilarityCache cache = SimilarityCache::build(*inst.features);

    // Perron eigenvector of M_ij = exp(2 a s_ij): setting the per-sample
    // entropies from it makes the internal conservation equations admit an
    // exact solution of the form flow = exp(c0 + a (col1+col2) + b entropy).
    std::vector<double> v(n, 1.0);
    for (int it = 0; it < 500; ++it) {
        std::vector<double> next(n, 0.0);
        double norm = 0.0;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j)
                if (j != i) next[i] += std::exp(2.0 * kSimCoeff * cache.at(i, j)) * v[j];
            norm = std::max(norm, next[i]);
        }
        for (double& x : next) x /= norm;
        v = next;
    }
    double vmax = 0.0;
    for (double x : v) vmax = std::max(vmax, x);
    std::vector<double> entropies(n);
    for (int i = 0; i < n; ++i)
        entropies[i] = (std::log(v[i] / vmax) + kEntropyCoeff) / kEntropyCoeff; // max pinned at 1.0

    // three-class predictions (p, q, q) realizing each entropy
    for (int i = 0; i < n; ++i) {
        double lo = 1.0 / 3.0, hi = 0.999999;
        for (int it = 0; it < 80; ++it) {
            double mid = 0.5 * (lo + hi), q = (1.0 - mid) / 2.0;
            double h = -(mid * std::log(mid) + 2.0 * q * std::log(q));
            if (h > entropies[i]) lo = mid; else hi = mid;
        }
        double p = 0.5 * (lo + hi), q = (1.0 - p) / 2.0;
        inst.predictions.push_back({p, q, q});
    }
    inst.initial = init_state(inst.features, inst.predictions);

    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double hi = shannon_entropy(inst.predictions[i]);
            double hj = shannon_entropy(inst.predictions[j]);
            double r = std::exp(2.0 * kSimCoeff * cache.at(i, j)) *
                       (std::exp(kEntropyCoeff * hi) + std::exp(kEntropyCoeff * hj));
            inst.reward_table[{i, j}] = r;
            total += r;
        }
    }
    for (auto& [key, r] : inst.reward_table) r /= total / 15.0; // mean 1

    inst.oracle = [](int i) { return i % 2; };
    return inst;
}

std::pair<int, int> EnumerableInstance::key_of(const TrajectoryState& terminal) {
    std::vector<int> ids;
    for (const auto& [idx, label] : terminal.selected) ids.push_back(idx);
    std::sort(ids.begin(), ids.end());
    return {ids[0], ids[1]};
}

double EnumerableInstance::reward(const TrajectoryState& terminal) const {
    return reward_table.at(key_of(terminal));
}

ProportionalityResult run_proportionality_check(const ProportionalityOptions& options) {
    ProportionalityResult result;
    result.instance = EnumerableInstance::build(options.instance_seed);
    EnumerableInstance& inst = result.instance;

    TrainConfig config;
    config.episodes_max = options.episodes_max;
    config.budget = 2;
    config.trajectory_buffer = 5;
    config.learning_rate = 0.001;
    Rng init_rng(41);
    FlowNetwork net = FlowNetwork::make(8, init_rng);
    Rng rollout(42);
    RewardFn reward_fn = [&inst](const TrajectoryState& ts) { return inst.reward(ts); };
    TrainPolicyResult trained =
        train_policy(std::move(net), inst.initial, inst.oracle, reward_fn, config, rollout);
    result.network = trained.network;
    result.episodes_run = trained.episodes_run;

    std::map<std::pair<int, int>, long> counts;
    Rng sampler(43);
    for (int s = 0; s < options.samples; ++s) {
        Trajectory traj = sample_trajectory(result.network, inst.initial, 2, inst.oracle, sampler);
        counts[EnumerableInstance::key_of(traj.terminal())] += 1;
    }
    double total_reward = 0.0;
    for (const auto& [key, r] : inst.reward_table) total_reward += r;
    double tv = 0.0, tv_uniform = 0.0;
    for (const auto& [key, r] : inst.reward_table) {
        double target = r / total_reward;
        tv += std::fabs(target - static_cast<double>(counts[key]) / options.samples);
        tv_uniform += std::fabs(target - 1.0 / 15.0);
    }
    result.total_variation = 0.5 * tv;
    result.uniform_total_variation = 0.5 * tv_uniform;
    result.tv_ok = result.total_variation <= options.tv_limit;

    double worst = 0.0;
    for (int i = 0; i < kInstanceSize; ++i) {
        TrajectoryState s1 = apply_action(inst.initial, i, inst.oracle);
        double in = inflow(result.network, s1);
        double out = outflow(result.network, s1);
        worst = std::max(worst, std::fabs(std::log(1e-8 + in) - std::log(1e-8 + out)));
    }
    result.worst_conservation_gap = worst;
    result.conservation_ok = worst <= options.conservation_limit;
    return result;
}

BoundCheckResult run_bound_soundness_check(int trials, std::uint64_t seed) {
    Rng rng(seed);
    BoundCheckResult result;
    result.trials = trials;
    result.min_slack = 1e300;

    for (int trial = 0; trial < trials; ++trial) {
        int k = 1 + static_cast<int>(rng.below(3));
        std::set<int> common, s_priv, t_priv;
        int next = 0;
        for (int i = 0; i < k; ++i) common.insert(next++);
        s_priv.insert(next++);
        if (rng.uniform() < 0.4) s_priv.insert(next++);
        t_priv.insert(next++);
        if (rng.uniform() < 0.4) t_priv.insert(next++);

        std::set<int> s_space = common, t_space = common;
        s_space.insert(s_priv.begin(), s_priv.end());
        t_space.insert(t_priv.begin(), t_priv.end());
        std::set<int> slots = s_space;
        slots.insert(t_priv.begin(), t_priv.end());

        auto random_conditionals = [&](const std::set<int>& labels) {
            std::map<int, std::map<int, double>> cond;
            for (int y : labels) {
                double total = 0.0;
                for (int i : slots) {
                    double v = rng.uniform();
                    cond[y][i] = v * v + 1e-3; // skewed toward sparse predictors
                    total += cond[y][i];
                }
                for (auto& [i, v] : cond[y]) v /= total;
            }
            return cond;
        };
        auto random_marginals = [&](const std::set<int>& labels) {
            std::map<int, double> marg;
            double total = 0.0;
            for (int y : labels) {
                marg[y] = 0.05 + rng.uniform();
                total += marg[y];
            }
            for (auto& [y, v] : marg) v /= total;
            return marg;
        };
        auto assemble = [](const std::map<int, double>& marg,
                           const std::map<int, std::map<int, double>>& cond) {
            DiscreteJoint j;
            for (const auto& [y, gamma] : marg)
                for (const auto& [i, p] : cond.at(y)) j.p[y][i] = gamma * p;
            return j;
        };

        auto s_cond = random_conditionals(s_space);
        auto t_cond = random_conditionals(t_space);
        DiscreteJoint js = assemble(random_marginals(s_space), s_cond);
        DiscreteJoint jt = assemble(random_marginals(t_space), t_cond);

        std::set<int> selected = common;
        for (int y : t_priv)
            if (rng.uniform() < 0.5) selected.insert(y);
        std::map<int, std::map<int, double>> l_cond;
        for (int y : selected) l_cond[y] = t_cond[y];
        DiscreteJoint jl = assemble(random_marginals(selected), l_cond);

        BoundReport report = target_risk_bound(js, jl, jt, {common, selected, t_priv});
        result.min_slack = std::min(result.min_slack, report.slack);
        if (report.slack < -1e-9) {
            ++result.violations;
            if (result.first_violation.empty())
                result.first_violation = "trial " + std::to_string(trial) + ": target risk " +
                                         std::to_string(report.target_risk) + " > bound " +
                                         std::to_string(report.bound);
        }
    }
    return result;
}

} // namespace gflowda
