#include <doctest.h>

#include <cmath>
#include <map>
#include <memory>

#include "gflowda/flow.hpp"
#include "gflowda/selfcheck.hpp"
#include "helpers.hpp"

using namespace gflowda;

namespace {

struct FlowFixture {
    std::shared_ptr<FeatureMatrix> features;
    std::vector<std::vector<double>> predictions;
    std::vector<int> labels;
    LabelOracle oracle;
    TrajectoryState init;

    explicit FlowFixture(int n, std::uint64_t seed = 5) {
        Rng rng(seed);
        features = std::make_shared<FeatureMatrix>();
        for (int i = 0; i < n; ++i) {
            features->push_back({rng.gaussian(), rng.gaussian(), rng.gaussian()});
            labels.push_back(i % 2);
            double a = 0.1 + 0.8 * rng.uniform();
            predictions.push_back({a, 1.0 - a});
        }
        auto copy = labels;
        oracle = [copy](int i) { return copy[i]; };
        init = init_state(features, predictions);
    }
};

} // namespace

TEST_SUITE_BEGIN("gflownet_policy");

TEST_CASE("zero-weight network yields unit flows and a uniform policy") {
    FlowFixture fx(7);
    FlowNetwork fn;
    fn.spec.layer_sizes = {4, 8, 1};
    fn.spec.activation = Activation::relu;
    fn.spec.output = OutputTransform::identity;
    fn.params = Parameters::zeros_like(fn.spec);

    auto candidates = candidate_actions(fx.init);
    for (int a : candidates) CHECK(edge_flow(fn, fx.init, a) == doctest::Approx(1.0));
    auto probs = forward_policy(fn, fx.init, candidates);
    for (double p : probs) CHECK(p == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("flows are positive and rows determine them") {
    FlowFixture fx(6);
    Rng rng(9);
    FlowNetwork fn = FlowNetwork::make(8, rng);
    for (int trial = 0; trial < 5; ++trial) {
        for (int a : candidate_actions(fx.init)) CHECK(edge_flow(fn, fx.init, a) > 0.0);
    }
    // identical state rows receive identical flows
    auto features = std::make_shared<FeatureMatrix>(FeatureMatrix{{1, 0, 0}, {1, 0, 0}, {0, 1, 0}});
    std::vector<std::vector<double>> preds(3, std::vector<double>{0.5, 0.5});
    TrajectoryState twin = init_state(features, preds);
    CHECK(edge_flow(fn, twin, 0) == doctest::Approx(edge_flow(fn, twin, 1)));
}

TEST_CASE("policy distribution sums to one and ignores log-flow shifts") {
    FlowFixture fx(9);
    Rng rng(10);
    FlowNetwork fn = FlowNetwork::make(8, rng);
    auto candidates = candidate_actions(fx.init);
    auto probs = forward_policy(fn, fx.init, candidates);
    double total = 0.0;
    for (double p : probs) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

    // adding a constant to the network output leaves the distribution unchanged
    FlowNetwork shifted = fn;
    shifted.params.layers.back().b[0] += 1.7;
    auto shifted_probs = forward_policy(shifted, fx.init, candidates);
    for (std::size_t i = 0; i < probs.size(); ++i)
        CHECK(probs[i] == doctest::Approx(shifted_probs[i]).epsilon(1e-9));
}

TEST_CASE("edge_flow rejects selected or out-of-range actions") {
    FlowFixture fx(5);
    Rng rng(11);
    FlowNetwork fn = FlowNetwork::make(8, rng);
    TrajectoryState ts = apply_action(fx.init, 2, fx.oracle);
    CHECK_THROWS_AS(edge_flow(fn, ts, 2), std::invalid_argument);
    CHECK_THROWS_AS(edge_flow(fn, ts, 50), std::invalid_argument);
}

TEST_CASE("sampled trajectories respect the budget with distinct actions") {
    FlowFixture fx(10);
    Rng rng(12);
    FlowNetwork fn = FlowNetwork::make(8, rng);
    Rng sampler(13);

    Trajectory empty = sample_trajectory(fn, fx.init, 0, fx.oracle, sampler);
    CHECK(empty.states.size() == 1);
    CHECK(empty.actions.empty());

    Trajectory full = sample_trajectory(fn, fx.init, 10, fx.oracle, sampler);
    CHECK(full.actions.size() == 10);
    std::set<int> unique(full.actions.begin(), full.actions.end());
    CHECK(unique.size() == 10);
    double labeled = 0.0;
    for (const auto& row : full.terminal().state.rows) labeled += row.labeled;
    CHECK(labeled == doctest::Approx(10.0));

    CHECK_THROWS_AS(sample_trajectory(fn, fx.init, 11, fx.oracle, sampler), std::invalid_argument);
}

TEST_CASE("inflow and outflow match explicit summation") {
    FlowFixture fx(8);
    Rng rng(14);
    FlowNetwork fn = FlowNetwork::make(8, rng);

    TrajectoryState s1 = apply_action(fx.init, 3, fx.oracle);
    // single parent at step 1: the initial state, re-offering action 3
    CHECK(inflow(fn, s1) == doctest::Approx(edge_flow(fn, fx.init, 3)));

    TrajectoryState s2 = apply_action(s1, 6, fx.oracle);
    auto parents = enumerate_parents(s2);
    double expected_in = 0.0;
    for (const auto& [parent, removed] : parents) expected_in += edge_flow(fn, parent, removed);
    CHECK(inflow(fn, s2) == doctest::Approx(expected_in));

    double expected_out = 0.0;
    for (int a : candidate_actions(s2)) expected_out += edge_flow(fn, s2, a);
    CHECK(outflow(fn, s2) == doctest::Approx(expected_out));
    for (int a : candidate_actions(s2)) CHECK(outflow(fn, s2) >= edge_flow(fn, s2, a));

    CHECK_THROWS_AS(inflow(fn, fx.init), std::invalid_argument);
}

TEST_CASE("zero-weight network gives inflow = step and outflow = remaining") {
    FlowFixture fx(9);
    FlowNetwork fn;
    fn.spec.layer_sizes = {4, 8, 1};
    fn.spec.activation = Activation::relu;
    fn.spec.output = OutputTransform::identity;
    fn.params = Parameters::zeros_like(fn.spec);

    TrajectoryState ts = fx.init;
    for (int t = 1; t <= 3; ++t) {
        ts = apply_action(ts, t * 2, fx.oracle);
        CHECK(inflow(fn, ts) == doctest::Approx(static_cast<double>(t)));
        CHECK(outflow(fn, ts) == doctest::Approx(static_cast<double>(9 - t)));
    }
}

TEST_CASE("single-step flow matching loss has the closed form") {
    FlowFixture fx(1, 21);
    Rng rng(15);
    FlowNetwork fn = FlowNetwork::make(8, rng);
    Rng sampler(16);
    Trajectory traj = sample_trajectory(fn, fx.init, 1, fx.oracle, sampler);
    double r = 1.7;
    double eps = 1e-8;
    double flow = edge_flow(fn, fx.init, 0);
    FlowMatchingLoss loss = flow_matching_loss(fn, traj, r, eps);
    double expected = std::pow(std::log(eps + flow) - std::log(eps + r), 2);
    CHECK(loss.value == doctest::Approx(expected).epsilon(1e-12));

    // zero exactly when the single edge flow equals the reward
    FlowMatchingLoss zero = flow_matching_loss(fn, traj, flow, eps);
    CHECK(zero.value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("flow matching loss rejects bad arguments") {
    FlowFixture fx(4);
    Rng rng(17);
    FlowNetwork fn = FlowNetwork::make(8, rng);
    Trajectory no_steps;
    no_steps.states.push_back(fx.init);
    CHECK_THROWS_AS(flow_matching_loss(fn, no_steps, 1.0, 1e-8), std::invalid_argument);
    Rng sampler(18);
    Trajectory traj = sample_trajectory(fn, fx.init, 2, fx.oracle, sampler);
    CHECK_THROWS_AS(flow_matching_loss(fn, traj, -1.0, 1e-8), std::invalid_argument);
}

TEST_CASE("flow matching gradients match finite differences") {
    Rng rng(19);
    for (int trial = 0; trial < 4; ++trial) {
        FlowFixture fx(5, 100 + trial);
        FlowNetwork fn = FlowNetwork::make(6, rng);
        fn.params.scale(0.5); // keep log-flows far from the clamp
        Rng sampler(20 + trial);
        Trajectory traj = sample_trajectory(fn, fx.init, 3, fx.oracle, sampler);
        double reward = 0.8 + trial * 0.3;
        FlowMatchingLoss loss = flow_matching_loss(fn, traj, reward, 1e-8);
        auto loss_fn = [&] { return flow_matching_loss(fn, traj, reward, 1e-8).value; };
        CHECK(testutil::max_gradient_error(fn.params, loss.grads, loss_fn) < 1e-4);
    }
}

TEST_CASE("terminal sets are order-insensitive dag nodes") {
    FlowFixture fx(6);
    Rng rng(22);
    FlowNetwork fn = FlowNetwork::make(8, rng);

    TrajectoryState ab = apply_action(apply_action(fx.init, 1, fx.oracle), 4, fx.oracle);
    TrajectoryState ba = apply_action(apply_action(fx.init, 4, fx.oracle), 1, fx.oracle);
    // same selected set, same state matrix, same inflow regardless of order
    for (int i = 0; i < ab.sample_count(); ++i) {
        CHECK(ab.state.rows[i].inst_sim == doctest::Approx(ba.state.rows[i].inst_sim));
        CHECK(ab.state.rows[i].class_sim == doctest::Approx(ba.state.rows[i].class_sim));
        CHECK(ab.state.rows[i].labeled == ba.state.rows[i].labeled);
    }
    CHECK(inflow(fn, ab) == doctest::Approx(inflow(fn, ba)));
    CHECK(enumerate_parents(ab).size() == 2);
}

TEST_CASE("training tightens flow conservation on a tiny instance") {
    ProportionalityOptions options;
    options.episodes_max = 600;
    options.samples = 2000;
    ProportionalityResult result = run_proportionality_check(options);

    // untrained baseline for comparison
    Rng init_rng(41);
    FlowNetwork fresh = FlowNetwork::make(8, init_rng);
    double untrained_worst = 0.0;
    for (int i = 0; i < 6; ++i) {
        TrajectoryState s1 =
            apply_action(result.instance.initial, i, result.instance.oracle);
        double in = inflow(fresh, s1);
        double out = outflow(fresh, s1);
        untrained_worst = std::max(untrained_worst,
                                   std::fabs(std::log(1e-8 + in) - std::log(1e-8 + out)));
    }
    CHECK(result.worst_conservation_gap < untrained_worst);
    CHECK(result.total_variation < result.uniform_total_variation);
}

TEST_CASE("plateau stop halts a converged run early") {
    FlowFixture fx(3, 44);
    Rng rng(26);
    FlowNetwork fn = FlowNetwork::make(4, rng);
    RewardFn constant = [](const TrajectoryState&) { return 1.0; };
    TrainConfig config;
    config.budget = 1;
    config.episodes_max = 2000;
    Rng rollout(27);
    TrainPolicyResult result = train_policy(std::move(fn), fx.init, fx.oracle, constant, config, rollout);
    CHECK(result.episodes_run < 2000);
    CHECK(result.plateaued);
}

TEST_CASE("checkpoint json restores the network") {
    Rng rng(28);
    FlowNetwork fn = FlowNetwork::make(8, rng);
    FlowNetwork back = FlowNetwork::from_json(fn.to_json());
    FlowFixture fx(5);
    for (int a : candidate_actions(fx.init))
        CHECK(edge_flow(fn, fx.init, a) == doctest::Approx(edge_flow(back, fx.init, a)));
    CHECK_THROWS(FlowNetwork::from_json(R"({"layers":[{"in":3,"out":1,"w":[[1,1,1]],"b":[0]}]})"));
}

TEST_SUITE_END();
