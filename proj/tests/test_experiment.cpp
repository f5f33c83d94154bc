#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gflowda/experiment.hpp"
#include "helpers.hpp"

using namespace gflowda;

namespace {

// small fast configuration shared by the suite
ExperimentConfig quick_config(Strategy strategy = Strategy::random_pick) {
    ExperimentConfig c;
    c.scenario = testutil::tiny_scenario(2, 1, 1, 60, 50, 5);
    c.strategy = strategy;
    c.budget_fraction = 0.1;
    c.seeds = {3};
    c.guan_initial_epochs = 15;
    c.guan_epochs_per_reward = 4;
    c.guan_final_epochs = 20;
    c.final_candidates = 4;
    c.train.episodes_max = 6;
    c.train.trajectory_buffer = 2;
    c.train.plateau_stop = false;
    c.guan.feature_dim = 4;
    c.guan.extractor_hidden = {6};
    return c;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

TEST_SUITE_BEGIN("experiment");

TEST_CASE("config json round trip") {
    ExperimentConfig c = quick_config(Strategy::entropy);
    c.reward.kernel_bandwidths = {0.5, 2.0};
    ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
    CHECK(back.strategy == Strategy::entropy);
    CHECK(back.budget_fraction == doctest::Approx(0.1));
    CHECK(back.seeds == c.seeds);
    CHECK(back.train.episodes_max == 6);
    CHECK(back.reward.kernel_bandwidths == c.reward.kernel_bandwidths);
    CHECK(back.guan.feature_dim == 4);
    REQUIRE(back.scenario.has_value());
    CHECK(back.scenario->target_count == 50);
}

TEST_CASE("config validation catches bad values") {
    ExperimentConfig c = quick_config();
    c.budget_fraction = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = quick_config();
    c.seeds.clear();
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = quick_config();
    c.scenario.reset();
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("budget is exact for every strategy") {
    for (Strategy s : {Strategy::random_pick, Strategy::entropy}) {
        ExperimentConfig c = quick_config(s);
        RunResult r = run_strategy(c, 3);
        CHECK(r.selected_indices.size() == 5); // ceil(0.1 * 50)
        std::set<int> unique(r.selected_indices.begin(), r.selected_indices.end());
        CHECK(unique.size() == 5);
    }
}

TEST_CASE("random baseline is reproducible per seed") {
    ExperimentConfig c = quick_config(Strategy::random_pick);
    RunResult a = run_baseline(c, 3);
    RunResult b = run_baseline(c, 3);
    CHECK(a.selected_indices == b.selected_indices);
    CHECK(a.avg_class_accuracy == b.avg_class_accuracy);
    RunResult other = run_baseline(c, 4);
    CHECK(a.selected_indices != other.selected_indices);
}

TEST_CASE("entropy baseline picks the top-entropy pool samples") {
    ExperimentConfig c = quick_config(Strategy::entropy);
    c.guan_initial_epochs = 10;
    std::uint64_t seed = 6;
    RunResult r = run_baseline(c, seed);

    // recompute the expected choice directly from the initial model
    RunContext ctx = prepare_run(c, seed);
    std::vector<std::pair<double, int>> scored;
    for (int idx : ctx.pool_indices) {
        double h = predict(ctx.initial_model, ctx.target.examples[idx].features).entropy;
        scored.emplace_back(-h, idx);
    }
    std::sort(scored.begin(), scored.end());
    std::vector<int> expected;
    for (int i = 0; i < ctx.budget; ++i) expected.push_back(scored[i].second);
    CHECK(r.selected_indices == expected);
}

TEST_CASE("gflowda run produces a full result") {
    ExperimentConfig c = quick_config(Strategy::gflowda);
    RunResult r = run_gflowda(c, 3);
    CHECK(r.selected_indices.size() == 5);
    CHECK(r.episode_log.size() == 6);
    CHECK_FALSE(r.policy_checkpoint.empty());
    CHECK(r.avg_class_accuracy >= 0.0);
    CHECK(r.avg_class_accuracy <= 1.0);
    CHECK(r.jsd_selected_vs_target >= 0.0);
    CHECK(r.jsd_selected_vs_target <= 1.0);
    CHECK(r.final_reward > 0.0);
    CHECK(std::isfinite(r.bound.bound));
}

TEST_CASE("full-budget selection covers the target and zeroes the jsd") {
    ExperimentConfig c = quick_config(Strategy::random_pick);
    c.scenario = testutil::tiny_scenario(1, 1, 1, 30, 20, 8);
    c.budget_fraction = 1.0;
    RunResult r = run_baseline(c, 2);
    CHECK(r.selected_indices.size() == 20);
    CHECK(r.jsd_selected_vs_target == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("transfer runs frozen and fine-tuned from a checkpoint") {
    ExperimentConfig c = quick_config(Strategy::gflowda);
    RunResult trained = run_gflowda(c, 3);
    auto dir = std::filesystem::temp_directory_path() / "gflowda_transfer_test";
    std::filesystem::create_directories(dir);
    std::string ck = (dir / "policy.json").string();
    {
        std::ofstream out(ck);
        out << trained.policy_checkpoint;
    }

    ExperimentConfig shifted = c;
    shifted.scenario = testutil::tiny_scenario(2, 1, 1, 60, 50, 9);
    shifted.transfer_fine_tune_episodes = 3;
    RunResult frozen = transfer_policy(ck, shifted, 4, false);
    CHECK(frozen.episode_log.empty()); // no training episodes
    CHECK(frozen.selected_indices.size() == 5);
    RunResult tuned = transfer_policy(ck, shifted, 4, true);
    CHECK(tuned.episode_log.size() == 3);
    CHECK(tuned.selected_indices.size() == 5);

    CHECK_THROWS(transfer_policy((dir / "missing.json").string(), shifted, 4, false));
    std::filesystem::remove_all(dir);
}

TEST_CASE("report files have the expected shape and are deterministic") {
    ExperimentConfig c = quick_config(Strategy::random_pick);
    c.seeds = {3, 4};
    std::vector<RunResult> results;
    for (auto seed : c.seeds) results.push_back(run_baseline(c, seed));

    auto dir = std::filesystem::temp_directory_path() / "gflowda_report_test";
    emit_report(results, c, dir.string());

    std::string results_csv = read_file((dir / "results.csv").string());
    CHECK(results_csv.rfind("strategy,seed,accuracy,jsd,reward\n", 0) == 0);
    CHECK(std::count(results_csv.begin(), results_csv.end(), '\n') == 3); // header + one row per run

    std::string projection = read_file((dir / "projection.csv").string());
    CHECK(projection.rfind("x,y,label,selected\n", 0) == 0);
    CHECK(std::count(projection.begin(), projection.end(), '\n') == 51); // header + n rows

    std::string bound_json = read_file((dir / "bound.json").string());
    CHECK(bound_json.find("source_common_risk") != std::string::npos);
    CHECK(bound_json.find("\"slack\"") != std::string::npos);

    // re-emission is byte-identical
    auto dir2 = std::filesystem::temp_directory_path() / "gflowda_report_test2";
    emit_report(results, c, dir2.string());
    CHECK(read_file((dir / "results.csv").string()) == read_file((dir2 / "results.csv").string()));
    CHECK(read_file((dir / "curves.csv").string()) == read_file((dir2 / "curves.csv").string()));
    CHECK(read_file((dir / "projection.csv").string()) == read_file((dir2 / "projection.csv").string()));
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
}

TEST_CASE("paired seeds share the realized scenario across strategies") {
    ExperimentConfig random_cfg = quick_config(Strategy::random_pick);
    ExperimentConfig entropy_cfg = quick_config(Strategy::entropy);
    RunContext a = prepare_run(random_cfg, 11);
    RunContext b = prepare_run(entropy_cfg, 11);
    REQUIRE(a.target.size() == b.target.size());
    for (std::size_t i = 0; i < a.target.size(); ++i)
        CHECK(a.target.examples[i].features == b.target.examples[i].features);
    CHECK(a.pool_indices == b.pool_indices);
    CHECK(a.eval_indices == b.eval_indices);
}

TEST_CASE("run result json round trip") {
    ExperimentConfig c = quick_config(Strategy::random_pick);
    RunResult r = run_baseline(c, 3);
    RunResult back = RunResult::from_json(r.to_json());
    CHECK(back.strategy == r.strategy);
    CHECK(back.seed == r.seed);
    CHECK(back.avg_class_accuracy == r.avg_class_accuracy);
    CHECK(back.jsd_selected_vs_target == r.jsd_selected_vs_target);
    CHECK(back.selected_indices == r.selected_indices);
    CHECK(back.bound.bound == r.bound.bound);
}

TEST_CASE("fine-tuning transfers without degrading the reward") {
    // Reward differences between frozen and fine-tuned policies sit inside
    // the clone-evaluation noise at this scale, so the assertion is a
    // no-degradation bound rather than a strict improvement.
    ExperimentConfig pretrain = quick_config(Strategy::gflowda);
    pretrain.train.episodes_max = 10;
    RunResult trained = run_gflowda(pretrain, 7);
    auto dir = std::filesystem::temp_directory_path() / "gflowda_transfer_cmp";
    std::filesystem::create_directories(dir);
    std::string ck = (dir / "policy.json").string();
    {
        std::ofstream out(ck);
        out << trained.policy_checkpoint;
    }

    ExperimentConfig shifted = quick_config(Strategy::gflowda);
    auto spec = *shifted.scenario; // double the label-distribution gap
    spec.target_priors.probs.clear();
    spec.target_priors.probs[0] = 0.08;
    spec.target_priors.probs[1] = 0.12;
    spec.target_priors.probs[3] = 0.80;
    shifted.scenario = spec;
    shifted.transfer_fine_tune_episodes = 12;

    double frozen_sum = 0.0, tuned_sum = 0.0;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        RunResult frozen = transfer_policy(ck, shifted, seed, false);
        RunResult tuned = transfer_policy(ck, shifted, seed, true);
        CHECK(frozen.episode_log.empty());
        CHECK(tuned.episode_log.size() == 12);
        frozen_sum += frozen.final_reward;
        tuned_sum += tuned.final_reward;
    }
    CHECK(tuned_sum / 3.0 >= frozen_sum / 3.0 - 0.1);
    std::filesystem::remove_all(dir);
}

TEST_SUITE_END();
