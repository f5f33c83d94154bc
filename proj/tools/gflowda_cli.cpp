// Command-line entry point: scenario generation, experiment runs, policy
// transfer, and the randomized verification subcommands.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gflowda/experiment.hpp"
#include "gflowda/selfcheck.hpp"

using namespace gflowda;

namespace {

int cmd_generate(const std::string& spec_path, const std::string& out_dir, long long seed_override) {
    ScenarioSpec spec = ScenarioSpec::load(spec_path);
    if (seed_override >= 0) spec.seed = static_cast<std::uint64_t>(seed_override);
    auto [source, target] = generate_scenario(spec);
    std::filesystem::create_directories(out_dir);
    save_domain_csv(source, out_dir + "/source.csv");
    save_domain_csv(target, out_dir + "/target.csv");
    spec.save(out_dir + "/scenario.json");
    std::cout << "wrote " << source.size() << " source and " << target.size() << " target samples to "
              << out_dir << "\n";
    return 0;
}

void write_results_json(const std::vector<RunResult>& results, const std::string& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : results) arr.push_back(nlohmann::json::parse(r.to_json()));
    std::ofstream out(path, std::ios::binary);
    out << arr.dump(2) << "\n";
}

std::vector<RunResult> read_results_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open results: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    std::vector<RunResult> results;
    for (const auto& j : nlohmann::json::parse(buf.str())) results.push_back(RunResult::from_json(j.dump()));
    return results;
}

int cmd_run(ExperimentConfig config, const std::string& out_dir) {
    std::vector<RunResult> results;
    for (std::uint64_t seed : config.seeds) {
        RunResult r = run_strategy(config, seed);
        std::cout << r.strategy << " seed=" << seed << " accuracy=" << r.avg_class_accuracy
                  << " jsd=" << r.jsd_selected_vs_target << " reward=" << r.final_reward << "\n";
        if (!r.policy_checkpoint.empty()) {
            std::ofstream ck(out_dir + "/policy_" + std::to_string(seed) + ".json", std::ios::binary);
            ck << r.policy_checkpoint << "\n";
        }
        results.push_back(std::move(r));
    }
    emit_report(results, config, out_dir);
    write_results_json(results, out_dir + "/results.json");
    std::cout << "report written to " << out_dir << "\n";
    return 0;
}

int cmd_transfer(const ExperimentConfig& config, const std::string& checkpoint, bool fine_tune,
                 const std::string& out_dir) {
    std::vector<RunResult> results;
    for (std::uint64_t seed : config.seeds) {
        RunResult r = transfer_policy(checkpoint, config, seed, fine_tune);
        r.strategy = fine_tune ? "gflowda-finetuned" : "gflowda-transfer";
        std::cout << r.strategy << " seed=" << seed << " accuracy=" << r.avg_class_accuracy
                  << " jsd=" << r.jsd_selected_vs_target << " reward=" << r.final_reward << "\n";
        results.push_back(std::move(r));
    }
    emit_report(results, config, out_dir);
    write_results_json(results, out_dir + "/results.json");
    return 0;
}

int cmd_bound_check(int trials, std::uint64_t seed) {
    BoundCheckResult result = run_bound_soundness_check(trials, seed);
    if (result.violations > 0) {
        std::cout << "FAIL " << result.violations << " violations; first: " << result.first_violation
                  << "\n";
        return 2;
    }
    std::cout << "PASS " << result.trials << " randomized scenarios, minimum slack "
              << result.min_slack << "\n";
    return 0;
}

int cmd_proportionality(int episodes, int samples, std::uint64_t seed, double tv_limit) {
    ProportionalityOptions options;
    options.episodes_max = episodes;
    options.samples = samples;
    options.instance_seed = seed;
    options.tv_limit = tv_limit;
    ProportionalityResult result = run_proportionality_check(options);
    std::cout << (result.tv_ok ? "PASS" : "FAIL") << " total variation " << result.total_variation
              << " after " << result.episodes_run << " episodes (limit " << tv_limit
              << ", a uniform policy would sit at " << result.uniform_total_variation << ")\n";
    std::cout << (result.conservation_ok ? "PASS" : "FAIL") << " worst conservation gap "
              << result.worst_conservation_gap << "\n";
    return result.tv_ok && result.conservation_ok ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GFlowDA: flow-network active selection for universal domain adaptation"};
    app.require_subcommand(1);

    std::string spec_path, config_path, out_dir, checkpoint, strategy_override, results_path;
    long long seed_override = -1;
    bool fine_tune = false;
    int trials = 1000, episodes = 2000, samples = 20000;
    double tv_limit = 0.05;

    auto* gen = app.add_subcommand("generate", "realize a scenario spec into domain CSVs");
    gen->add_option("--spec", spec_path, "scenario spec JSON")->required();
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--seed", seed_override, "override the spec seed");

    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("--config", config_path, "experiment config JSON")->required();
    run->add_option("--out", out_dir, "output directory (defaults to the config's)");
    run->add_option("--seed", seed_override, "replace the config's seed list with one seed");
    run->add_option("--strategy", strategy_override, "override the strategy (gflowda|random|entropy)");

    auto* transfer = app.add_subcommand("transfer", "run with a pre-trained policy checkpoint");
    transfer->add_option("--config", config_path, "experiment config JSON")->required();
    transfer->add_option("--checkpoint", checkpoint, "policy checkpoint JSON")->required();
    transfer->add_option("--out", out_dir, "output directory");
    transfer->add_option("--seed", seed_override, "replace the config's seed list with one seed");
    transfer->add_flag("--fine-tune", fine_tune, "fine-tune the loaded policy");

    auto* bound = app.add_subcommand("bound-check", "randomized risk-bound verification");
    bound->add_option("--trials", trials, "number of randomized scenarios");
    bound->add_option("--seed", seed_override, "rng seed");

    auto* prop = app.add_subcommand("proportionality-test", "enumerable-instance policy check");
    prop->add_option("--episodes", episodes, "training episode cap");
    prop->add_option("--samples", samples, "policy samples for the frequency estimate");
    prop->add_option("--seed", seed_override, "rng seed");
    prop->add_option("--tv-limit", tv_limit, "total-variation pass threshold");

    auto* report = app.add_subcommand("report", "re-emit CSV reports from stored results");
    report->add_option("--config", config_path, "experiment config JSON")->required();
    report->add_option("--results", results_path, "results.json from a previous run")->required();
    report->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_generate(spec_path, out_dir, seed_override);
        if (run->parsed()) {
            ExperimentConfig config = ExperimentConfig::load(config_path);
            if (seed_override >= 0) config.seeds = {static_cast<std::uint64_t>(seed_override)};
            if (!strategy_override.empty()) config.strategy = strategy_from_string(strategy_override);
            if (out_dir.empty()) out_dir = config.output_dir;
            std::filesystem::create_directories(out_dir);
            return cmd_run(config, out_dir);
        }
        if (transfer->parsed()) {
            ExperimentConfig config = ExperimentConfig::load(config_path);
            if (seed_override >= 0) config.seeds = {static_cast<std::uint64_t>(seed_override)};
            if (out_dir.empty()) out_dir = config.output_dir;
            std::filesystem::create_directories(out_dir);
            return cmd_transfer(config, checkpoint, fine_tune, out_dir);
        }
        if (bound->parsed())
            return cmd_bound_check(trials, seed_override >= 0 ? seed_override : 20240717ull);
        if (prop->parsed())
            return cmd_proportionality(episodes, samples, seed_override >= 0 ? seed_override : 4ull, tv_limit);
        if (report->parsed()) {
            ExperimentConfig config = ExperimentConfig::load(config_path);
            emit_report(read_results_json(results_path), config, out_dir);
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
