#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gflowda/flow.hpp"
#include "gflowda/guan.hpp"
#include "gflowda/reward.hpp"
#include "gflowda/scenario.hpp"
#include "gflowda/theory.hpp"

namespace gflowda {

enum class Strategy { gflowda, random_pick, entropy };

Strategy strategy_from_string(const std::string& s);
std::string to_string(Strategy s);

struct ExperimentConfig {
    // either an inline scenario spec or a pair of domain CSV paths
    std::optional<ScenarioSpec> scenario;
    std::string source_csv, target_csv;

    double budget_fraction = 0.05;
    Strategy strategy = Strategy::gflowda;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "out";

    double eval_split_fraction = 0.2;
    int guan_epochs_per_reward = 30;
    int guan_initial_epochs = 120;
    int guan_final_epochs = 300;
    int final_candidates = 32; // terminal sets sampled from the trained policy
    int flow_hidden = 8;
    int transfer_fine_tune_episodes = 30;

    TrainConfig train;
    RewardConfig reward;
    WeightConfig weights;
    GuanConfig guan;

    void validate() const;
    std::string to_json() const;
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig load(const std::string& path);
};

struct RunResult {
    std::string strategy;
    std::uint64_t seed = 0;
    double avg_class_accuracy = 0.0;
    double jsd_selected_vs_target = 0.0;
    double final_reward = 0.0;
    std::vector<int> selected_indices; // into the target domain
    std::vector<int> selected_labels;
    std::vector<EpisodeLogEntry> episode_log;
    BoundReport bound; // estimated from final-model predictions
    double wall_clock_seconds = 0.0; // excluded from determinism comparisons
    std::string policy_checkpoint;   // flow params JSON; empty for baselines
    std::string guan_checkpoint;     // final adaptation model JSON
    std::vector<GuanEpochMetrics> final_model_metrics;

    std::string to_json() const;
    static RunResult from_json(const std::string& text);
};

// Shared per-seed environment: realized domains, eval split, initial model.
struct RunContext {
    Domain source;
    Domain target;
    std::vector<int> pool_indices; // selection pool (target minus eval split)
    std::vector<int> eval_indices; // held-out labeled evaluation split
    GuanModel initial_model;
    int budget = 0;
};

RunContext prepare_run(const ExperimentConfig& config, std::uint64_t seed);

RunResult run_gflowda(const ExperimentConfig& config, std::uint64_t seed);
RunResult run_baseline(const ExperimentConfig& config, std::uint64_t seed);

// Dispatches on config.strategy.
RunResult run_strategy(const ExperimentConfig& config, std::uint64_t seed);

// Runs run_gflowda with a pre-trained policy, frozen or fine-tuned.
RunResult transfer_policy(const std::string& checkpoint_path, const ExperimentConfig& config,
                          std::uint64_t seed, bool fine_tune);

// results.csv, curves.csv, bound.json, projection.csv (2-D PCA of target
// features), timings.csv. Deterministic bytes except timings.csv.
void emit_report(const std::vector<RunResult>& results, const ExperimentConfig& config,
                 const std::string& out_dir);

// rows of (x, y) from a 2-component PCA of the feature matrix
std::vector<std::pair<double, double>> pca_2d(const FeatureMatrix& features);

} // namespace gflowda
