#include "gflowda/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gflowda {

using nlohmann::json;

Strategy strategy_from_string(const std::string& s) {
    if (s == "gflowda") return Strategy::gflowda;
    if (s == "random") return Strategy::random_pick;
    if (s == "entropy") return Strategy::entropy;
    throw std::invalid_argument("unknown strategy: " + s);
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::gflowda: return "gflowda";
        case Strategy::random_pick: return "random";
        case Strategy::entropy: return "entropy";
    }
    return "gflowda";
}

void ExperimentConfig::validate() const {
    if (!(budget_fraction > 0.0) || budget_fraction > 1.0)
        throw std::invalid_argument("budget_fraction must be in (0, 1]");
    if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
    if (!scenario && (source_csv.empty() || target_csv.empty()))
        throw std::invalid_argument("config needs either a scenario spec or both domain CSV paths");
    if (eval_split_fraction < 0.0 || eval_split_fraction >= 1.0)
        throw std::invalid_argument("eval_split_fraction must be in [0, 1)");
    if (guan_epochs_per_reward <= 0 || guan_initial_epochs < 0 || guan_final_epochs <= 0)
        throw std::invalid_argument("guan epoch counts must be positive");
    if (final_candidates <= 0) throw std::invalid_argument("final_candidates must be positive");
    train.validate();
    reward.validate();
    weights.validate();
}

std::string ExperimentConfig::to_json() const {
    json j;
    if (scenario) j["scenario"] = json::parse(scenario->to_json());
    if (!source_csv.empty()) j["source_csv"] = source_csv;
    if (!target_csv.empty()) j["target_csv"] = target_csv;
    j["budget_fraction"] = budget_fraction;
    j["strategy"] = to_string(strategy);
    j["seeds"] = seeds;
    j["output_dir"] = output_dir;
    j["eval_split_fraction"] = eval_split_fraction;
    j["guan_epochs_per_reward"] = guan_epochs_per_reward;
    j["guan_initial_epochs"] = guan_initial_epochs;
    j["guan_final_epochs"] = guan_final_epochs;
    j["final_candidates"] = final_candidates;
    j["flow_hidden"] = flow_hidden;
    j["transfer_fine_tune_episodes"] = transfer_fine_tune_episodes;
    j["train"] = {{"episodes_max", train.episodes_max},
                  {"trajectory_buffer", train.trajectory_buffer},
                  {"epsilon", train.epsilon},
                  {"learning_rate", train.learning_rate},
                  {"plateau_stop", train.plateau_stop},
                  {"plateau_window", train.plateau_window},
                  {"plateau_tol", train.plateau_tol}};
    if (reward.kernel_bandwidths.empty())
        j["reward"]["kernel_bandwidths"] = "median";
    else
        j["reward"]["kernel_bandwidths"] = reward.kernel_bandwidths;
    j["reward"]["accuracy_weight"] = reward.accuracy_weight;
    j["reward"]["mmd_weight"] = reward.mmd_weight;
    j["reward"]["reward_floor"] = reward.reward_floor;
    j["weights"] = {{"lambda", weights.lambda}, {"ratio_clip", weights.ratio_clip}};
    j["guan"] = {{"feature_dim", guan.feature_dim},
                 {"extractor_hidden", guan.extractor_hidden},
                 {"discriminator_hidden", guan.discriminator_hidden},
                 {"optimizer", to_string(guan.optimizer)},
                 {"learning_rate", guan.learning_rate},
                 {"minibatch", guan.minibatch}};
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ExperimentConfig c;
    if (j.contains("scenario")) c.scenario = ScenarioSpec::from_json(j["scenario"].dump());
    c.source_csv = j.value("source_csv", std::string{});
    c.target_csv = j.value("target_csv", std::string{});
    c.budget_fraction = j.value("budget_fraction", 0.05);
    c.strategy = strategy_from_string(j.value("strategy", std::string{"gflowda"}));
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    c.output_dir = j.value("output_dir", std::string{"out"});
    c.eval_split_fraction = j.value("eval_split_fraction", 0.2);
    c.guan_epochs_per_reward = j.value("guan_epochs_per_reward", 30);
    c.guan_initial_epochs = j.value("guan_initial_epochs", 120);
    c.guan_final_epochs = j.value("guan_final_epochs", 300);
    c.final_candidates = j.value("final_candidates", 32);
    c.flow_hidden = j.value("flow_hidden", 8);
    c.transfer_fine_tune_episodes = j.value("transfer_fine_tune_episodes", 30);
    if (j.contains("train")) {
        const json& t = j["train"];
        c.train.episodes_max = t.value("episodes_max", 2000);
        c.train.trajectory_buffer = t.value("trajectory_buffer", 5);
        c.train.epsilon = t.value("epsilon", 1e-8);
        c.train.learning_rate = t.value("learning_rate", 0.001);
        c.train.plateau_stop = t.value("plateau_stop", true);
        c.train.plateau_window = t.value("plateau_window", 50);
        c.train.plateau_tol = t.value("plateau_tol", 1e-4);
    }
    if (j.contains("reward")) {
        const json& r = j["reward"];
        if (r.contains("kernel_bandwidths") && r["kernel_bandwidths"].is_array())
            c.reward.kernel_bandwidths = r["kernel_bandwidths"].get<std::vector<double>>();
        c.reward.accuracy_weight = r.value("accuracy_weight", 1.0);
        c.reward.mmd_weight = r.value("mmd_weight", 1.0);
        c.reward.reward_floor = r.value("reward_floor", 1e-6);
    }
    if (j.contains("weights")) {
        c.weights.lambda = j["weights"].value("lambda", 1.0);
        c.weights.ratio_clip = j["weights"].value("ratio_clip", 10.0);
    }
    if (j.contains("guan")) {
        const json& g = j["guan"];
        c.guan.feature_dim = g.value("feature_dim", 8);
        if (g.contains("extractor_hidden")) c.guan.extractor_hidden = g["extractor_hidden"].get<std::vector<int>>();
        if (g.contains("discriminator_hidden"))
            c.guan.discriminator_hidden = g["discriminator_hidden"].get<std::vector<int>>();
        c.guan.optimizer = optimizer_kind_from_string(g.value("optimizer", std::string{"adam"}));
        c.guan.learning_rate = g.value("learning_rate", 0.003);
        c.guan.minibatch = g.value("minibatch", 0);
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

std::string RunResult::to_json() const {
    json j;
    j["strategy"] = strategy;
    j["seed"] = seed;
    j["avg_class_accuracy"] = avg_class_accuracy;
    j["jsd_selected_vs_target"] = jsd_selected_vs_target;
    j["final_reward"] = final_reward;
    j["selected_indices"] = selected_indices;
    j["selected_labels"] = selected_labels;
    json log = json::array();
    for (const auto& e : episode_log) log.push_back({{"episode", e.episode}, {"loss", e.loss}, {"reward", e.mean_reward}});
    j["episode_log"] = log;
    j["bound"] = json::parse(bound.to_json(true));
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["policy_checkpoint"] = policy_checkpoint;
    j["guan_checkpoint"] = guan_checkpoint;
    json fm = json::array();
    for (const auto& m : final_model_metrics)
        fm.push_back({{"epoch", m.epoch},
                      {"adv_source", m.adv_source},
                      {"adv_selected", m.adv_selected},
                      {"classification", m.classification},
                      {"source_accuracy", m.source_accuracy},
                      {"target_accuracy", m.target_accuracy}});
    j["final_model_metrics"] = fm;
    return j.dump();
}

RunResult RunResult::from_json(const std::string& text) {
    json j = json::parse(text);
    RunResult r;
    r.strategy = j.at("strategy").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.avg_class_accuracy = j.at("avg_class_accuracy").get<double>();
    r.jsd_selected_vs_target = j.at("jsd_selected_vs_target").get<double>();
    r.final_reward = j.at("final_reward").get<double>();
    r.selected_indices = j.at("selected_indices").get<std::vector<int>>();
    r.selected_labels = j.at("selected_labels").get<std::vector<int>>();
    for (const auto& e : j.at("episode_log"))
        r.episode_log.push_back({e.at("episode").get<int>(), e.at("loss").get<double>(), e.at("reward").get<double>()});
    const json& b = j.at("bound");
    r.bound.source_common_risk = b["terms"]["source_common_risk"].get<double>();
    r.bound.selected_risk = b["terms"]["selected_risk"].get<double>();
    r.bound.delta_source_target = b["terms"]["delta_source_target"].get<double>();
    r.bound.delta_selected_target = b["terms"]["delta_selected_target"].get<double>();
    r.bound.target_private_term = b["terms"]["target_private_term"].get<double>();
    r.bound.l1_source_target = b["factors"]["l1_source_target"].get<double>();
    r.bound.ber_source_common = b["factors"]["ber_source_common"].get<double>();
    r.bound.ceg_source_target = b["factors"]["ceg_source_target"].get<double>();
    r.bound.l1_selected_target = b["factors"]["l1_selected_target"].get<double>();
    r.bound.ber_selected = b["factors"]["ber_selected"].get<double>();
    r.bound.ceg_selected_target = b["factors"]["ceg_selected_target"].get<double>();
    r.bound.bound = b["bound"].get<double>();
    r.bound.target_risk = b["target_risk"].get<double>();
    r.bound.slack = b["slack"].get<double>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    r.policy_checkpoint = j.at("policy_checkpoint").get<std::string>();
    r.guan_checkpoint = j.value("guan_checkpoint", std::string{});
    if (j.contains("final_model_metrics")) {
        for (const auto& m : j["final_model_metrics"]) {
            GuanEpochMetrics em;
            em.epoch = m.at("epoch").get<int>();
            em.adv_source = m.at("adv_source").get<double>();
            em.adv_selected = m.at("adv_selected").get<double>();
            em.classification = m.at("classification").get<double>();
            em.source_accuracy = m.at("source_accuracy").get<double>();
            em.target_accuracy = m.at("target_accuracy").get<double>();
            r.final_model_metrics.push_back(em);
        }
    }
    return r;
}

namespace {

std::vector<int> all_indices(std::size_t n) {
    std::vector<int> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<int>(i);
    return v;
}

Domain make_selected_domain(const Domain& target, const std::vector<std::pair<int, int>>& picks) {
    Domain d;
    d.role = DomainRole::selected;
    for (const auto& [idx, label] : picks) {
        Example ex;
        ex.features = target.examples[idx].features;
        ex.label = label;
        d.examples.push_back(std::move(ex));
        d.label_space.insert(label);
    }
    return d;
}

struct EvalData {
    FeatureMatrix features;
    std::vector<int> truth;
};

EvalData gather_eval(const Domain& target, const std::vector<int>& eval_indices) {
    EvalData e;
    for (int idx : eval_indices) {
        e.features.push_back(target.examples[idx].features);
        e.truth.push_back(target.oracle_label(idx));
    }
    return e;
}

double eval_accuracy(const GuanModel& model, const EvalData& eval) {
    std::vector<int> preds;
    preds.reserve(eval.features.size());
    for (const auto& x : eval.features) preds.push_back(predict(model, x).label);
    return average_class_accuracy(preds, eval.truth);
}

// reward of a selected set under a freshly trained model clone
struct RewardOutcome {
    double reward = 0.0;
    GuanModel model;
};

RewardOutcome evaluate_selection(const ExperimentConfig& config, const RunContext& ctx,
                                 const std::vector<std::pair<int, int>>& picks, int epochs,
                                 const EvalData& eval, Rng rng, bool collect_metrics,
                                 std::vector<GuanEpochMetrics>* metrics_out = nullptr) {
    RewardOutcome out;
    out.model = ctx.initial_model;
    Domain selected = make_selected_domain(ctx.target, picks);
    GuanTrainOptions opts;
    opts.epochs = epochs;
    opts.weights = config.weights;
    opts.collect_metrics = collect_metrics;
    auto metrics = train_guan(out.model, ctx.source, selected, ctx.target, opts, rng);
    if (metrics_out) *metrics_out = std::move(metrics);

    FeatureMatrix target_z, selected_z;
    for (const auto& ex : ctx.target.examples) target_z.push_back(out.model.extract(ex.features));
    for (const auto& ex : selected.examples) selected_z.push_back(out.model.extract(ex.features));
    std::vector<int> preds;
    preds.reserve(eval.features.size());
    for (const auto& x : eval.features) preds.push_back(predict(out.model, x).label);
    out.reward = terminal_reward(target_z, selected_z, preds, eval.truth, config.reward);
    return out;
}

BoundReport estimated_bound(const GuanModel& model, const Domain& source, const Domain& selected,
                            const Domain& target) {
    std::vector<int> s_truth, s_pred, l_truth, l_pred, t_truth, t_pred;
    for (const auto& ex : source.examples) {
        s_truth.push_back(*ex.label);
        s_pred.push_back(predict(model, ex.features).label);
    }
    for (const auto& ex : selected.examples) {
        l_truth.push_back(*ex.label);
        l_pred.push_back(predict(model, ex.features).label);
    }
    for (std::size_t i = 0; i < target.examples.size(); ++i) {
        t_truth.push_back(target.oracle_label(i));
        t_pred.push_back(predict(model, target.examples[i].features).label);
    }
    LabelSpaces spaces;
    std::set<int> source_space(s_truth.begin(), s_truth.end());
    std::set<int> target_space(t_truth.begin(), t_truth.end());
    for (int y : source_space)
        if (target_space.count(y)) spaces.common.insert(y);
    spaces.selected = std::set<int>(l_truth.begin(), l_truth.end());
    for (int y : target_space)
        if (!source_space.count(y)) spaces.target_private.insert(y);
    return target_risk_bound(estimate_joint(s_truth, s_pred), estimate_joint(l_truth, l_pred),
                          estimate_joint(t_truth, t_pred), spaces);
}

} // namespace

RunContext prepare_run(const ExperimentConfig& config, std::uint64_t seed) {
    config.validate();
    Rng root(seed);
    RunContext ctx;

    if (config.scenario) {
        ScenarioSpec spec = *config.scenario;
        spec.seed = root.substream("scenario").seed();
        auto [source, target] = generate_scenario(spec);
        ctx.source = std::move(source);
        ctx.target = std::move(target);
    } else {
        ctx.source = load_domain_csv(config.source_csv, DomainRole::source);
        ctx.target = load_domain_csv(config.target_csv, DomainRole::target);
    }

    std::size_t n = ctx.target.size();
    ctx.budget = static_cast<int>(std::ceil(config.budget_fraction * static_cast<double>(n)));

    std::vector<int> order = all_indices(n);
    Rng split_rng = root.substream("eval-split");
    split_rng.shuffle(order);
    std::size_t eval_count = static_cast<std::size_t>(std::floor(config.eval_split_fraction * n));
    ctx.eval_indices.assign(order.begin(), order.begin() + eval_count);
    ctx.pool_indices.assign(order.begin() + eval_count, order.end());
    std::sort(ctx.eval_indices.begin(), ctx.eval_indices.end());
    std::sort(ctx.pool_indices.begin(), ctx.pool_indices.end());
    if (ctx.budget > static_cast<int>(ctx.pool_indices.size())) {
        // budgets beyond the pool must still be satisfiable (e.g. 100%)
        ctx.pool_indices = all_indices(n);
        if (ctx.budget > static_cast<int>(n))
            throw std::invalid_argument("budget exceeds the number of target samples");
    }
    if (ctx.eval_indices.empty()) ctx.eval_indices = all_indices(n);

    std::set<int> source_labels;
    for (const auto& ex : ctx.source.examples) {
        if (!ex.label) throw std::invalid_argument("source domain must be fully labeled");
        source_labels.insert(*ex.label);
    }
    Rng guan_rng = root.substream("guan-init");
    ctx.initial_model = GuanModel::make(ctx.source.feature_dim(), source_labels, config.guan, guan_rng);

    GuanTrainOptions opts;
    opts.epochs = config.guan_initial_epochs;
    opts.weights = config.weights;
    Domain empty_selected;
    empty_selected.role = DomainRole::selected;
    Rng train_rng = root.substream("guan-init/train");
    train_guan(ctx.initial_model, ctx.source, empty_selected, ctx.target, opts, train_rng);
    return ctx;
}

namespace {

RunResult finalize_run(const ExperimentConfig& config, const RunContext& ctx,
                       const std::vector<std::pair<int, int>>& picks, const EvalData& eval,
                       Rng final_rng, RunResult result) {
    std::vector<GuanEpochMetrics> metrics;
    RewardOutcome final_outcome =
        evaluate_selection(config, ctx, picks, config.guan_final_epochs, eval, final_rng, true, &metrics);
    result.final_model_metrics = std::move(metrics);
    result.guan_checkpoint = final_outcome.model.to_json();

    Domain selected = make_selected_domain(ctx.target, picks);
    result.final_reward = final_outcome.reward;
    result.avg_class_accuracy = eval_accuracy(final_outcome.model, eval);
    result.jsd_selected_vs_target =
        jsd(empirical_label_distribution(selected), empirical_label_distribution(ctx.target));
    for (const auto& [idx, label] : picks) {
        result.selected_indices.push_back(idx);
        result.selected_labels.push_back(label);
    }
    result.bound = estimated_bound(final_outcome.model, ctx.source, selected, ctx.target);
    return result;
}

RunResult run_gflowda_impl(const ExperimentConfig& config, std::uint64_t seed,
                           const FlowNetwork* preloaded, int episodes_override) {
    auto t0 = std::chrono::steady_clock::now();
    Rng root(seed);
    RunContext ctx = prepare_run(config, seed);
    EvalData eval = gather_eval(ctx.target, ctx.eval_indices);

    // state features and predictions from the initial model, frozen for the run
    auto features = std::make_shared<FeatureMatrix>();
    std::vector<std::vector<double>> predictions;
    for (int idx : ctx.pool_indices) {
        features->push_back(ctx.initial_model.extract(ctx.target.examples[idx].features));
        predictions.push_back(ctx.initial_model.class_probs(ctx.target.examples[idx].features));
    }
    TrajectoryState init = init_state(features, predictions);

    const std::vector<int>& pool = ctx.pool_indices;
    LabelOracle oracle = [&ctx, &pool](int p) { return ctx.target.oracle_label(pool[p]); };

    long reward_calls = 0;
    RewardFn reward_fn = [&](const TrajectoryState& terminal) {
        std::vector<std::pair<int, int>> picks;
        for (const auto& [p, label] : terminal.selected) picks.emplace_back(pool[p], label);
        Rng rng = root.substream("reward/" + std::to_string(reward_calls++));
        return evaluate_selection(config, ctx, picks, config.guan_epochs_per_reward, eval, rng, false)
            .reward;
    };

    Rng flow_init = root.substream("policy-init");
    FlowNetwork net = preloaded ? *preloaded : FlowNetwork::make(config.flow_hidden, flow_init);

    TrainConfig train = config.train;
    train.budget = ctx.budget;
    if (episodes_override >= 0) train.episodes_max = episodes_override;

    RunResult result;
    result.strategy = to_string(Strategy::gflowda);
    result.seed = seed;

    Rng rollout = root.substream("rollout");
    if (train.episodes_max > 0) {
        TrainPolicyResult trained = train_policy(std::move(net), init, oracle, reward_fn, train, rollout);
        net = std::move(trained.network);
        result.episode_log = std::move(trained.log);
    }

    // extract the deployed selection: best of K sampled terminal sets
    Rng candidate_rng = root.substream("final-candidates");
    std::vector<std::pair<int, int>> best_picks;
    double best_reward = -1.0;
    for (int k = 0; k < config.final_candidates; ++k) {
        Trajectory traj = sample_trajectory(net, init, ctx.budget, oracle, candidate_rng);
        std::vector<std::pair<int, int>> picks;
        for (const auto& [p, label] : traj.terminal().selected) picks.emplace_back(pool[p], label);
        double r = reward_fn(traj.terminal());
        if (r > best_reward) {
            best_reward = r;
            best_picks = std::move(picks);
        }
    }

    result.policy_checkpoint = net.to_json();
    result = finalize_run(config, ctx, best_picks, eval, root.substream("guan-final"), std::move(result));
    result.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

} // namespace

RunResult run_gflowda(const ExperimentConfig& config, std::uint64_t seed) {
    return run_gflowda_impl(config, seed, nullptr, -1);
}

RunResult run_baseline(const ExperimentConfig& config, std::uint64_t seed) {
    auto t0 = std::chrono::steady_clock::now();
    Rng root(seed);
    RunContext ctx = prepare_run(config, seed);
    EvalData eval = gather_eval(ctx.target, ctx.eval_indices);

    std::vector<int> chosen;
    if (config.strategy == Strategy::random_pick) {
        std::vector<int> pool = ctx.pool_indices;
        Rng pick_rng = root.substream("rollout");
        pick_rng.shuffle(pool);
        chosen.assign(pool.begin(), pool.begin() + ctx.budget);
    } else if (config.strategy == Strategy::entropy) {
        // top-budget by prediction entropy; ties broken by ascending index
        std::vector<std::pair<double, int>> scored;
        for (int idx : ctx.pool_indices) {
            double h = predict(ctx.initial_model, ctx.target.examples[idx].features).entropy;
            scored.emplace_back(-h, idx);
        }
        std::sort(scored.begin(), scored.end());
        for (int i = 0; i < ctx.budget; ++i) chosen.push_back(scored[i].second);
    } else {
        throw std::invalid_argument("run_baseline requires a random or entropy strategy");
    }

    std::vector<std::pair<int, int>> picks;
    for (int idx : chosen) picks.emplace_back(idx, ctx.target.oracle_label(idx));

    RunResult result;
    result.strategy = to_string(config.strategy);
    result.seed = seed;
    result = finalize_run(config, ctx, picks, eval, root.substream("guan-final"), std::move(result));
    result.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

RunResult run_strategy(const ExperimentConfig& config, std::uint64_t seed) {
    if (config.strategy == Strategy::gflowda) return run_gflowda(config, seed);
    return run_baseline(config, seed);
}

RunResult transfer_policy(const std::string& checkpoint_path, const ExperimentConfig& config,
                          std::uint64_t seed, bool fine_tune) {
    FlowNetwork net = FlowNetwork::load(checkpoint_path);
    int episodes = fine_tune ? config.transfer_fine_tune_episodes : 0;
    return run_gflowda_impl(config, seed, &net, episodes);
}

namespace {

std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// Jacobi eigenvalue iteration for small symmetric matrices
void jacobi_eigen(std::vector<std::vector<double>>& a, std::vector<std::vector<double>>& vecs) {
    std::size_t n = a.size();
    vecs.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) vecs[i][i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-18) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::fabs(a[p][q]) < 1e-15) continue;
                double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double vkp = vecs[k][p], vkq = vecs[k][q];
                    vecs[k][p] = c * vkp - s * vkq;
                    vecs[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
}

} // namespace

std::vector<std::pair<double, double>> pca_2d(const FeatureMatrix& features) {
    if (features.empty()) return {};
    std::size_t n = features.size();
    std::size_t d = features[0].size();
    std::vector<double> mean(d, 0.0);
    for (const auto& x : features)
        for (std::size_t k = 0; k < d; ++k) mean[k] += x[k] / static_cast<double>(n);
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (const auto& x : features)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                cov[i][j] += (x[i] - mean[i]) * (x[j] - mean[j]) / static_cast<double>(n);

    std::vector<std::vector<double>> vecs;
    jacobi_eigen(cov, vecs);
    // order components by eigenvalue (diagonal after rotation)
    std::vector<std::pair<double, std::size_t>> eigs;
    for (std::size_t i = 0; i < d; ++i) eigs.emplace_back(-cov[i][i], i);
    std::sort(eigs.begin(), eigs.end());

    auto component = [&](std::size_t rank) {
        std::vector<double> v(d, 0.0);
        if (rank < d) {
            std::size_t col = eigs[rank].second;
            for (std::size_t k = 0; k < d; ++k) v[k] = vecs[k][col];
            // deterministic sign: largest-magnitude entry positive
            std::size_t arg = 0;
            for (std::size_t k = 1; k < d; ++k)
                if (std::fabs(v[k]) > std::fabs(v[arg])) arg = k;
            if (v[arg] < 0.0)
                for (double& x : v) x = -x;
        }
        return v;
    };
    std::vector<double> c0 = component(0), c1 = component(1);

    std::vector<std::pair<double, double>> out;
    out.reserve(n);
    for (const auto& x : features) {
        double px = 0.0, py = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            px += (x[k] - mean[k]) * c0[k];
            py += (x[k] - mean[k]) * c1[k];
        }
        out.emplace_back(px, py);
    }
    return out;
}

void emit_report(const std::vector<RunResult>& results, const ExperimentConfig& config,
                 const std::string& out_dir) {
    if (results.empty()) throw std::invalid_argument("emit_report: no results");
    std::filesystem::create_directories(out_dir);

    {
        std::ofstream out(out_dir + "/results.csv", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write results.csv");
        out << "strategy,seed,accuracy,jsd,reward\n";
        for (const auto& r : results)
            out << r.strategy << "," << r.seed << "," << fmt9(r.avg_class_accuracy) << ","
                << fmt9(r.jsd_selected_vs_target) << "," << fmt9(r.final_reward) << "\n";
    }
    {
        std::ofstream out(out_dir + "/curves.csv", std::ios::binary);
        out << "strategy,seed,episode,loss,mean_reward\n";
        for (const auto& r : results)
            for (const auto& e : r.episode_log)
                out << r.strategy << "," << r.seed << "," << e.episode << "," << fmt9(e.loss) << ","
                    << fmt9(e.mean_reward) << "\n";
    }
    {
        json all = json::array();
        for (const auto& r : results) {
            json j = json::parse(r.bound.to_json(true));
            j["strategy"] = r.strategy;
            j["seed"] = r.seed;
            all.push_back(j);
        }
        std::ofstream out(out_dir + "/bound.json", std::ios::binary);
        out << all.dump(2) << "\n";
    }
    {
        std::ofstream out(out_dir + "/timings.csv", std::ios::binary);
        out << "strategy,seed,wall_clock_seconds\n";
        for (const auto& r : results) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.3f", r.wall_clock_seconds);
            out << r.strategy << "," << r.seed << "," << buf << "\n";
        }
    }

    for (const auto& r : results) {
        std::string tag = r.strategy + "_" + std::to_string(r.seed);
        if (!r.final_model_metrics.empty())
            write_guan_metrics_csv(r.final_model_metrics, out_dir + "/guan_metrics_" + tag + ".csv");
        if (!r.guan_checkpoint.empty()) {
            std::ofstream out(out_dir + "/guan_model_" + tag + ".json", std::ios::binary);
            out << r.guan_checkpoint << "\n";
        }
    }

    // projection of the first run's target features for external plotting
    {
        const RunResult& first = results.front();
        RunContext ctx = [&] {
            ExperimentConfig c = config;
            c.guan_initial_epochs = 0; // only the domains are needed here
            return prepare_run(c, first.seed);
        }();
        auto proj = pca_2d(ctx.target.feature_matrix());
        std::set<int> selected(first.selected_indices.begin(), first.selected_indices.end());
        std::ofstream out(out_dir + "/projection.csv", std::ios::binary);
        out << "x,y,label,selected\n";
        for (std::size_t i = 0; i < proj.size(); ++i) {
            out << fmt9(proj[i].first) << "," << fmt9(proj[i].second) << ","
                << ctx.target.oracle_label(i) << "," << (selected.count(static_cast<int>(i)) ? 1 : 0)
                << "\n";
        }
    }
}

} // namespace gflowda
