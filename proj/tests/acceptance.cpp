// Acceptance suite: end-to-end checks of the statistical machinery, the
// incremental state engine, the risk bound, gradient exactness, and the
// directional experiment. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <vector>

#include "gflowda/experiment.hpp"
#include "gflowda/selfcheck.hpp"

using namespace gflowda;

namespace {

int g_failures = 0;

void criterion(int number, const std::string& name, double limit_seconds,
               const std::function<bool(std::string&)>& body) {
    auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool in_time = limit_seconds <= 0.0 || seconds <= limit_seconds;
    if (!in_time) detail += (detail.empty() ? "" : "; ") + std::string("over time limit");
    bool pass = ok && in_time;
    if (!pass) ++g_failures;
    std::printf("[%s] criterion %d: %s (%.1fs%s%s)\n", pass ? "PASS" : "FAIL", number, name.c_str(),
                seconds, detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
}

ProportionalityResult g_proportionality;

ExperimentConfig directional_config() {
    ExperimentConfig c;
    ScenarioSpec spec;
    spec.feature_dim = 2;
    spec.common_labels = {0, 1, 2, 3};
    spec.source_private = {4, 5};
    spec.target_private = {6, 7};
    spec.source_count = 400;
    spec.target_count = 400;
    double angle = 0.0;
    for (int label = 0; label < 8; ++label) {
        std::vector<double> mean{4.0 * std::cos(angle), 4.0 * std::sin(angle)};
        angle += M_PI / 4.0;
        if (label <= 5) {
            spec.class_means[{"source", label}] = mean;
            spec.class_scales[{"source", label}] = 0.8;
        }
        if (label <= 3 || label >= 6) {
            spec.class_means[{"target", label}] = {mean[0] + 0.6, mean[1]};
            spec.class_scales[{"target", label}] = 0.8;
        }
    }
    // skewed priors realize the label-distribution shift
    spec.source_priors.probs = {{0, 0.30}, {1, 0.25}, {2, 0.15}, {3, 0.10}, {4, 0.12}, {5, 0.08}};
    spec.target_priors.probs = {{0, 0.10}, {1, 0.15}, {2, 0.25}, {3, 0.20}, {6, 0.18}, {7, 0.12}};
    c.scenario = spec;
    c.budget_fraction = 0.05;
    c.eval_split_fraction = 0.2;
    c.guan.feature_dim = 8;
    c.guan.extractor_hidden = {16};
    c.guan.learning_rate = 0.003;
    c.guan_initial_epochs = 80;
    c.guan_epochs_per_reward = 15;
    c.guan_final_epochs = 150;
    c.final_candidates = 16;
    c.train.episodes_max = 60;
    c.train.trajectory_buffer = 5;
    c.train.learning_rate = 0.001;
    c.train.plateau_stop = true;
    return c;
}

double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

} // namespace

int main() {
    std::printf("acceptance suite\n");

    criterion(1, "proportional terminal-set sampling on the enumerable instance", 120.0,
              [](std::string& detail) {
                  ProportionalityOptions options; // 2000 episodes, buffer 5, lr 0.001, 20000 samples
                  g_proportionality = run_proportionality_check(options);
                  char buf[160];
                  std::snprintf(buf, sizeof(buf),
                                "tv=%.4f over 15 sets after %d episodes (uniform policy: %.4f)",
                                g_proportionality.total_variation, g_proportionality.episodes_run,
                                g_proportionality.uniform_total_variation);
                  detail = buf;
                  return g_proportionality.tv_ok;
              });

    criterion(2, "flow conservation at visited internal states", 30.0, [](std::string& detail) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "max |log in - log out| = %.4f",
                      g_proportionality.worst_conservation_gap);
        detail = buf;
        return g_proportionality.conservation_ok;
    });

    criterion(3, "incremental state updates match the recomputation oracle", 60.0,
              [](std::string& detail) {
                  Rng rng(777);
                  int checked = 0;
                  for (int trial = 0; trial < 50; ++trial) {
                      int n = 30 + static_cast<int>(rng.below(171)); // up to 200
                      int budget = 3 + static_cast<int>(rng.below(18)); // up to 20
                      int classes = 2 + static_cast<int>(rng.below(5));
                      auto features = std::make_shared<FeatureMatrix>();
                      std::vector<std::vector<double>> predictions;
                      std::vector<int> labels;
                      for (int i = 0; i < n; ++i) {
                          std::vector<double> x(6);
                          for (double& v : x) v = rng.gaussian();
                          features->push_back(std::move(x));
                          labels.push_back(static_cast<int>(rng.below(classes)));
                          std::vector<double> p(classes);
                          double total = 0.0;
                          for (double& v : p) {
                              v = 0.05 + rng.uniform();
                              total += v;
                          }
                          for (double& v : p) v /= total;
                          predictions.push_back(std::move(p));
                      }
                      LabelOracle oracle = [&labels](int i) { return labels[i]; };
                      TrajectoryState ts = init_state(features, predictions);
                      std::vector<std::pair<int, int>> picked;
                      for (int b = 0; b < budget; ++b) {
                          auto candidates = candidate_actions(ts);
                          int action = candidates[rng.below(candidates.size())];
                          ts = apply_action(ts, action, oracle);
                          picked.emplace_back(action, labels[action]);

                          StateMatrix expected = compute_state_oracle(*features, predictions, picked);
                          for (int i = 0; i < n; ++i) {
                              const auto& got = ts.state.rows[i];
                              const auto& want = expected.rows[i];
                              if (std::fabs(got.inst_sim - want.inst_sim) > 1e-6 ||
                                  std::fabs(got.class_sim - want.class_sim) > 1e-6 ||
                                  std::fabs(got.entropy - want.entropy) > 1e-6 ||
                                  got.labeled != want.labeled)
                                  return false;
                          }
                          for (const auto& [cls, proto] : ts.prototypes) {
                              std::vector<double> mean(6, 0.0);
                              int count = 0;
                              for (const auto& [idx, lbl] : picked)
                                  if (lbl == cls) {
                                      ++count;
                                      for (int k = 0; k < 6; ++k) mean[k] += (*features)[idx][k];
                                  }
                              if (count != proto.count) return false;
                              for (int k = 0; k < 6; ++k)
                                  if (std::fabs(proto.mean[k] - mean[k] / count) > 1e-6) return false;
                          }

                          auto parents = enumerate_parents(ts);
                          double labeled_total = 0.0;
                          for (const auto& row : ts.state.rows) labeled_total += row.labeled;
                          if (parents.size() != static_cast<std::size_t>(labeled_total)) return false;
                          for (const auto& [parent, removed] : parents) {
                              StateMatrix reduced =
                                  compute_state_oracle(*features, predictions, parent.selected);
                              for (int i = 0; i < n; ++i) {
                                  const auto& got = parent.state.rows[i];
                                  const auto& want = reduced.rows[i];
                                  if (std::fabs(got.inst_sim - want.inst_sim) > 1e-6 ||
                                      std::fabs(got.class_sim - want.class_sim) > 1e-6 ||
                                      got.labeled != want.labeled)
                                      return false;
                              }
                          }
                          ++checked;
                      }
                  }
                  detail = std::to_string(checked) + " steps verified";
                  return true;
              });

    criterion(4, "risk bound holds on 1000 randomized exact scenarios", 30.0, [](std::string& detail) {
        BoundCheckResult result = run_bound_soundness_check(1000, 20240604);
        char buf[96];
        std::snprintf(buf, sizeof(buf), "min slack %.3g over %d scenarios", result.min_slack,
                      result.trials);
        detail = buf;
        if (result.violations > 0) detail += "; " + result.first_violation;
        return result.violations == 0;
    });

    criterion(5, "analytic gradients match finite differences", 120.0, [](std::string& detail) {
        auto max_err = [](Parameters& params, const Parameters& analytic,
                          const std::function<double()>& fn) {
            double worst = 0.0;
            for (std::size_t i = 0; i < params.count(); ++i) {
                double orig = params.at_flat(i);
                params.at_flat(i) = orig + 1e-4;
                double up = fn();
                params.at_flat(i) = orig - 1e-4;
                double down = fn();
                params.at_flat(i) = orig;
                double numeric = (up - down) / 2e-4;
                double a = analytic.at_flat(i);
                double scale = std::max(std::fabs(a), std::fabs(numeric));
                worst = std::max(worst, scale > 1e-6 ? std::fabs(a - numeric) / scale
                                                     : std::fabs(a - numeric));
            }
            return worst;
        };
        double worst = 0.0;

        // flow-matching loss
        for (int trial = 0; trial < 10; ++trial) {
            Rng rng(900 + trial);
            auto features = std::make_shared<FeatureMatrix>();
            std::vector<std::vector<double>> predictions;
            for (int i = 0; i < 5; ++i) {
                features->push_back({rng.gaussian(), rng.gaussian()});
                double a = 0.2 + 0.6 * rng.uniform();
                predictions.push_back({a, 1.0 - a});
            }
            LabelOracle oracle = [](int i) { return i % 2; };
            TrajectoryState init = init_state(features, predictions);
            Rng net_rng(950 + trial);
            FlowNetwork fn = FlowNetwork::make(6, net_rng);
            fn.params.scale(0.5);
            Rng sampler(970 + trial);
            Trajectory traj = sample_trajectory(fn, init, 3, oracle, sampler);
            double reward = 0.7 + 0.1 * trial;
            FlowMatchingLoss loss = flow_matching_loss(fn, traj, reward, 1e-8);
            worst = std::max(worst, max_err(fn.params, loss.grads, [&] {
                return flow_matching_loss(fn, traj, reward, 1e-8).value;
            }));
        }

        // adversarial and classification losses
        for (int trial = 0; trial < 10; ++trial) {
            Rng rng(1000 + trial);
            GuanConfig config;
            config.feature_dim = 4;
            config.extractor_hidden = {5};
            Rng model_rng(1100 + trial);
            GuanModel model = GuanModel::make(3, {0, 1}, config, model_rng);
            model.ensure_label(4);
            auto batch = [&](int count, double shift) {
                FeatureMatrix m;
                for (int i = 0; i < count; ++i)
                    m.push_back({shift + rng.gaussian(), rng.gaussian(), rng.gaussian()});
                return m;
            };
            FeatureMatrix src = batch(3, 0.0), tgt = batch(4, 0.4), sel = batch(2, -0.4);
            std::vector<double> ws{0.5, 1.2, 1.0}, wt{1.0, 0.4, 0.7, 0.2}, wtp{0.3, 0.9, 0.5, 0.1};
            std::vector<int> src_labels{0, 1, 0}, sel_labels{4, 1};

            GuanLoss advs = adversarial_loss_source(src, ws, tgt, wt, model);
            auto advs_fn = [&] { return adversarial_loss_source(src, ws, tgt, wt, model).value; };
            worst = std::max(worst, max_err(model.d, advs.d_grad, advs_fn));
            worst = std::max(worst, max_err(model.g, advs.g_grad, advs_fn));

            GuanLoss advl = adversarial_loss_selected(sel, tgt, wtp, model);
            auto advl_fn = [&] { return adversarial_loss_selected(sel, tgt, wtp, model).value; };
            worst = std::max(worst, max_err(model.d, advl.d_grad, advl_fn));
            worst = std::max(worst, max_err(model.g, advl.g_grad, advl_fn));

            GuanLoss cls = classification_loss(src, src_labels, sel, sel_labels, model);
            auto cls_fn = [&] {
                return classification_loss(src, src_labels, sel, sel_labels, model).value;
            };
            worst = std::max(worst, max_err(model.h, cls.h_grad, cls_fn));
            worst = std::max(worst, max_err(model.g, cls.g_grad, cls_fn));
        }
        char buf[64];
        std::snprintf(buf, sizeof(buf), "max relative error %.3g", worst);
        detail = buf;
        return worst <= 1e-4;
    });

    criterion(6, "mmd estimator and reward positivity properties", 60.0, [](std::string& detail) {
        Rng rng(606);
        RewardConfig config;
        auto random_features = [&rng](int n, int dim, double shift) {
            FeatureMatrix m;
            for (int i = 0; i < n; ++i) {
                std::vector<double> x(dim);
                for (double& v : x) v = shift + rng.gaussian();
                m.push_back(std::move(x));
            }
            return m;
        };
        for (int trial = 0; trial < 100; ++trial) {
            FeatureMatrix a = random_features(4 + rng.below(12), 3, rng.uniform(-2.0, 2.0));
            FeatureMatrix b = random_features(4 + rng.below(12), 3, rng.uniform(-2.0, 2.0));
            if (mmd(a, a, config) > 1e-9) {
                detail = "mmd(X,X) above 1e-9";
                return false;
            }
            double ab = mmd(a, b, config);
            if (ab < 0.0) {
                detail = "negative mmd";
                return false;
            }
            if (std::fabs(ab - mmd(b, a, config)) > 1e-12) {
                detail = "asymmetric mmd";
                return false;
            }
            int labels = 3;
            int count = 5 + static_cast<int>(rng.below(10));
            std::vector<int> truth(count), preds(count);
            for (int i = 0; i < count; ++i) {
                truth[i] = static_cast<int>(rng.below(labels));
                preds[i] = static_cast<int>(rng.below(labels));
            }
            if (!(terminal_reward(a, b, preds, truth, config) > 0.0)) {
                detail = "non-positive reward";
                return false;
            }
        }
        return true;
    });

    criterion(7, "directional experiment beats the baselines", 900.0, [](std::string& detail) {
        ExperimentConfig base = directional_config();
        std::vector<double> jsd_gflowda, jsd_random, acc_gflowda, acc_entropy;
        std::vector<double> classes_gflowda, classes_entropy;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            ExperimentConfig c = base;
            c.strategy = Strategy::gflowda;
            RunResult g = run_gflowda(c, seed);
            c.strategy = Strategy::random_pick;
            RunResult r = run_baseline(c, seed);
            c.strategy = Strategy::entropy;
            RunResult e = run_baseline(c, seed);

            jsd_gflowda.push_back(g.jsd_selected_vs_target);
            jsd_random.push_back(r.jsd_selected_vs_target);
            acc_gflowda.push_back(g.avg_class_accuracy);
            acc_entropy.push_back(e.avg_class_accuracy);
            auto distinct = [](const std::vector<int>& labels) {
                return static_cast<double>(std::set<int>(labels.begin(), labels.end()).size());
            };
            classes_gflowda.push_back(distinct(g.selected_labels));
            classes_entropy.push_back(distinct(e.selected_labels));
        }
        double jg = mean_of(jsd_gflowda), jr = mean_of(jsd_random);
        double ag = mean_of(acc_gflowda), ae = mean_of(acc_entropy);
        double cg = mean_of(classes_gflowda), ce = mean_of(classes_entropy);
        char buf[192];
        std::snprintf(buf, sizeof(buf),
                      "jsd %.4f vs random %.4f; acc %.4f vs entropy %.4f; classes %.2f vs %.2f", jg,
                      jr, ag, ae, cg, ce);
        detail = buf;
        return jg < jr && ag > ae && cg >= ce;
    });

    criterion(8, "metric implementations match brute force", 30.0, [](std::string& detail) {
        Rng rng(808);
        for (int trial = 0; trial < 100; ++trial) {
            // jsd against a direct two-KL evaluation
            auto random_dist = [&rng] {
                LabelDistribution d;
                int k = 1 + static_cast<int>(rng.below(5));
                double total = 0.0;
                for (int i = 0; i < k; ++i) d.probs[static_cast<int>(rng.below(8))] = 0.01 + rng.uniform();
                for (auto& [y, v] : d.probs) total += v;
                for (auto& [y, v] : d.probs) v /= total;
                return d;
            };
            LabelDistribution p = random_dist(), q = random_dist();
            std::set<int> support;
            for (const auto& [y, v] : p.probs) support.insert(y);
            for (const auto& [y, v] : q.probs) support.insert(y);
            double expected = 0.0;
            for (int y : support) {
                double pi = p.prob(y), qi = q.prob(y), mi = 0.5 * (pi + qi);
                if (pi > 0.0) expected += 0.5 * pi * std::log2(pi / mi);
                if (qi > 0.0) expected += 0.5 * qi * std::log2(qi / mi);
            }
            if (std::fabs(jsd(p, q) - expected) > 1e-12) {
                detail = "jsd mismatch";
                return false;
            }
            if (jsd(p, p) != 0.0) {
                detail = "jsd(p,p) nonzero";
                return false;
            }

            // macro accuracy against per-class counting
            int n = 5 + static_cast<int>(rng.below(30));
            std::vector<int> truth(n), preds(n);
            for (int i = 0; i < n; ++i) {
                truth[i] = static_cast<int>(rng.below(4));
                preds[i] = static_cast<int>(rng.below(4));
            }
            std::map<int, std::pair<int, int>> tally;
            for (int i = 0; i < n; ++i) {
                tally[truth[i]].second += 1;
                if (truth[i] == preds[i]) tally[truth[i]].first += 1;
            }
            double macro = 0.0;
            for (const auto& [y, counts] : tally)
                macro += static_cast<double>(counts.first) / counts.second;
            macro /= static_cast<double>(tally.size());
            if (std::fabs(average_class_accuracy(preds, truth) - macro) > 1e-12) {
                detail = "macro accuracy mismatch";
                return false;
            }
        }
        LabelDistribution a{{{0, 1.0}}}, b{{{1, 1.0}}};
        if (jsd(a, b) != 1.0) {
            detail = "disjoint point masses not at 1";
            return false;
        }
        return true;
    });

    criterion(9, "repeated runs emit byte-identical results", 600.0, [](std::string& detail) {
        ExperimentConfig c = directional_config();
        c.strategy = Strategy::gflowda;
        c.train.episodes_max = 8;
        c.guan_initial_epochs = 25;
        c.guan_epochs_per_reward = 5;
        c.guan_final_epochs = 30;
        c.final_candidates = 4;
        c.seeds = {12};

        auto run_once = [&](const std::string& dir) {
            std::vector<RunResult> results{run_gflowda(c, 12)};
            emit_report(results, c, dir);
            std::ifstream in(dir + "/results.csv", std::ios::binary);
            std::stringstream buf;
            buf << in.rdbuf();
            return buf.str();
        };
        auto base = std::filesystem::temp_directory_path() / "gflowda_acceptance_det";
        std::string first = run_once((base / "a").string());
        std::string second = run_once((base / "b").string());
        std::filesystem::remove_all(base);
        if (first.empty()) {
            detail = "no results written";
            return false;
        }
        detail = "results.csv identical across repeated runs";
        return first == second;
    });

    std::printf("%s\n", g_failures == 0 ? "all criteria passed" : "FAILURES PRESENT");
    return g_failures == 0 ? 0 : 1;
}
