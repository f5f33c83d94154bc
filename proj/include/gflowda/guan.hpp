#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "gflowda/label_distribution.hpp"
#include "gflowda/nn.hpp"
#include "gflowda/scenario.hpp"
#include "gflowda/state.hpp"

namespace gflowda {

struct GuanConfig {
    int feature_dim = 8;                    // extracted dimension d_z
    std::vector<int> extractor_hidden{16};
    std::vector<int> discriminator_hidden{}; // empty: single affine layer + sigmoid
    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 0.003;
    int minibatch = 0; // 0 = full batch
};

struct WeightConfig {
    double lambda = 1.0;     // weight for source samples outside Y_l ∩ Y_s
    double ratio_clip = 10.0; // cap on P_l(y)/P_s(y)

    void validate() const;
};

// Feature extractor g, classifier h over the extended label space, domain
// discriminator d. The classifier head grows one output slot per newly
// revealed target-private label; existing slots never move.
struct GuanModel {
    GuanConfig config;
    MlpSpec g_spec, h_spec, d_spec;
    Parameters g, h, d;
    std::vector<int> slot_to_label;
    std::map<int, int> label_to_slot;
    OptimizerState g_opt, h_opt, d_opt;
    std::uint64_t grow_seed = 0; // seeds fresh rows for new head slots
    int grow_count = 0;

    static GuanModel make(int raw_dim, const std::set<int>& source_labels, const GuanConfig& config,
                          Rng& rng);

    int slot_of(int label) const; // throws if the label has no slot
    std::set<int> known_labels() const;
    void ensure_label(int label); // grows the head when the label is new

    std::vector<double> extract(const std::vector<double>& x) const; // g(x)
    std::vector<double> class_probs(const std::vector<double>& x) const;
    double discriminate(const std::vector<double>& x) const; // d(g(x)) in (0,1)

    std::string to_json() const;
    static GuanModel from_json(const std::string& text);
};

struct Prediction {
    int label = 0;
    std::vector<double> probs; // over slots
    double entropy = 0.0;
};

Prediction predict(const GuanModel& model, const std::vector<double>& features);

// w_s = 1(y in Y') P_l(y)/P_s(y) + (1 - 1(y in Y')) lambda, Y' = Y_l ∩ Y_s,
// the ratio clipped at ratio_clip.
double source_weight(int y, const LabelDistribution& p_selected, const LabelDistribution& p_source,
                     const std::set<int>& y_prime, const WeightConfig& config);

// (w_t, w_t') = mean predicted mass over Y_s resp. Y_l slots; w_t' = 0 while
// no target sample has been selected.
std::pair<double, double> target_weights(const std::vector<double>& probs,
                                         const std::vector<int>& slot_to_label,
                                         const std::set<int>& source_labels,
                                         const std::set<int>& selected_labels);

struct GuanLoss {
    double value = 0.0;
    Parameters g_grad, h_grad, d_grad;
    int clamp_events = 0; // discriminator outputs pushed back inside (0,1)
    bool degenerate = false; // an empty batch zeroed a term
};

// L = -mean_s w_s log d(z) - mean_t w_t log(1 - d(z)) with z = g(x)
GuanLoss adversarial_loss_source(const FeatureMatrix& source_batch, const std::vector<double>& source_weights,
                                 const FeatureMatrix& target_batch, const std::vector<double>& target_weights,
                                 const GuanModel& model);

// L = -mean_l log d(z) - mean_t w_t' log(1 - d(z))
GuanLoss adversarial_loss_selected(const FeatureMatrix& selected_batch, const FeatureMatrix& target_batch,
                                   const std::vector<double>& target_weights_prime, const GuanModel& model);

// mean cross-entropy over the source batch plus mean over the selected batch,
// labels indexed in the extended space
GuanLoss classification_loss(const FeatureMatrix& source_batch, const std::vector<int>& source_labels,
                             const FeatureMatrix& selected_batch, const std::vector<int>& selected_labels,
                             const GuanModel& model);

struct GuanEpochMetrics {
    int epoch = 0;
    double adv_source = 0.0;
    double adv_selected = 0.0;
    double classification = 0.0;
    double source_accuracy = 0.0;
    double target_accuracy = 0.0;
};

struct GuanTrainOptions {
    int epochs = 100;
    WeightConfig weights;
    double adversarial_weight = 1.0; // 0 turns adaptation off (plain source training)
    bool collect_metrics = false;    // per-epoch accuracies cost extra forwards
};

// Alternating optimization: per epoch a discriminator step on the summed
// adversarial losses, then a generator/classifier step on the
// classification loss minus the adversarial losses. Weights are refreshed
// every epoch from the current empirical distributions and classifier.
std::vector<GuanEpochMetrics> train_guan(GuanModel& model, const Domain& source, const Domain& selected,
                                         const Domain& target, const GuanTrainOptions& options, Rng& rng);

void write_guan_metrics_csv(const std::vector<GuanEpochMetrics>& metrics, const std::string& path);

} // namespace gflowda
