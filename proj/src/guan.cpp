#include "gflowda/guan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "gflowda/state.hpp"

namespace gflowda {

using nlohmann::json;

void WeightConfig::validate() const {
    if (lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
    if (!(ratio_clip > 0.0)) throw std::invalid_argument("ratio_clip must be positive");
}

GuanModel GuanModel::make(int raw_dim, const std::set<int>& source_labels, const GuanConfig& config,
                          Rng& rng) {
    if (raw_dim <= 0) throw std::invalid_argument("GuanModel: raw dimension must be positive");
    if (source_labels.empty()) throw std::invalid_argument("GuanModel: source label set is empty");
    GuanModel m;
    m.config = config;

    m.g_spec.layer_sizes.push_back(raw_dim);
    for (int h : config.extractor_hidden) m.g_spec.layer_sizes.push_back(h);
    m.g_spec.layer_sizes.push_back(config.feature_dim);
    m.g_spec.activation = Activation::relu;
    m.g_spec.output = OutputTransform::identity;

    m.h_spec.layer_sizes = {config.feature_dim, static_cast<int>(source_labels.size())};
    m.h_spec.activation = Activation::relu;
    m.h_spec.output = OutputTransform::softmax;

    m.d_spec.layer_sizes.push_back(config.feature_dim);
    for (int h : config.discriminator_hidden) m.d_spec.layer_sizes.push_back(h);
    m.d_spec.layer_sizes.push_back(1);
    m.d_spec.activation = Activation::relu;
    m.d_spec.output = OutputTransform::sigmoid;

    Rng ginit = rng.substream("guan/g");
    Rng hinit = rng.substream("guan/h");
    Rng dinit = rng.substream("guan/d");
    m.g = Parameters::init(m.g_spec, ginit);
    m.h = Parameters::init(m.h_spec, hinit);
    m.d = Parameters::init(m.d_spec, dinit);

    for (int label : source_labels) {
        m.label_to_slot[label] = static_cast<int>(m.slot_to_label.size());
        m.slot_to_label.push_back(label);
    }
    m.grow_seed = rng.substream("guan/head-growth").seed();
    return m;
}

int GuanModel::slot_of(int label) const {
    auto it = label_to_slot.find(label);
    if (it == label_to_slot.end())
        throw std::invalid_argument("label " + std::to_string(label) + " has no classifier slot");
    return it->second;
}

std::set<int> GuanModel::known_labels() const {
    std::set<int> s;
    for (int label : slot_to_label) s.insert(label);
    return s;
}

void GuanModel::ensure_label(int label) {
    if (label_to_slot.count(label)) return;
    label_to_slot[label] = static_cast<int>(slot_to_label.size());
    slot_to_label.push_back(label);

    auto& head = h.layers.back();
    Rng rng(grow_seed + static_cast<std::uint64_t>(++grow_count));
    double bound = 1.0 / std::sqrt(static_cast<double>(head.in));
    for (int c = 0; c < head.in; ++c) head.w.push_back(rng.uniform(-bound, bound));
    head.b.push_back(rng.uniform(-bound, bound));
    head.out += 1;
    h_spec.layer_sizes.back() += 1;
}

std::vector<double> GuanModel::extract(const std::vector<double>& x) const {
    return forward(g_spec, g, x);
}

std::vector<double> GuanModel::class_probs(const std::vector<double>& x) const {
    return forward(h_spec, h, extract(x));
}

double GuanModel::discriminate(const std::vector<double>& x) const {
    return forward(d_spec, d, extract(x))[0];
}

std::string GuanModel::to_json() const {
    json j;
    j["feature_dim"] = config.feature_dim;
    j["extractor_hidden"] = config.extractor_hidden;
    j["discriminator_hidden"] = config.discriminator_hidden;
    j["optimizer"] = to_string(config.optimizer);
    j["learning_rate"] = config.learning_rate;
    j["minibatch"] = config.minibatch;
    j["slot_to_label"] = slot_to_label;
    j["grow_seed"] = grow_seed;
    j["grow_count"] = grow_count;
    j["g"] = json::parse(g.to_json());
    j["h"] = json::parse(h.to_json());
    j["d"] = json::parse(d.to_json());
    return j.dump();
}

GuanModel GuanModel::from_json(const std::string& text) {
    json j = json::parse(text);
    GuanModel m;
    m.config.feature_dim = j.at("feature_dim").get<int>();
    m.config.extractor_hidden = j.at("extractor_hidden").get<std::vector<int>>();
    m.config.discriminator_hidden = j.at("discriminator_hidden").get<std::vector<int>>();
    m.config.optimizer = optimizer_kind_from_string(j.at("optimizer").get<std::string>());
    m.config.learning_rate = j.at("learning_rate").get<double>();
    m.config.minibatch = j.at("minibatch").get<int>();
    m.slot_to_label = j.at("slot_to_label").get<std::vector<int>>();
    for (std::size_t i = 0; i < m.slot_to_label.size(); ++i)
        m.label_to_slot[m.slot_to_label[i]] = static_cast<int>(i);
    m.grow_seed = j.at("grow_seed").get<std::uint64_t>();
    m.grow_count = j.at("grow_count").get<int>();
    m.g = Parameters::from_json(j.at("g").dump());
    m.h = Parameters::from_json(j.at("h").dump());
    m.d = Parameters::from_json(j.at("d").dump());

    auto rebuild_spec = [](MlpSpec& spec, const Parameters& p, Activation act, OutputTransform out) {
        spec.layer_sizes.clear();
        spec.layer_sizes.push_back(p.layers.front().in);
        for (const auto& layer : p.layers) spec.layer_sizes.push_back(layer.out);
        spec.activation = act;
        spec.output = out;
    };
    rebuild_spec(m.g_spec, m.g, Activation::relu, OutputTransform::identity);
    rebuild_spec(m.h_spec, m.h, Activation::relu, OutputTransform::softmax);
    rebuild_spec(m.d_spec, m.d, Activation::relu, OutputTransform::sigmoid);
    return m;
}

Prediction predict(const GuanModel& model, const std::vector<double>& features) {
    Prediction p;
    p.probs = model.class_probs(features);
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.probs.size(); ++i)
        if (p.probs[i] > p.probs[best]) best = i;
    p.label = model.slot_to_label[best];
    p.entropy = shannon_entropy(p.probs);
    return p;
}

double source_weight(int y, const LabelDistribution& p_selected, const LabelDistribution& p_source,
                     const std::set<int>& y_prime, const WeightConfig& config) {
    config.validate();
    if (p_source.prob(y) <= 0.0 && y_prime.count(y))
        throw std::invalid_argument("source_weight: P_s(y) = 0 for label " + std::to_string(y));
    if (!y_prime.count(y)) return config.lambda;
    double ratio = p_selected.prob(y) / p_source.prob(y);
    return std::min(ratio, config.ratio_clip);
}

std::pair<double, double> target_weights(const std::vector<double>& probs,
                                         const std::vector<int>& slot_to_label,
                                         const std::set<int>& source_labels,
                                         const std::set<int>& selected_labels) {
    if (probs.size() != slot_to_label.size())
        throw std::invalid_argument("target_weights: probs/slot size mismatch");
    double mass_s = 0.0, mass_l = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (source_labels.count(slot_to_label[i])) mass_s += probs[i];
        if (selected_labels.count(slot_to_label[i])) mass_l += probs[i];
    }
    double u = static_cast<double>(source_labels.size());
    double v = static_cast<double>(selected_labels.size());
    double w_t = u > 0.0 ? mass_s / u : 0.0;
    double w_t_prime = v > 0.0 ? mass_l / v : 0.0;
    return {w_t, w_t_prime};
}

namespace {

constexpr double kDiscFloor = 1e-7;

// clamps d into (0,1) and reports whether it was outside
double clamp_disc(double v, int& events) {
    if (v < kDiscFloor) {
        ++events;
        return kDiscFloor;
    }
    if (v > 1.0 - kDiscFloor) {
        ++events;
        return 1.0 - kDiscFloor;
    }
    return v;
}

GuanLoss make_zero_loss(const GuanModel& model) {
    GuanLoss loss;
    loss.g_grad = Parameters::zeros_like(model.g_spec);
    loss.h_grad = Parameters::zeros_like(model.h_spec);
    loss.d_grad = Parameters::zeros_like(model.d_spec);
    return loss;
}

// adds the gradient of weight * log_term(d(g(x))) for one sample
void backprop_disc_term(const GuanModel& model, const std::vector<double>& x, double dloss_dd,
                        GuanLoss& loss) {
    Tape g_tape, d_tape;
    forward(model.g_spec, model.g, x, &g_tape);
    forward(model.d_spec, model.d, g_tape.output, &d_tape);
    BackwardResult dback = backward(model.d_spec, model.d, d_tape, {dloss_dd});
    loss.d_grad.add_scaled(dback.param_grads, 1.0);
    BackwardResult gback = backward(model.g_spec, model.g, g_tape, dback.input_grad);
    loss.g_grad.add_scaled(gback.param_grads, 1.0);
}

} // namespace

GuanLoss adversarial_loss_source(const FeatureMatrix& source_batch, const std::vector<double>& source_weights,
                                 const FeatureMatrix& target_batch, const std::vector<double>& target_weights,
                                 const GuanModel& model) {
    if (source_batch.size() != source_weights.size() || target_batch.size() != target_weights.size())
        throw std::invalid_argument("adversarial_loss_source: batch/weight size mismatch");
    GuanLoss loss = make_zero_loss(model);
    if (source_batch.empty() || target_batch.empty()) {
        loss.degenerate = true;
        return loss;
    }

    double inv_s = 1.0 / static_cast<double>(source_batch.size());
    for (std::size_t i = 0; i < source_batch.size(); ++i) {
        double w = source_weights[i];
        double dv = clamp_disc(model.discriminate(source_batch[i]), loss.clamp_events);
        loss.value += -inv_s * w * std::log(dv);
        if (w != 0.0) backprop_disc_term(model, source_batch[i], -inv_s * w / dv, loss);
    }
    double inv_t = 1.0 / static_cast<double>(target_batch.size());
    for (std::size_t i = 0; i < target_batch.size(); ++i) {
        double w = target_weights[i];
        double dv = clamp_disc(model.discriminate(target_batch[i]), loss.clamp_events);
        loss.value += -inv_t * w * std::log(1.0 - dv);
        if (w != 0.0) backprop_disc_term(model, target_batch[i], inv_t * w / (1.0 - dv), loss);
    }
    return loss;
}

GuanLoss adversarial_loss_selected(const FeatureMatrix& selected_batch, const FeatureMatrix& target_batch,
                                   const std::vector<double>& target_weights_prime, const GuanModel& model) {
    if (target_batch.size() != target_weights_prime.size())
        throw std::invalid_argument("adversarial_loss_selected: batch/weight size mismatch");
    GuanLoss loss = make_zero_loss(model);
    if (selected_batch.empty()) {
        loss.degenerate = true;
        return loss;
    }

    double inv_l = 1.0 / static_cast<double>(selected_batch.size());
    for (const auto& x : selected_batch) {
        double dv = clamp_disc(model.discriminate(x), loss.clamp_events);
        loss.value += -inv_l * std::log(dv);
        backprop_disc_term(model, x, -inv_l / dv, loss);
    }
    if (!target_batch.empty()) {
        double inv_t = 1.0 / static_cast<double>(target_batch.size());
        for (std::size_t i = 0; i < target_batch.size(); ++i) {
            double w = target_weights_prime[i];
            double dv = clamp_disc(model.discriminate(target_batch[i]), loss.clamp_events);
            loss.value += -inv_t * w * std::log(1.0 - dv);
            if (w != 0.0) backprop_disc_term(model, target_batch[i], inv_t * w / (1.0 - dv), loss);
        }
    }
    return loss;
}

GuanLoss classification_loss(const FeatureMatrix& source_batch, const std::vector<int>& source_labels,
                             const FeatureMatrix& selected_batch, const std::vector<int>& selected_labels,
                             const GuanModel& model) {
    if (source_batch.size() != source_labels.size() || selected_batch.size() != selected_labels.size())
        throw std::invalid_argument("classification_loss: batch/label size mismatch");
    GuanLoss loss = make_zero_loss(model);
    if (selected_batch.empty()) loss.degenerate = true;

    auto add_batch = [&](const FeatureMatrix& batch, const std::vector<int>& labels) {
        double inv = 1.0 / static_cast<double>(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            int slot = model.slot_of(labels[i]); // throws on labels outside the extended space
            Tape g_tape, h_tape;
            forward(model.g_spec, model.g, batch[i], &g_tape);
            std::vector<double> probs = forward(model.h_spec, model.h, g_tape.output, &h_tape);
            CrossEntropyResult ce = cross_entropy(probs, slot);
            if (ce.clamped) ++loss.clamp_events;
            loss.value += inv * ce.value;
            std::vector<double> dprobs(ce.grad.size());
            for (std::size_t k = 0; k < dprobs.size(); ++k) dprobs[k] = inv * ce.grad[k];
            BackwardResult hback = backward(model.h_spec, model.h, h_tape, dprobs);
            loss.h_grad.add_scaled(hback.param_grads, 1.0);
            BackwardResult gback = backward(model.g_spec, model.g, g_tape, hback.input_grad);
            loss.g_grad.add_scaled(gback.param_grads, 1.0);
        }
    };
    if (!source_batch.empty()) add_batch(source_batch, source_labels);
    if (!selected_batch.empty()) add_batch(selected_batch, selected_labels);
    return loss;
}

namespace {

struct BatchView {
    FeatureMatrix features;
    std::vector<int> labels;
};

BatchView labeled_view(const Domain& domain, const std::vector<std::size_t>& indices) {
    BatchView v;
    for (std::size_t i : indices) {
        v.features.push_back(domain.examples[i].features);
        v.labels.push_back(*domain.examples[i].label);
    }
    return v;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int minibatch, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (minibatch <= 0 || static_cast<std::size_t>(minibatch) >= n) return {order};
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += minibatch) {
        std::size_t stop = std::min(n, start + minibatch);
        batches.emplace_back(order.begin() + start, order.begin() + stop);
    }
    return batches;
}

} // namespace

std::vector<GuanEpochMetrics> train_guan(GuanModel& model, const Domain& source, const Domain& selected,
                                         const Domain& target, const GuanTrainOptions& options, Rng& rng) {
    if (source.examples.empty()) throw std::invalid_argument("train_guan: source domain is empty");
    options.weights.validate();

    for (const auto& ex : source.examples)
        if (ex.label) model.ensure_label(*ex.label);
    for (const auto& ex : selected.examples)
        if (ex.label) model.ensure_label(*ex.label);

    std::set<int> source_label_set;
    for (const auto& ex : source.examples) source_label_set.insert(*ex.label);
    std::set<int> selected_label_set;
    for (const auto& ex : selected.examples) selected_label_set.insert(*ex.label);
    std::set<int> y_prime;
    for (int y : selected_label_set)
        if (source_label_set.count(y)) y_prime.insert(y);

    LabelDistribution p_source = empirical_label_distribution(source);
    LabelDistribution p_selected;
    if (!selected.examples.empty()) p_selected = empirical_label_distribution(selected);

    OptimizerConfig opt;
    opt.kind = model.config.optimizer;
    opt.learning_rate = model.config.learning_rate;

    std::vector<GuanEpochMetrics> metrics;
    FeatureMatrix target_features = target.feature_matrix();
    FeatureMatrix selected_features = selected.feature_matrix();
    std::vector<int> selected_labels;
    for (const auto& ex : selected.examples) selected_labels.push_back(*ex.label);

    Rng batch_rng = rng.substream("guan/batches");

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        // per-sample target weights from the current classifier, detached
        std::vector<double> w_t(target_features.size()), w_t_prime(target_features.size());
        for (std::size_t i = 0; i < target_features.size(); ++i) {
            std::vector<double> probs = model.class_probs(target_features[i]);
            auto [wt, wtp] = target_weights(probs, model.slot_to_label, source_label_set, selected_label_set);
            w_t[i] = wt;
            w_t_prime[i] = wtp;
        }

        auto source_batches = make_batches(source.examples.size(), model.config.minibatch, batch_rng);
        auto target_batches = make_batches(target_features.size(), model.config.minibatch, batch_rng);
        std::size_t rounds = std::max(source_batches.size(), target_batches.size());

        GuanEpochMetrics em;
        em.epoch = epoch;
        for (std::size_t round = 0; round < rounds; ++round) {
            BatchView sb = labeled_view(source, source_batches[round % source_batches.size()]);
            const auto& t_indices = target_batches[round % target_batches.size()];
            FeatureMatrix tb;
            std::vector<double> tb_w, tb_wp;
            for (std::size_t i : t_indices) {
                tb.push_back(target_features[i]);
                tb_w.push_back(w_t[i]);
                tb_wp.push_back(w_t_prime[i]);
            }
            std::vector<double> sb_w(sb.features.size());
            for (std::size_t i = 0; i < sb.features.size(); ++i)
                sb_w[i] = source_weight(sb.labels[i], p_selected, p_source, y_prime, options.weights);

            bool adapt = options.adversarial_weight > 0.0;
            GuanLoss adv_s, adv_l;

            // (i) discriminator step on the summed adversarial losses
            if (adapt) {
                adv_s = adversarial_loss_source(sb.features, sb_w, tb, tb_w, model);
                adv_l = adversarial_loss_selected(selected_features, tb, tb_wp, model);
                Parameters d_grad = adv_s.d_grad;
                d_grad.add_scaled(adv_l.d_grad, 1.0);
                optimizer_step(model.d_spec, model.d, d_grad, model.d_opt, opt);
            }

            // (ii) generator/classifier step: classification minus adversarial
            GuanLoss cls = classification_loss(sb.features, sb.labels, selected_features, selected_labels, model);
            Parameters g_grad = cls.g_grad;
            if (adapt) {
                GuanLoss adv_s2 = adversarial_loss_source(sb.features, sb_w, tb, tb_w, model);
                GuanLoss adv_l2 = adversarial_loss_selected(selected_features, tb, tb_wp, model);
                g_grad.add_scaled(adv_s2.g_grad, -options.adversarial_weight);
                g_grad.add_scaled(adv_l2.g_grad, -options.adversarial_weight);
            }
            optimizer_step(model.g_spec, model.g, g_grad, model.g_opt, opt);
            optimizer_step(model.h_spec, model.h, cls.h_grad, model.h_opt, opt);

            em.adv_source += adv_s.value;
            em.adv_selected += adv_l.value;
            em.classification += cls.value;
        }
        em.adv_source /= static_cast<double>(rounds);
        em.adv_selected /= static_cast<double>(rounds);
        em.classification /= static_cast<double>(rounds);

        if (options.collect_metrics) {
            int correct = 0;
            for (const auto& ex : source.examples)
                if (predict(model, ex.features).label == *ex.label) ++correct;
            em.source_accuracy = static_cast<double>(correct) / static_cast<double>(source.examples.size());
            int t_correct = 0, t_total = 0;
            for (std::size_t i = 0; i < target.examples.size(); ++i) {
                if (!target.examples[i].label) continue;
                ++t_total;
                if (predict(model, target.examples[i].features).label == target.oracle_label(i)) ++t_correct;
            }
            em.target_accuracy = t_total > 0 ? static_cast<double>(t_correct) / t_total : 0.0;
        }
        metrics.push_back(em);
    }
    return metrics;
}

void write_guan_metrics_csv(const std::vector<GuanEpochMetrics>& metrics, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write metrics csv: " + path);
    out << "epoch,adv_source,adv_selected,classification,source_accuracy,target_accuracy\n";
    char buf[160];
    for (const auto& m : metrics) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", m.epoch, m.adv_source,
                      m.adv_selected, m.classification, m.source_accuracy, m.target_accuracy);
        out << buf;
    }
}

} // namespace gflowda
