#include "gflowda/state.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gflowda {

namespace {

std::uint64_t g_dot_count = 0;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double counted_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    ++g_dot_count;
    return cosine_similarity(a, b);
}

} // namespace

std::uint64_t state_engine_dot_count() { return g_dot_count; }
void reset_state_engine_dot_count() { g_dot_count = 0; }

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: dimension mismatch");
    double na = std::sqrt(dot(a, a));
    double nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    double c = dot(a, b) / (na * nb);
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return c;
}

double shannon_entropy(const std::vector<double>& probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h < 0.0 ? 0.0 : h;
}

SimilarityCache SimilarityCache::build(const std::vector<std::vector<double>>& features) {
    SimilarityCache c;
    c.n = static_cast<int>(features.size());
    c.sim.assign(static_cast<std::size_t>(c.n) * c.n, 0.0);
    std::vector<double> norms(c.n);
    for (int i = 0; i < c.n; ++i) norms[i] = std::sqrt(dot(features[i], features[i]));
    for (int i = 0; i < c.n; ++i) {
        for (int j = i; j < c.n; ++j) {
            double v = 0.0;
            if (norms[i] > 0.0 && norms[j] > 0.0) {
                v = dot(features[i], features[j]) / (norms[i] * norms[j]);
                if (v > 1.0) v = 1.0;
                if (v < -1.0) v = -1.0;
            }
            c.sim[static_cast<std::size_t>(i) * c.n + j] = v;
            c.sim[static_cast<std::size_t>(j) * c.n + i] = v;
        }
    }
    return c;
}

namespace {

void validate_prediction_row(const std::vector<double>& row, std::size_t i) {
    double sum = 0.0;
    for (double p : row) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw std::invalid_argument("prediction row " + std::to_string(i) + " is not a distribution");
        sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("prediction row " + std::to_string(i) + " sums to " + std::to_string(sum));
}

} // namespace

TrajectoryState init_state(std::shared_ptr<const FeatureMatrix> features,
                           const std::vector<std::vector<double>>& predictions,
                           std::shared_ptr<const SimilarityCache> cache) {
    if (!features) throw std::invalid_argument("init_state: null features");
    std::size_t n = features->size();
    if (predictions.size() != n)
        throw std::invalid_argument("init_state: predictions/features row count mismatch");

    TrajectoryState ts;
    ts.features = std::move(features);
    ts.cache = cache ? std::move(cache)
                     : std::make_shared<const SimilarityCache>(SimilarityCache::build(*ts.features));
    if (ts.cache->n != static_cast<int>(n))
        throw std::invalid_argument("init_state: similarity cache size mismatch");

    ts.state.rows.resize(n);
    ts.class_argmax.assign(n, TrajectoryState::no_class);
    for (std::size_t i = 0; i < n; ++i) {
        validate_prediction_row(predictions[i], i);
        ts.state.rows[i].entropy = shannon_entropy(predictions[i]);
    }
    return ts;
}

TrajectoryState apply_action(const TrajectoryState& ts, int action, const LabelOracle& oracle) {
    int n = ts.sample_count();
    if (action < 0 || action >= n)
        throw std::invalid_argument("apply_action: index " + std::to_string(action) + " out of range");
    if (ts.is_selected(action))
        throw std::invalid_argument("apply_action: sample " + std::to_string(action) + " already selected");

    TrajectoryState next = ts;
    int label = oracle(action);
    next.selected.emplace_back(action, label);
    next.step = ts.step + 1;
    next.state.rows[action].labeled = 1.0;

    const FeatureMatrix& feats = *next.features;

    // prototype fold-in
    auto it = next.prototypes.find(label);
    if (it == next.prototypes.end()) {
        next.prototypes[label] = Prototype{feats[action], 1};
    } else {
        Prototype& proto = it->second;
        double cnt = static_cast<double>(proto.count);
        for (std::size_t k = 0; k < proto.mean.size(); ++k)
            proto.mean[k] = (proto.mean[k] * cnt + feats[action][k]) / (cnt + 1.0);
        proto.count += 1;
    }
    const Prototype& moved = next.prototypes[label];

    for (int i = 0; i < n; ++i) {
        StateRow& row = next.state.rows[i];

        // instance-level: running max against the newly selected sample
        double s = next.cache->at(i, action);
        if (s > row.inst_sim) row.inst_sim = s;

        // class-level: the prototype of `label` moved, everything else is unchanged
        double moved_sim = counted_cosine(moved.mean, feats[i]);
        if (next.class_argmax[i] == label) {
            // the old max lived on the moved prototype; recompute over all classes
            double best = -1.0;
            int best_class = TrajectoryState::no_class;
            for (const auto& [cls, proto] : next.prototypes) {
                double v = cls == label ? moved_sim : counted_cosine(proto.mean, feats[i]);
                if (v > best) {
                    best = v;
                    best_class = cls;
                }
            }
            row.class_sim = best;
            next.class_argmax[i] = best_class;
        } else if (moved_sim > row.class_sim) {
            row.class_sim = moved_sim;
            next.class_argmax[i] = label;
        }
    }
    return next;
}

StateMatrix compute_state_oracle(const FeatureMatrix& features,
                                 const std::vector<std::vector<double>>& predictions,
                                 const std::vector<std::pair<int, int>>& selected) {
    std::size_t n = features.size();
    if (predictions.size() != n)
        throw std::invalid_argument("compute_state_oracle: predictions row count mismatch");
    StateMatrix m;
    m.rows.resize(n);

    PrototypeSet prototypes;
    for (const auto& [idx, label] : selected) {
        auto it = prototypes.find(label);
        if (it == prototypes.end()) {
            prototypes[label] = Prototype{features[idx], 1};
        } else {
            for (std::size_t k = 0; k < it->second.mean.size(); ++k)
                it->second.mean[k] += features[idx][k];
            it->second.count += 1;
        }
    }
    for (auto& [label, proto] : prototypes) {
        if (proto.count > 1)
            for (double& v : proto.mean) v /= static_cast<double>(proto.count);
    }

    for (std::size_t i = 0; i < n; ++i) {
        StateRow& row = m.rows[i];
        validate_prediction_row(predictions[i], i);
        row.entropy = shannon_entropy(predictions[i]);
        row.inst_sim = -1.0;
        for (const auto& [idx, label] : selected)
            row.inst_sim = std::max(row.inst_sim, cosine_similarity(features[i], features[idx]));
        row.class_sim = -1.0;
        for (const auto& [label, proto] : prototypes)
            row.class_sim = std::max(row.class_sim, cosine_similarity(features[i], proto.mean));
        row.labeled = 0.0;
    }
    for (const auto& [idx, label] : selected) m.rows[idx].labeled = 1.0;
    return m;
}

std::vector<std::pair<TrajectoryState, int>> enumerate_parents(const TrajectoryState& ts) {
    std::vector<std::pair<TrajectoryState, int>> parents;
    if (ts.step == 0) return parents;
    int n = ts.sample_count();
    const FeatureMatrix& feats = *ts.features;

    for (std::size_t pick = 0; pick < ts.selected.size(); ++pick) {
        const auto [removed, removed_label] = ts.selected[pick];
        TrajectoryState parent = ts;
        parent.selected.erase(parent.selected.begin() + static_cast<std::ptrdiff_t>(pick));
        parent.step = ts.step - 1;
        parent.state.rows[removed].labeled = 0.0;

        // prototype downdate per the running-mean inverse; drop empty classes
        auto it = parent.prototypes.find(removed_label);
        bool class_erased = false;
        if (it->second.count == 1) {
            parent.prototypes.erase(it);
            class_erased = true;
        } else {
            Prototype& proto = it->second;
            double cnt = static_cast<double>(proto.count);
            for (std::size_t k = 0; k < proto.mean.size(); ++k)
                proto.mean[k] = (proto.mean[k] * cnt - feats[removed][k]) / (cnt - 1.0);
            proto.count -= 1;
        }

        for (int i = 0; i < n; ++i) {
            StateRow& row = parent.state.rows[i];

            // instance-level: a removal can only lower a max that the removed
            // sample attained; those entries are recomputed from the survivors
            if (parent.selected.empty()) {
                row.inst_sim = -1.0;
            } else if (ts.cache->at(i, removed) >= row.inst_sim) {
                double best = -1.0;
                for (const auto& [idx, lbl] : parent.selected)
                    best = std::max(best, ts.cache->at(i, idx));
                row.inst_sim = best;
            }

            // class-level: only the removed sample's class moved or vanished
            if (class_erased) {
                if (parent.class_argmax[i] == removed_label) {
                    double best = -1.0;
                    int best_class = TrajectoryState::no_class;
                    for (const auto& [cls, proto] : parent.prototypes) {
                        double v = cosine_similarity(proto.mean, feats[i]);
                        if (v > best) {
                            best = v;
                            best_class = cls;
                        }
                    }
                    row.class_sim = best;
                    parent.class_argmax[i] = best_class;
                }
            } else {
                const Prototype& moved = parent.prototypes[removed_label];
                double moved_sim = cosine_similarity(moved.mean, feats[i]);
                if (parent.class_argmax[i] == removed_label) {
                    double best = -1.0;
                    int best_class = TrajectoryState::no_class;
                    for (const auto& [cls, proto] : parent.prototypes) {
                        double v = cls == removed_label ? moved_sim : cosine_similarity(proto.mean, feats[i]);
                        if (v > best) {
                            best = v;
                            best_class = cls;
                        }
                    }
                    row.class_sim = best;
                    parent.class_argmax[i] = best_class;
                } else if (moved_sim > row.class_sim) {
                    row.class_sim = moved_sim;
                    parent.class_argmax[i] = removed_label;
                }
            }
        }
        parents.emplace_back(std::move(parent), removed);
    }
    return parents;
}

std::vector<int> candidate_actions(const TrajectoryState& ts) {
    std::vector<int> out;
    out.reserve(ts.state.size() - ts.selected.size());
    for (int i = 0; i < ts.sample_count(); ++i)
        if (!ts.is_selected(i)) out.push_back(i);
    return out;
}

std::string trajectory_jsonl(const TrajectoryState& initial, const std::vector<int>& actions,
                             const LabelOracle& oracle) {
    std::ostringstream out;
    TrajectoryState ts = initial;
    for (int action : actions) {
        const StateRow& row = ts.state.rows.at(action); // row at selection time
        TrajectoryState next = apply_action(ts, action, oracle);
        nlohmann::json j;
        j["step"] = next.step;
        j["selected_index"] = action;
        j["revealed_label"] = next.selected.back().second;
        j["row"] = {row.inst_sim, row.class_sim, row.entropy, row.labeled};
        out << j.dump() << "\n";
        ts = std::move(next);
    }
    return out.str();
}

} // namespace gflowda
