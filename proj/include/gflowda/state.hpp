#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace gflowda {

// One target sample's slice of the n x 4 state.
struct StateRow {
    double inst_sim = -1.0;  // max cosine similarity to selected samples
    double class_sim = -1.0; // max cosine similarity to active class prototypes
    double entropy = 0.0;    // prediction entropy, natural log
    double labeled = 0.0;    // 0/1 indicator

    std::vector<double> as_vector() const { return {inst_sim, class_sim, entropy, labeled}; }
};

struct StateMatrix {
    std::vector<StateRow> rows;
    std::size_t size() const { return rows.size(); }
};

struct Prototype {
    std::vector<double> mean;
    int count = 0;
};

// class id -> running mean of extracted features over selected samples
using PrototypeSet = std::map<int, Prototype>;

// Pairwise cosine similarities of the target features, built once per episode.
struct SimilarityCache {
    int n = 0;
    std::vector<double> sim; // n * n, symmetric, diagonal 1 for nonzero rows

    double at(int i, int j) const { return sim[static_cast<std::size_t>(i) * n + j]; }
    static SimilarityCache build(const std::vector<std::vector<double>>& features);
};

using FeatureMatrix = std::vector<std::vector<double>>;
using LabelOracle = std::function<int(int)>;

// Immutable-after-step snapshot of one point along a selection trajectory.
// Copies share the feature matrix and similarity cache.
struct TrajectoryState {
    StateMatrix state;
    std::vector<std::pair<int, int>> selected; // (target index, revealed label), in pick order
    PrototypeSet prototypes;
    int step = 0;

    std::shared_ptr<const FeatureMatrix> features;
    std::shared_ptr<const SimilarityCache> cache;

    // class id whose prototype attains each row's class_sim; no_class when none
    static constexpr int no_class = std::numeric_limits<int>::min();
    std::vector<int> class_argmax;

    int sample_count() const { return static_cast<int>(state.size()); }
    bool is_selected(int i) const { return state.rows[i].labeled > 0.5; }
};

// cosine of two vectors; zero-norm inputs compare as 0
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Shannon entropy with natural log; 0*log0 = 0
double shannon_entropy(const std::vector<double>& probs);

// Builds the step-0 state: entropy column from predictions, similarity
// columns at the -1 sentinel, nothing selected. The similarity cache is
// built here unless a prebuilt one is supplied.
TrajectoryState init_state(std::shared_ptr<const FeatureMatrix> features,
                           const std::vector<std::vector<double>>& predictions,
                           std::shared_ptr<const SimilarityCache> cache = nullptr);

// Selects one target sample: flips its indicator, reveals the label, folds
// the new sample into its class prototype, and updates both similarity
// columns incrementally. O(n) similarity-cache lookups plus one prototype
// column of cosines; no rescans over the selected set.
TrajectoryState apply_action(const TrajectoryState& ts, int action, const LabelOracle& oracle);

// Full recomputation of all four columns from the selected set; the
// correctness oracle for every incremental path.
StateMatrix compute_state_oracle(const FeatureMatrix& features,
                                 const std::vector<std::vector<double>>& predictions,
                                 const std::vector<std::pair<int, int>>& selected);

// All states reachable by removing one selected sample, paired with the
// removed index. Exactly one parent per selected sample; empty at step 0.
std::vector<std::pair<TrajectoryState, int>> enumerate_parents(const TrajectoryState& ts);

// indices with indicator 0, ascending
std::vector<int> candidate_actions(const TrajectoryState& ts);

// Diagnostics for the cost property tests: dot products of feature dimension
// spent inside apply_action since the last reset.
std::uint64_t state_engine_dot_count();
void reset_state_engine_dot_count();

// Debug/test dump: one JSON line per step with the selected index, revealed
// label, and the chosen sample's 4-column row at selection time.
std::string trajectory_jsonl(const TrajectoryState& initial, const std::vector<int>& actions,
                             const LabelOracle& oracle);

} // namespace gflowda
