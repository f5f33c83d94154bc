#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gflowda/label_distribution.hpp"
#include "gflowda/rng.hpp"

namespace gflowda {

enum class DomainRole { source, target, selected };

std::string to_string(DomainRole role);
DomainRole domain_role_from_string(const std::string& s);

struct Example {
    std::vector<double> features;
    std::optional<int> label;
};

// A realized sample set. Source and selected examples are always labeled.
// Target examples may carry ground-truth labels, but consumers must only
// read them through oracle_label (selection reveal, evaluation metrics).
struct Domain {
    DomainRole role = DomainRole::target;
    std::vector<Example> examples;
    std::set<int> label_space;

    std::size_t size() const { return examples.size(); }
    int feature_dim() const { return examples.empty() ? 0 : static_cast<int>(examples[0].features.size()); }

    // label as visible to learners: only source/selected labels are public
    std::optional<int> visible_label(std::size_t i) const;

    // ground-truth reveal; throws if the label is unknown
    int oracle_label(std::size_t i) const;

    std::vector<std::vector<double>> feature_matrix() const;
};

// Synthetic adaptation problem definition: common/private label spaces, per-domain
// priors, per-(domain,label) isotropic Gaussian components.
struct ScenarioSpec {
    int feature_dim = 2;
    std::vector<int> common_labels;
    std::vector<int> source_private;
    std::vector<int> target_private;
    LabelDistribution source_priors; // over common + source_private
    LabelDistribution target_priors; // over common + target_private
    std::map<std::pair<std::string, int>, std::vector<double>> class_means;  // ("source"/"target", label)
    std::map<std::pair<std::string, int>, double> class_scales;
    int source_count = 0;
    int target_count = 0;
    std::uint64_t seed = 0;

    std::set<int> source_label_set() const;
    std::set<int> target_label_set() const;

    void validate() const; // throws std::invalid_argument

    std::string to_json() const;
    static ScenarioSpec from_json(const std::string& text);
    static ScenarioSpec load(const std::string& path);
    void save(const std::string& path) const;
};

// Draws both domains from the spec. Deterministic for a fixed spec: label
// counts are the exact integer apportionment of count * prior (largest
// remainder), features are seeded Gaussians.
std::pair<Domain, Domain> generate_scenario(const ScenarioSpec& spec);

// Keeps ceil(fraction * count) uniformly chosen examples of each listed
// label; unlisted labels are untouched. Fractions must be in (0, 1].
Domain apply_subsample_protocol(const Domain& domain, const std::map<int, double>& retain,
                                std::uint64_t seed);

// probs[y] = count(y) / total over ground-truth labels; throws on empty or
// unlabeled domains
LabelDistribution empirical_label_distribution(const Domain& domain);

// CSV persistence. Header `label,f0,...,f{d-1}`; label column empty for
// unlabeled rows; numbers printed with 17 significant digits (lossless).
void save_domain_csv(const Domain& domain, const std::string& path);
Domain load_domain_csv(const std::string& path, DomainRole role);

} // namespace gflowda
