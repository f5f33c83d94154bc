#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "gflowda/label_distribution.hpp"

namespace gflowda {

// Exact finite joint over (true label, predicted label) for one domain.
struct DiscreteJoint {
    std::map<int, std::map<int, double>> p; // p[y][yhat]

    double mass(int y, int yhat) const;
    double marginal(int y) const;              // P(Y = y)
    double conditional(int yhat, int y) const; // P(Yhat = yhat | Y = y); throws if P(Y=y) = 0
    double total() const;
    std::set<int> label_support() const; // labels with positive marginal
    std::set<int> prediction_slots() const;
    LabelDistribution label_marginals() const;
    void validate(double tol = 1e-9) const;
};

// Balanced error rate over a label subset: max_j P(Yhat != j | Y = j).
double ber(const DiscreteJoint& joint, const std::set<int>& label_subset);

// Conditional error gap over a label subset:
// max over j in subset, i != j of |P_a(Yhat=i|Y=j) - P_b(Yhat=i|Y=j)|,
// i ranging over the union of both joints' prediction slots.
double ceg(const DiscreteJoint& a, const DiscreteJoint& b, const std::set<int>& label_subset);

// sum over j in subset of P(Y=j) * P(Yhat != j | Y = j)
double risk(const DiscreteJoint& joint, const std::set<int>& label_subset);
double risk(const DiscreteJoint& joint); // over the full label support

struct LabelSpaces {
    std::set<int> common;         // labels shared by source and target
    std::set<int> selected;       // labels revealed in the selected set
    std::set<int> target_private; // target-only labels
};

struct BoundReport {
    double source_common_risk = 0.0;
    double selected_risk = 0.0;
    double delta_source_target = 0.0;
    double delta_selected_target = 0.0;
    double target_private_term = 0.0;
    // factor breakdowns of the two delta terms
    double l1_source_target = 0.0;
    double ber_source_common = 0.0;
    double ceg_source_target = 0.0;
    double l1_selected_target = 0.0;
    double ber_selected = 0.0;
    double ceg_selected_target = 0.0;
    double bound = 0.0;
    double target_risk = 0.0; // actual epsilon_t, for the slack
    double slack = 0.0;       // bound - target_risk

    std::string to_json(bool estimated = false) const;
};

// Five-term target-risk upper bound evaluated on exact joints.
BoundReport target_risk_bound(const DiscreteJoint& joint_source, const DiscreteJoint& joint_selected,
                           const DiscreteJoint& joint_target, const LabelSpaces& spaces);

// Empirical joint from paired (truth, prediction) sequences; sample estimate,
// for reporting only.
DiscreteJoint estimate_joint(const std::vector<int>& truth, const std::vector<int>& predictions);

} // namespace gflowda
