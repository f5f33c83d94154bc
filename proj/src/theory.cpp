#include "gflowda/theory.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace gflowda {

double DiscreteJoint::mass(int y, int yhat) const {
    auto row = p.find(y);
    if (row == p.end()) return 0.0;
    auto cell = row->second.find(yhat);
    return cell == row->second.end() ? 0.0 : cell->second;
}

double DiscreteJoint::marginal(int y) const {
    auto row = p.find(y);
    if (row == p.end()) return 0.0;
    double acc = 0.0;
    for (const auto& [yhat, v] : row->second) acc += v;
    return acc;
}

double DiscreteJoint::conditional(int yhat, int y) const {
    double gamma = marginal(y);
    if (gamma <= 0.0)
        throw std::invalid_argument("conditional undefined: P(Y=" + std::to_string(y) + ") = 0");
    return mass(y, yhat) / gamma;
}

double DiscreteJoint::total() const {
    double acc = 0.0;
    for (const auto& [y, row] : p)
        for (const auto& [yhat, v] : row) acc += v;
    return acc;
}

std::set<int> DiscreteJoint::label_support() const {
    std::set<int> s;
    for (const auto& [y, row] : p)
        if (marginal(y) > 0.0) s.insert(y);
    return s;
}

std::set<int> DiscreteJoint::prediction_slots() const {
    std::set<int> s;
    for (const auto& [y, row] : p)
        for (const auto& [yhat, v] : row) s.insert(yhat);
    return s;
}

LabelDistribution DiscreteJoint::label_marginals() const {
    LabelDistribution d;
    for (const auto& [y, row] : p) {
        double m = marginal(y);
        if (m > 0.0) d.probs[y] = m;
    }
    return d;
}

void DiscreteJoint::validate(double tol) const {
    for (const auto& [y, row] : p)
        for (const auto& [yhat, v] : row)
            if (!(v >= 0.0) || !std::isfinite(v))
                throw std::invalid_argument("joint has a negative or non-finite cell");
    if (std::fabs(total() - 1.0) > tol)
        throw std::invalid_argument("joint mass sums to " + std::to_string(total()));
}

double ber(const DiscreteJoint& joint, const std::set<int>& label_subset) {
    double worst = 0.0;
    for (int j : label_subset) {
        double gamma = joint.marginal(j);
        if (gamma <= 0.0)
            throw std::invalid_argument("ber: class " + std::to_string(j) + " has zero probability");
        double err = 1.0 - joint.conditional(j, j);
        worst = std::max(worst, err);
    }
    return worst;
}

double ceg(const DiscreteJoint& a, const DiscreteJoint& b, const std::set<int>& label_subset) {
    std::set<int> slots = a.prediction_slots();
    for (int s : b.prediction_slots()) slots.insert(s);
    double worst = 0.0;
    for (int j : label_subset) {
        if (a.marginal(j) <= 0.0 || b.marginal(j) <= 0.0)
            throw std::invalid_argument("ceg: class " + std::to_string(j) + " has zero probability");
        for (int i : slots) {
            if (i == j) continue;
            worst = std::max(worst, std::fabs(a.conditional(i, j) - b.conditional(i, j)));
        }
    }
    return worst;
}

double risk(const DiscreteJoint& joint, const std::set<int>& label_subset) {
    double acc = 0.0;
    for (int j : label_subset) {
        auto row = joint.p.find(j);
        if (row == joint.p.end()) continue;
        for (const auto& [i, v] : row->second)
            if (i != j) acc += v;
    }
    return acc;
}

double risk(const DiscreteJoint& joint) { return risk(joint, joint.label_support()); }

BoundReport target_risk_bound(const DiscreteJoint& joint_source, const DiscreteJoint& joint_selected,
                           const DiscreteJoint& joint_target, const LabelSpaces& spaces) {
    BoundReport r;
    double k = static_cast<double>(spaces.common.size());
    double v = static_cast<double>(spaces.selected.size());

    LabelDistribution ps = joint_source.label_marginals();
    LabelDistribution pl = joint_selected.label_marginals();
    LabelDistribution pt = joint_target.label_marginals();

    r.source_common_risk = risk(joint_source, spaces.common);
    r.selected_risk = risk(joint_selected, spaces.selected);

    r.l1_source_target = l1_label_distance(ps, pt, spaces.common);
    r.ber_source_common = ber(joint_source, spaces.common);
    r.ceg_source_target = k > 1.0 ? ceg(joint_source, joint_target, spaces.common) : 0.0;
    r.delta_source_target =
        r.l1_source_target * r.ber_source_common + 2.0 * (k - 1.0) * r.ceg_source_target;

    r.l1_selected_target = l1_label_distance(pl, pt, spaces.selected);
    r.ber_selected = ber(joint_selected, spaces.selected);
    r.ceg_selected_target = v > 1.0 ? ceg(joint_selected, joint_target, spaces.selected) : 0.0;
    r.delta_selected_target =
        r.l1_selected_target * r.ber_selected + 2.0 * (v - 1.0) * r.ceg_selected_target;

    r.target_private_term = spaces.target_private.empty() ? 0.0 : ber(joint_target, spaces.target_private);

    r.bound = r.source_common_risk + r.selected_risk + r.delta_source_target +
              r.delta_selected_target + r.target_private_term;
    r.target_risk = risk(joint_target);
    r.slack = r.bound - r.target_risk;
    return r;
}

std::string BoundReport::to_json(bool estimated) const {
    nlohmann::json j;
    j["semantics"] = estimated ? "estimate" : "exact";
    j["terms"]["source_common_risk"] = source_common_risk;
    j["terms"]["selected_risk"] = selected_risk;
    j["terms"]["delta_source_target"] = delta_source_target;
    j["terms"]["delta_selected_target"] = delta_selected_target;
    j["terms"]["target_private_term"] = target_private_term;
    j["factors"]["l1_source_target"] = l1_source_target;
    j["factors"]["ber_source_common"] = ber_source_common;
    j["factors"]["ceg_source_target"] = ceg_source_target;
    j["factors"]["l1_selected_target"] = l1_selected_target;
    j["factors"]["ber_selected"] = ber_selected;
    j["factors"]["ceg_selected_target"] = ceg_selected_target;
    j["bound"] = bound;
    j["target_risk"] = target_risk;
    j["slack"] = slack;
    return j.dump(2);
}

DiscreteJoint estimate_joint(const std::vector<int>& truth, const std::vector<int>& predictions) {
    if (truth.size() != predictions.size())
        throw std::invalid_argument("estimate_joint: length mismatch");
    if (truth.empty()) throw std::invalid_argument("estimate_joint: empty inputs");
    DiscreteJoint joint;
    double w = 1.0 / static_cast<double>(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) joint.p[truth[i]][predictions[i]] += w;
    return joint;
}

} // namespace gflowda
