#include "gflowda/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gflowda {

using nlohmann::json;

std::string to_string(DomainRole role) {
    switch (role) {
        case DomainRole::source: return "source";
        case DomainRole::target: return "target";
        case DomainRole::selected: return "selected";
    }
    return "target";
}

DomainRole domain_role_from_string(const std::string& s) {
    if (s == "source") return DomainRole::source;
    if (s == "target") return DomainRole::target;
    if (s == "selected") return DomainRole::selected;
    throw std::invalid_argument("unknown domain role: " + s);
}

std::optional<int> Domain::visible_label(std::size_t i) const {
    if (role == DomainRole::target) return std::nullopt;
    return examples.at(i).label;
}

int Domain::oracle_label(std::size_t i) const {
    const auto& label = examples.at(i).label;
    if (!label.has_value())
        throw std::runtime_error("oracle_label: example " + std::to_string(i) + " has no ground truth");
    return *label;
}

std::vector<std::vector<double>> Domain::feature_matrix() const {
    std::vector<std::vector<double>> m;
    m.reserve(examples.size());
    for (const auto& ex : examples) m.push_back(ex.features);
    return m;
}

std::set<int> ScenarioSpec::source_label_set() const {
    std::set<int> s(common_labels.begin(), common_labels.end());
    s.insert(source_private.begin(), source_private.end());
    return s;
}

std::set<int> ScenarioSpec::target_label_set() const {
    std::set<int> s(common_labels.begin(), common_labels.end());
    s.insert(target_private.begin(), target_private.end());
    return s;
}

namespace {

void check_disjoint(const std::vector<int>& a, const std::vector<int>& b, const std::string& what) {
    std::set<int> sa(a.begin(), a.end());
    for (int x : b)
        if (sa.count(x)) throw std::invalid_argument("label sets not disjoint (" + what + "): label " + std::to_string(x));
}

void check_priors(const LabelDistribution& priors, const std::set<int>& support, const std::string& what) {
    priors.validate();
    if (priors.probs.size() != support.size())
        throw std::invalid_argument(what + " priors support does not match the label set");
    for (const auto& [label, p] : priors.probs) {
        if (!support.count(label))
            throw std::invalid_argument(what + " priors mention unknown label " + std::to_string(label));
        if (p <= 0.0)
            throw std::invalid_argument(what + " priors must be strictly positive on their support");
    }
}

} // namespace

void ScenarioSpec::validate() const {
    if (feature_dim <= 0) throw std::invalid_argument("feature_dim must be positive");
    if (source_count <= 0 || target_count <= 0) throw std::invalid_argument("sample counts must be positive");
    check_disjoint(common_labels, source_private, "common vs source_private");
    check_disjoint(common_labels, target_private, "common vs target_private");
    check_disjoint(source_private, target_private, "source_private vs target_private");
    check_priors(source_priors, source_label_set(), "source");
    check_priors(target_priors, target_label_set(), "target");
    for (const auto& [key, mean] : class_means) {
        if (static_cast<int>(mean.size()) != feature_dim)
            throw std::invalid_argument("class mean for (" + key.first + "," + std::to_string(key.second) +
                                        ") has wrong dimension");
    }
    for (const auto& [key, scale] : class_scales) {
        if (!(scale > 0.0))
            throw std::invalid_argument("class scale for (" + key.first + "," + std::to_string(key.second) +
                                        ") must be positive");
    }
    // every (domain,label) pair needs a mean and a scale
    auto require = [&](const std::string& dom, int label) {
        if (!class_means.count({dom, label}))
            throw std::invalid_argument("missing class mean for (" + dom + "," + std::to_string(label) + ")");
        if (!class_scales.count({dom, label}))
            throw std::invalid_argument("missing class scale for (" + dom + "," + std::to_string(label) + ")");
    };
    for (const auto& [label, p] : source_priors.probs) require("source", label);
    for (const auto& [label, p] : target_priors.probs) require("target", label);
}

namespace {

json priors_to_json(const LabelDistribution& d) {
    json out = json::object();
    for (const auto& [label, p] : d.probs) out[std::to_string(label)] = p;
    return out;
}

LabelDistribution priors_from_json(const json& j) {
    LabelDistribution d;
    for (auto it = j.begin(); it != j.end(); ++it) d.probs[std::stoi(it.key())] = it.value().get<double>();
    return d;
}

} // namespace

std::string ScenarioSpec::to_json() const {
    json j;
    j["feature_dim"] = feature_dim;
    j["common_labels"] = common_labels;
    j["source_private"] = source_private;
    j["target_private"] = target_private;
    j["source_priors"] = priors_to_json(source_priors);
    j["target_priors"] = priors_to_json(target_priors);
    json means = json::object();
    json scales = json::object();
    for (const std::string dom : {"source", "target"}) {
        json dm = json::object();
        json ds = json::object();
        for (const auto& [key, mean] : class_means)
            if (key.first == dom) dm[std::to_string(key.second)] = mean;
        for (const auto& [key, scale] : class_scales)
            if (key.first == dom) ds[std::to_string(key.second)] = scale;
        means[dom] = dm;
        scales[dom] = ds;
    }
    j["class_means"] = means;
    j["class_scales"] = scales;
    j["source_count"] = source_count;
    j["target_count"] = target_count;
    j["seed"] = seed;
    return j.dump(2);
}

ScenarioSpec ScenarioSpec::from_json(const std::string& text) {
    json j = json::parse(text);
    ScenarioSpec spec;
    spec.feature_dim = j.at("feature_dim").get<int>();
    spec.common_labels = j.at("common_labels").get<std::vector<int>>();
    spec.source_private = j.at("source_private").get<std::vector<int>>();
    spec.target_private = j.at("target_private").get<std::vector<int>>();
    spec.source_priors = priors_from_json(j.at("source_priors"));
    spec.target_priors = priors_from_json(j.at("target_priors"));
    for (const std::string dom : {"source", "target"}) {
        if (j.at("class_means").contains(dom))
            for (auto it = j["class_means"][dom].begin(); it != j["class_means"][dom].end(); ++it)
                spec.class_means[{dom, std::stoi(it.key())}] = it.value().get<std::vector<double>>();
        if (j.at("class_scales").contains(dom))
            for (auto it = j["class_scales"][dom].begin(); it != j["class_scales"][dom].end(); ++it)
                spec.class_scales[{dom, std::stoi(it.key())}] = it.value().get<double>();
    }
    spec.source_count = j.at("source_count").get<int>();
    spec.target_count = j.at("target_count").get<int>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    return spec;
}

ScenarioSpec ScenarioSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario spec: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

void ScenarioSpec::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write scenario spec: " + path);
    out << to_json() << "\n";
}

namespace {

// Largest-remainder apportionment of total over the priors: exact counts,
// no sampling noise, so empirical priors track the spec predictably.
std::map<int, int> apportion_counts(const LabelDistribution& priors, int total) {
    std::map<int, int> counts;
    std::vector<std::pair<double, int>> remainders; // (-remainder, label) for stable sort
    int assigned = 0;
    for (const auto& [label, p] : priors.probs) {
        double ideal = p * total;
        int base = static_cast<int>(std::floor(ideal));
        counts[label] = base;
        assigned += base;
        remainders.push_back({-(ideal - base), label});
    }
    std::sort(remainders.begin(), remainders.end());
    for (int i = 0; i < total - assigned; ++i) counts[remainders[i % remainders.size()].second] += 1;
    for (const auto& [label, c] : counts) {
        if (c == 0)
            throw std::invalid_argument("scenario spec rejected: label " + std::to_string(label) +
                                        " present in priors would receive zero samples");
    }
    return counts;
}

Domain realize_domain(const ScenarioSpec& spec, const std::string& dom_name, DomainRole role,
                      const LabelDistribution& priors, int total, Rng rng) {
    std::map<int, int> counts = apportion_counts(priors, total);
    Domain d;
    d.role = role;
    d.label_space = role == DomainRole::source ? spec.source_label_set() : spec.target_label_set();
    for (const auto& [label, count] : counts) {
        const auto& mean = spec.class_means.at({dom_name, label});
        double scale = spec.class_scales.at({dom_name, label});
        for (int i = 0; i < count; ++i) {
            Example ex;
            ex.features.resize(spec.feature_dim);
            for (int k = 0; k < spec.feature_dim; ++k) ex.features[k] = mean[k] + scale * rng.gaussian();
            ex.label = label;
            d.examples.push_back(std::move(ex));
        }
    }
    rng.shuffle(d.examples);
    return d;
}

} // namespace

std::pair<Domain, Domain> generate_scenario(const ScenarioSpec& spec) {
    spec.validate();
    Rng root(spec.seed);
    Domain source = realize_domain(spec, "source", DomainRole::source, spec.source_priors,
                                   spec.source_count, root.substream("scenario/source"));
    Domain target = realize_domain(spec, "target", DomainRole::target, spec.target_priors,
                                   spec.target_count, root.substream("scenario/target"));
    return {std::move(source), std::move(target)};
}

Domain apply_subsample_protocol(const Domain& domain, const std::map<int, double>& retain,
                                std::uint64_t seed) {
    for (const auto& [label, fraction] : retain) {
        if (!(fraction > 0.0) || fraction > 1.0)
            throw std::invalid_argument("retain fraction for label " + std::to_string(label) +
                                        " must be in (0,1]");
        if (!domain.label_space.count(label))
            throw std::invalid_argument("retain lists unknown label " + std::to_string(label));
    }
    Rng rng(seed);
    std::vector<bool> keep(domain.examples.size(), true);
    for (const auto& [label, fraction] : retain) {
        std::vector<std::size_t> indices;
        for (std::size_t i = 0; i < domain.examples.size(); ++i)
            if (domain.examples[i].label && *domain.examples[i].label == label) indices.push_back(i);
        std::size_t want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(indices.size())));
        Rng sub = rng.substream("subsample/" + std::to_string(label));
        sub.shuffle(indices);
        for (std::size_t i = want; i < indices.size(); ++i) keep[indices[i]] = false;
    }
    Domain out;
    out.role = domain.role;
    out.label_space = domain.label_space;
    for (std::size_t i = 0; i < domain.examples.size(); ++i)
        if (keep[i]) out.examples.push_back(domain.examples[i]);
    return out;
}

LabelDistribution empirical_label_distribution(const Domain& domain) {
    if (domain.examples.empty()) throw std::invalid_argument("empirical_label_distribution: empty domain");
    std::map<int, int> counts;
    for (const auto& ex : domain.examples) {
        if (!ex.label) throw std::invalid_argument("empirical_label_distribution: unlabeled example");
        counts[*ex.label] += 1;
    }
    LabelDistribution d;
    double total = static_cast<double>(domain.examples.size());
    for (const auto& [label, c] : counts) d.probs[label] = c / total;
    return d;
}

namespace {

std::string fmt_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void save_domain_csv(const Domain& domain, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write domain csv: " + path);
    int dim = domain.feature_dim();
    out << "label";
    for (int k = 0; k < dim; ++k) out << ",f" << k;
    out << "\n";
    for (const auto& ex : domain.examples) {
        if (ex.label) out << *ex.label;
        for (double v : ex.features) out << "," << fmt_full(v);
        out << "\n";
    }
}

Domain load_domain_csv(const std::string& path, DomainRole role) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open domain csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("domain csv is empty: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("label", 0) != 0)
        throw std::runtime_error("domain csv missing label column header: " + path);
    int dim = -1;
    {
        int commas = static_cast<int>(std::count(line.begin(), line.end(), ','));
        dim = commas;
    }
    Domain d;
    d.role = role;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        Example ex;
        bool first = true;
        while (std::getline(ss, cell, ',')) {
            if (first) {
                first = false;
                if (!cell.empty()) {
                    std::size_t pos = 0;
                    int label = std::stoi(cell, &pos);
                    if (pos != cell.size()) throw std::runtime_error("non-numeric label at row " + std::to_string(row));
                    ex.label = label;
                } else if (role != DomainRole::target) {
                    throw std::runtime_error("missing label at row " + std::to_string(row) + " for a labeled role");
                }
                continue;
            }
            std::size_t pos = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                throw std::runtime_error("non-numeric cell at row " + std::to_string(row));
            }
            if (pos != cell.size()) throw std::runtime_error("non-numeric cell at row " + std::to_string(row));
            ex.features.push_back(v);
        }
        if (static_cast<int>(ex.features.size()) != dim)
            throw std::runtime_error("dimension mismatch at row " + std::to_string(row) + ": expected " +
                                     std::to_string(dim) + " features, got " + std::to_string(ex.features.size()));
        if (ex.label) d.label_space.insert(*ex.label);
        d.examples.push_back(std::move(ex));
    }
    if (d.examples.empty()) throw std::runtime_error("domain csv has no data rows: " + path);
    return d;
}

} // namespace gflowda
