#include "gflowda/nn.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace gflowda {

using nlohmann::json;

void MlpSpec::validate() const {
    if (layer_sizes.size() < 2)
        throw std::invalid_argument("MlpSpec needs at least input and output sizes");
    for (int s : layer_sizes)
        if (s <= 0) throw std::invalid_argument("MlpSpec layer sizes must be positive");
}

Parameters Parameters::zeros_like(const MlpSpec& spec) {
    spec.validate();
    Parameters p;
    for (int l = 0; l < spec.layer_count(); ++l) {
        Layer layer;
        layer.in = spec.layer_sizes[l];
        layer.out = spec.layer_sizes[l + 1];
        layer.w.assign(static_cast<std::size_t>(layer.in) * layer.out, 0.0);
        layer.b.assign(layer.out, 0.0);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

Parameters Parameters::init(const MlpSpec& spec, Rng& rng) {
    Parameters p = zeros_like(spec);
    for (auto& layer : p.layers) {
        double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
        for (double& w : layer.w) w = rng.uniform(-bound, bound);
        for (double& b : layer.b) b = rng.uniform(-bound, bound);
    }
    return p;
}

void Parameters::fill(double value) {
    for (auto& layer : layers) {
        std::fill(layer.w.begin(), layer.w.end(), value);
        std::fill(layer.b.begin(), layer.b.end(), value);
    }
}

void Parameters::add_scaled(const Parameters& other, double scale) {
    if (other.layers.size() != layers.size()) throw std::invalid_argument("Parameters shape mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& a = layers[l];
        const auto& b = other.layers[l];
        if (a.w.size() != b.w.size() || a.b.size() != b.b.size())
            throw std::invalid_argument("Parameters shape mismatch in layer " + std::to_string(l));
        for (std::size_t i = 0; i < a.w.size(); ++i) a.w[i] += scale * b.w[i];
        for (std::size_t i = 0; i < a.b.size(); ++i) a.b[i] += scale * b.b[i];
    }
}

void Parameters::scale(double factor) {
    for (auto& layer : layers) {
        for (double& w : layer.w) w *= factor;
        for (double& b : layer.b) b *= factor;
    }
}

std::size_t Parameters::count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.w.size() + layer.b.size();
    return n;
}

double& Parameters::at_flat(std::size_t i) {
    for (auto& layer : layers) {
        if (i < layer.w.size()) return layer.w[i];
        i -= layer.w.size();
        if (i < layer.b.size()) return layer.b[i];
        i -= layer.b.size();
    }
    throw std::out_of_range("Parameters::at_flat");
}

double Parameters::at_flat(std::size_t i) const {
    return const_cast<Parameters*>(this)->at_flat(i);
}

std::string Parameters::to_json() const {
    json layers_json = json::array();
    for (const auto& layer : layers) {
        json lj;
        lj["in"] = layer.in;
        lj["out"] = layer.out;
        json rows = json::array();
        for (int r = 0; r < layer.out; ++r) {
            json row = json::array();
            for (int c = 0; c < layer.in; ++c) row.push_back(layer.w[static_cast<std::size_t>(r) * layer.in + c]);
            rows.push_back(row);
        }
        lj["w"] = rows;
        lj["b"] = layer.b;
        layers_json.push_back(lj);
    }
    json j;
    j["layers"] = layers_json;
    return j.dump();
}

Parameters Parameters::from_json(const std::string& text) {
    json j = json::parse(text);
    Parameters p;
    for (const auto& lj : j.at("layers")) {
        Parameters::Layer layer;
        layer.in = lj.at("in").get<int>();
        layer.out = lj.at("out").get<int>();
        layer.w.reserve(static_cast<std::size_t>(layer.in) * layer.out);
        for (const auto& row : lj.at("w"))
            for (const auto& v : row) layer.w.push_back(v.get<double>());
        layer.b = lj.at("b").get<std::vector<double>>();
        if (static_cast<int>(layer.b.size()) != layer.out ||
            layer.w.size() != static_cast<std::size_t>(layer.in) * layer.out)
            throw std::invalid_argument("parameter checkpoint has inconsistent shapes");
        p.layers.push_back(std::move(layer));
    }
    return p;
}

namespace {

double activate(double z, Activation a) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::tanh_fn: return std::tanh(z);
    }
    return z;
}

double activate_grad(double z, Activation a) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::tanh_fn: {
            double t = std::tanh(z);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

std::vector<double> apply_output_transform(const std::vector<double>& z, OutputTransform t) {
    switch (t) {
        case OutputTransform::identity: return z;
        case OutputTransform::sigmoid: {
            std::vector<double> out(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-z[i]));
            return out;
        }
        case OutputTransform::softmax: {
            double mx = z[0];
            for (double v : z) mx = std::max(mx, v);
            std::vector<double> out(z.size());
            double sum = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i) {
                out[i] = std::exp(z[i] - mx);
                sum += out[i];
            }
            for (double& v : out) v /= sum;
            return out;
        }
    }
    return z;
}

} // namespace

std::vector<double> forward(const MlpSpec& spec, const Parameters& params,
                            const std::vector<double>& input, Tape* tape) {
    if (static_cast<int>(input.size()) != spec.input_dim())
        throw std::invalid_argument("forward: input dimension mismatch");
    for (double v : input)
        if (!std::isfinite(v)) throw std::invalid_argument("forward: non-finite input");
    if (static_cast<int>(params.layers.size()) != spec.layer_count())
        throw std::invalid_argument("forward: parameter/spec layer count mismatch");

    std::vector<double> x = input;
    if (tape) {
        tape->inputs.clear();
        tape->preacts.clear();
    }
    int last = spec.layer_count() - 1;
    for (int l = 0; l <= last; ++l) {
        const auto& layer = params.layers[l];
        if (static_cast<int>(x.size()) != layer.in)
            throw std::invalid_argument("forward: layer " + std::to_string(l) + " input mismatch");
        std::vector<double> z(layer.out, 0.0);
        for (int r = 0; r < layer.out; ++r) {
            double acc = layer.b[r];
            const double* wrow = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
            for (int c = 0; c < layer.in; ++c) acc += wrow[c] * x[c];
            z[r] = acc;
        }
        if (tape) {
            tape->inputs.push_back(x);
            tape->preacts.push_back(z);
        }
        if (l < last) {
            std::vector<double> a(layer.out);
            for (int r = 0; r < layer.out; ++r) a[r] = activate(z[r], spec.activation);
            x = std::move(a);
        } else {
            x = apply_output_transform(z, spec.output);
        }
    }
    if (tape) tape->output = x;
    return x;
}

BackwardResult backward(const MlpSpec& spec, const Parameters& params, const Tape& tape,
                        const std::vector<double>& output_grad) {
    int last = spec.layer_count() - 1;
    if (static_cast<int>(tape.inputs.size()) != spec.layer_count() ||
        static_cast<int>(tape.preacts.size()) != spec.layer_count())
        throw std::invalid_argument("backward: tape does not match the spec");
    if (static_cast<int>(output_grad.size()) != spec.output_dim())
        throw std::invalid_argument("backward: output_grad dimension mismatch");

    BackwardResult result;
    result.param_grads = Parameters::zeros_like(spec);

    // transform gradient: dLoss/dPreact of the last layer
    std::vector<double> delta;
    const std::vector<double>& zlast = tape.preacts[last];
    switch (spec.output) {
        case OutputTransform::identity:
            delta = output_grad;
            break;
        case OutputTransform::sigmoid: {
            delta.resize(zlast.size());
            for (std::size_t i = 0; i < zlast.size(); ++i) {
                double y = tape.output[i];
                delta[i] = output_grad[i] * y * (1.0 - y);
            }
            break;
        }
        case OutputTransform::softmax: {
            delta.resize(zlast.size());
            double dot = 0.0;
            for (std::size_t i = 0; i < zlast.size(); ++i) dot += output_grad[i] * tape.output[i];
            for (std::size_t i = 0; i < zlast.size(); ++i)
                delta[i] = tape.output[i] * (output_grad[i] - dot);
            break;
        }
    }

    for (int l = last; l >= 0; --l) {
        const auto& layer = params.layers[l];
        auto& grads = result.param_grads.layers[l];
        const std::vector<double>& x = tape.inputs[l];
        if (static_cast<int>(delta.size()) != layer.out)
            throw std::invalid_argument("backward: stale tape at layer " + std::to_string(l));
        for (int r = 0; r < layer.out; ++r) {
            grads.b[r] += delta[r];
            double* grow = grads.w.data() + static_cast<std::size_t>(r) * layer.in;
            for (int c = 0; c < layer.in; ++c) grow[c] += delta[r] * x[c];
        }
        std::vector<double> prev(layer.in, 0.0);
        for (int r = 0; r < layer.out; ++r) {
            const double* wrow = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
            for (int c = 0; c < layer.in; ++c) prev[c] += delta[r] * wrow[c];
        }
        if (l > 0) {
            const std::vector<double>& zprev = tape.preacts[l - 1];
            delta.assign(zprev.size(), 0.0);
            for (std::size_t i = 0; i < zprev.size(); ++i)
                delta[i] = prev[i] * activate_grad(zprev[i], spec.activation);
        } else {
            result.input_grad = std::move(prev);
        }
    }
    return result;
}

CrossEntropyResult cross_entropy(const std::vector<double>& pred_probs, int true_label) {
    if (true_label < 0 || true_label >= static_cast<int>(pred_probs.size()))
        throw std::invalid_argument("cross_entropy: true label outside the prediction space");
    CrossEntropyResult r;
    r.grad.assign(pred_probs.size(), 0.0);
    double p = pred_probs[true_label];
    if (p < 1e-12) {
        p = 1e-12;
        r.clamped = true;
    }
    r.value = -std::log(p);
    r.grad[true_label] = -1.0 / p;
    return r;
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    if (s == "adadelta") return OptimizerKind::adadelta;
    throw std::invalid_argument("unknown optimizer: " + s);
}

std::string to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::adam: return "adam";
        case OptimizerKind::adadelta: return "adadelta";
    }
    return "adam";
}

namespace {

void check_finite(const Parameters& grads) {
    for (std::size_t l = 0; l < grads.layers.size(); ++l) {
        const auto& layer = grads.layers[l];
        for (double g : layer.w)
            if (!std::isfinite(g))
                throw std::runtime_error("non-finite gradient in layer " + std::to_string(l) + " weights");
        for (double g : layer.b)
            if (!std::isfinite(g))
                throw std::runtime_error("non-finite gradient in layer " + std::to_string(l) + " biases");
    }
}

} // namespace

void optimizer_step(const MlpSpec& spec, Parameters& params, const Parameters& grads,
                    OptimizerState& state, const OptimizerConfig& config) {
    check_finite(grads);
    if (!state.initialized) {
        state.m = Parameters::zeros_like(spec);
        state.v = Parameters::zeros_like(spec);
        state.step = 0;
        state.initialized = true;
    }
    // shapes may have grown (classifier head); extend moments with zeros
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto grow = [](std::vector<double>& v, std::size_t n) {
            if (v.size() < n) v.resize(n, 0.0);
        };
        grow(state.m.layers[l].w, params.layers[l].w.size());
        grow(state.m.layers[l].b, params.layers[l].b.size());
        grow(state.v.layers[l].w, params.layers[l].w.size());
        grow(state.v.layers[l].b, params.layers[l].b.size());
    }
    state.step += 1;

    auto update_block = [&](std::vector<double>& p, const std::vector<double>& g,
                            std::vector<double>& m, std::vector<double>& v) {
        switch (config.kind) {
            case OptimizerKind::sgd:
                for (std::size_t i = 0; i < p.size(); ++i) p[i] -= config.learning_rate * g[i];
                break;
            case OptimizerKind::adam: {
                double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
                double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
                for (std::size_t i = 0; i < p.size(); ++i) {
                    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                    double mhat = m[i] / bc1;
                    double vhat = v[i] / bc2;
                    p[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.eps);
                }
                break;
            }
            case OptimizerKind::adadelta:
                for (std::size_t i = 0; i < p.size(); ++i) {
                    m[i] = config.rho * m[i] + (1.0 - config.rho) * g[i] * g[i];
                    double dx = -std::sqrt(v[i] + config.adadelta_eps) /
                                std::sqrt(m[i] + config.adadelta_eps) * g[i];
                    v[i] = config.rho * v[i] + (1.0 - config.rho) * dx * dx;
                    p[i] += config.learning_rate * dx;
                }
                break;
        }
    };

    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        update_block(params.layers[l].w, grads.layers[l].w, state.m.layers[l].w, state.v.layers[l].w);
        update_block(params.layers[l].b, grads.layers[l].b, state.m.layers[l].b, state.v.layers[l].b);
    }
}

} // namespace gflowda
