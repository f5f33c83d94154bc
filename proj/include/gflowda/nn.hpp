#pragma once

#include <string>
#include <vector>

#include "gflowda/rng.hpp"

namespace gflowda {

enum class Activation { relu, tanh_fn };
enum class OutputTransform { identity, softmax, sigmoid };

struct MlpSpec {
    std::vector<int> layer_sizes; // at least {input, output}
    Activation activation = Activation::relu;
    OutputTransform output = OutputTransform::identity;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    int layer_count() const { return static_cast<int>(layer_sizes.size()) - 1; }
    void validate() const;
};

// Per-layer dense weights (row-major, out x in) and biases. Value semantics;
// also reused as the container for gradients and optimizer moments.
struct Parameters {
    struct Layer {
        int in = 0;
        int out = 0;
        std::vector<double> w; // out * in
        std::vector<double> b; // out
    };
    std::vector<Layer> layers;

    static Parameters zeros_like(const MlpSpec& spec);
    static Parameters init(const MlpSpec& spec, Rng& rng); // U[-1/sqrt(fan_in), +1/sqrt(fan_in)]

    void fill(double value);
    void add_scaled(const Parameters& other, double scale);
    void scale(double factor);
    std::size_t count() const;
    double& at_flat(std::size_t i);
    double at_flat(std::size_t i) const;

    std::string to_json() const;
    static Parameters from_json(const std::string& text);
};

// Activation record from one forward pass; consumed by backward.
struct Tape {
    std::vector<std::vector<double>> inputs;   // input to each affine layer
    std::vector<std::vector<double>> preacts;  // affine outputs per layer
    std::vector<double> output;                // post-transform output
};

std::vector<double> forward(const MlpSpec& spec, const Parameters& params,
                            const std::vector<double>& input, Tape* tape = nullptr);

struct BackwardResult {
    Parameters param_grads;
    std::vector<double> input_grad;
};

// Exact reverse-mode gradients of the forward map. output_grad is dLoss/dOutput.
BackwardResult backward(const MlpSpec& spec, const Parameters& params, const Tape& tape,
                        const std::vector<double>& output_grad);

struct CrossEntropyResult {
    double value = 0.0;
    std::vector<double> grad; // dLoss/dPredProbs
    bool clamped = false;     // probability at the true label hit the 1e-12 floor
};

CrossEntropyResult cross_entropy(const std::vector<double>& pred_probs, int true_label);

enum class OptimizerKind { sgd, adam, adadelta };

OptimizerKind optimizer_kind_from_string(const std::string& s);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 0.001;
    double beta1 = 0.9;   // adam
    double beta2 = 0.999; // adam
    double eps = 1e-8;    // adam
    double rho = 0.9;         // adadelta
    double adadelta_eps = 1e-6;
};

struct OptimizerState {
    Parameters m; // adam first moment / adadelta grad accumulator
    Parameters v; // adam second moment / adadelta update accumulator
    long step = 0;
    bool initialized = false;
};

// In-place update; throws on non-finite gradients, naming the block.
void optimizer_step(const MlpSpec& spec, Parameters& params, const Parameters& grads,
                    OptimizerState& state, const OptimizerConfig& config);

} // namespace gflowda
