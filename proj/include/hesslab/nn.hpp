#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hesslab/linalg.hpp"
#include "hesslab/rng.hpp"

namespace hesslab {

enum class Activation { relu, identity };
enum class LossKind { cross_entropy_softmax, mse_onehot };

std::string to_string(Activation a);
std::string to_string(LossKind l);
Activation activation_from_string(const std::string& s);
LossKind loss_from_string(const std::string& s);

// One dense layer: out = act(W in + b) (+ in when residual).
// W is fan_out x fan_in, stored row-major.
struct Layer {
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    Activation activation = Activation::relu;
    bool residual = false;
};

struct NetworkSpec {
    std::vector<Layer> layers;  // input -> output
    LossKind loss = LossKind::cross_entropy_softmax;

    // Dense MLP with relu hidden layers and an identity output layer. With
    // `residual_hidden`, every hidden layer whose fan_in equals fan_out gets a
    // skip connection (ResMLP).
    static NetworkSpec mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                           std::size_t output_dim, LossKind loss, bool residual_hidden = false);

    // Throws DimensionError when the layer chain or output layer is invalid.
    void validate() const;

    std::size_t depth() const { return layers.size(); }
    std::size_t input_dim() const { return layers.front().fan_in; }
    std::size_t output_dim() const { return layers.back().fan_out; }
    std::size_t param_count() const;
    // Offset of layer l's weights in the flat parameter vector; biases follow
    // immediately after fan_in * fan_out weights.
    std::size_t layer_offset(std::size_t l) const;
    std::size_t layer_size(std::size_t l) const;

    // Stable 64-bit digest of the architecture and loss, used to guard
    // cross-run comparisons of parameter vectors.
    std::uint64_t digest() const;
};

using ParamVector = Vector;

// Rows are samples. Classification batches carry `labels`; regression batches
// carry `targets` (rows x output_dim).
struct Batch {
    Matrix inputs;
    std::vector<std::size_t> labels;
    Matrix targets;

    std::size_t size() const { return inputs.rows(); }
    bool is_classification() const { return !labels.empty(); }
};

// theta(k): the parameters of the k layers closest to the output. Since the
// flat layout runs input -> output this is always the tail [begin, end).
struct ReducedParamView {
    std::size_t k = 0;
    std::size_t first_layer = 0;  // index in input -> output order
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
};

ReducedParamView make_view(const NetworkSpec& spec, std::size_t k);

ParamVector init_params(const NetworkSpec& spec, Rng& rng);

// Network outputs (rows x output_dim) before the loss.
Matrix forward(const NetworkSpec& spec, std::span<const double> theta, const Matrix& inputs);

double loss(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch);
ParamVector grad(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch);

struct LossGrad {
    double loss = 0.0;
    ParamVector grad;
};
LossGrad loss_and_grad(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch);

// Exact Hessian-vector product by a combined forward/R-forward and
// backward/R-backward pass.
ParamVector hvp(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch,
                std::span<const double> v);

// Hessian of the loss w.r.t. theta(k) only, applied to v_k (length view.size()).
Vector hvp_reduced(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch,
                   const ReducedParamView& view, std::span<const double> v_k);

}  // namespace hesslab
