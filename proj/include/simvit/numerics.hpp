#pragma once

#include <string>

#include "simvit/tape.hpp"
#include "simvit/tensor.hpp"

namespace simvit {

inline constexpr double kLayerNormEps = 1e-5;

template <Real T>
struct LinearParams {
    Parameter<T> weight;  // d_in x d_out
    Parameter<T> bias;    // d_out

    std::size_t in_features() const { return weight.value.dim(0); }
    std::size_t out_features() const { return weight.value.dim(1); }
};

template <Real T>
struct LayerNormParams {
    Parameter<T> gamma;
    Parameter<T> beta;
};

// Zero weights and bias; the model builder initializes them afterwards.
template <Real T>
LinearParams<T> make_linear(const std::string& name, std::size_t in, std::size_t out);

// gamma = 1, beta = 0.
template <Real T>
LayerNormParams<T> make_layer_norm(const std::string& name, std::size_t channels);

// a[m x k] . b[k x n]
template <Real T>
Var matmul(Tape<T>& tape, Var a, Var b);

// x[... x d_in] . w[d_in x d_out] + b, bias broadcast over leading extents.
template <Real T>
Var linear(Tape<T>& tape, Var x, Var w, Var b);

template <Real T>
Var linear(Tape<T>& tape, Var x, const LinearParams<T>& p) {
    return linear(tape, x, tape.param(p.weight), tape.param(p.bias));
}

// Max-subtracted softmax over the last axis. Throws NumericError on
// non-finite input.
template <Real T>
Var softmax_lastdim(Tape<T>& tape, Var x);

// Per last-axis slice: (x - mean) / sqrt(var + eps) * gamma + beta, with
// population variance.
template <Real T>
Var layer_norm(Tape<T>& tape, Var x, Var gamma, Var beta, double eps = kLayerNormEps);

template <Real T>
Var layer_norm(Tape<T>& tape, Var x, const LayerNormParams<T>& p) {
    return layer_norm(tape, x, tape.param(p.gamma), tape.param(p.beta));
}

// Exact erf form x * Phi(x).
template <Real T>
Var gelu(Tape<T>& tape, Var x);

// Per-channel 3x3 convolution over an H x W x C map, zero padding 1,
// stride 1. kernel is 3 x 3 x C, bias is C.
template <Real T>
Var depthwise_conv3x3(Tape<T>& tape, Var x, Var kernel, Var bias);

// H x W x C -> (H+2p) x (W+2p) x C with an exact-zero border.
template <Real T>
Var zero_pad2d(Tape<T>& tape, Var x, std::size_t pad);

// H x W x C -> C, mean over positions.
template <Real T>
Var global_avg_pool(Tape<T>& tape, Var x);

template <Real T>
Var add(Tape<T>& tape, Var a, Var b);

template <Real T>
Var reshape(Tape<T>& tape, Var x, Shape shape);

// sum(x * weights) as a 1-element tensor; weights are constant.
template <Real T>
Var weighted_sum(Tape<T>& tape, Var x, const Tensor<T>& weights);

}  // namespace simvit
