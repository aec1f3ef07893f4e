#pragma once

#include <optional>
#include <string>

#include "simvit/numerics.hpp"

namespace simvit {

// Sliding window of side k over a map zero-padded by p, moved with stride s.
struct WindowSpec {
    std::size_t k = 3;
    std::size_t p = 1;
    std::size_t s = 1;

    void validate() const;
    bool operator==(const WindowSpec&) const = default;
};

struct GridSize {
    std::size_t h = 0;
    std::size_t w = 0;
    bool operator==(const GridSize&) const = default;
};

// Number of window placements along each axis:
//   floor((H + 2p - k) / s) + 1
// Throws GeometryError when the window does not fit in the padded map.
GridSize window_count(std::size_t height, std::size_t width, const WindowSpec& spec);

// Throws GeometryError unless `spec` maps an H x W token map onto exactly
// H x W windows whose centre cell is the token they belong to.
void require_resolution_preserving(std::size_t height, std::size_t width, const WindowSpec& spec);

template <Real T>
struct AttentionParams {
    LinearParams<T> q, k, v, o;
    std::size_t heads = 1;
    // Additive N x N logit bias for global attention; absent by default.
    std::optional<Tensor<T>> pos_bias;

    std::size_t width() const { return q.in_features(); }
    std::size_t head_width() const { return width() / heads; }
};

template <Real T>
AttentionParams<T> make_attention(const std::string& name, std::size_t width, std::size_t heads);

// H x W x C -> (H'W') x k^2 x C. Window (i, j) holds the k x k block of the
// zero-padded map starting at (i*s, j*s), cells in raster order.
template <Real T>
Var unfold_windows(Tape<T>& tape, Var x, const WindowSpec& spec);

// Central self-attention for one query: softmax(q K^T / sqrt(d)) V with
// q: 1 x d, K, V: n x d. The weight row is applied to V's rows.
template <Real T>
Var csa(Tape<T>& tape, Var q, Var keys, Var values);

// Single-head self-attention softmax(Q K^T / sqrt(d) + B) V.
// Q: N x d, K, V: M x d, pos_bias (optional): N x M.
template <Real T>
Var sa_global(Tape<T>& tape, Var queries, Var keys, Var values, const Tensor<T>* pos_bias = nullptr);

// Head-split kernels. Channel block [h*d/heads, (h+1)*d/heads) belongs to
// head h and each head is scaled by 1/sqrt(d/heads).
//
// central_attention: queries H x W x d; padded_keys/padded_values are the
// projections of the padded map, (H+2p) x (W+2p) x d.
template <Real T>
Var central_attention(Tape<T>& tape, Var queries, Var padded_keys, Var padded_values, std::size_t heads,
                      const WindowSpec& spec);

// multihead_attention: queries N x d, keys/values M x d, pos_bias N x M
// shared by all heads.
template <Real T>
Var multihead_attention(Tape<T>& tape, Var queries, Var keys, Var values, std::size_t heads,
                        const Tensor<T>* pos_bias = nullptr);

// Multi-head central self-attention over an H x W x d map. Each token's
// query attends over the k^2 projected tokens of its own window (padding
// cells included, projected like any other token); heads are concatenated
// and mixed by the output projection.
template <Real T>
Var mcsa(Tape<T>& tape, Var x, const AttentionParams<T>& params, const WindowSpec& spec);

// Conventional multi-head self-attention over all H*W tokens of a map.
template <Real T>
Var msa(Tape<T>& tape, Var x, const AttentionParams<T>& params);

// mcsa computed window by window from unfold_windows and csa. Slow; used to
// cross-check the fused path.
template <Real T>
Tensor<T> mcsa_reference(const Tensor<T>& x, const AttentionParams<T>& params, const WindowSpec& spec);

}  // namespace simvit
