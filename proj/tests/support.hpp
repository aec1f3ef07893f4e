#pragma once

// Test helpers and loop oracles. The oracles are deliberately written as
// plain index loops over std::vector so they share nothing with the
// library kernels they check.

#include <cmath>
#include <functional>
#include <vector>

#include "simvit/model.hpp"
#include "simvit/random.hpp"

namespace simvit::test {

using D = double;
using Vec = std::vector<double>;

inline Tensor<D> random_tensor(SplitMix64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor<D> t(std::move(shape));
    for (D& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

inline void randomize(Parameter<D>& p, SplitMix64& rng, double scale = 0.5) {
    for (D& v : p.value.data()) v = rng.uniform(-scale, scale);
}

inline void randomize(LinearParams<D>& p, SplitMix64& rng, double scale = 0.5) {
    randomize(p.weight, rng, scale);
    randomize(p.bias, rng, scale);
}

inline void randomize(AttentionParams<D>& a, SplitMix64& rng, double scale = 0.5) {
    for (auto* l : {&a.q, &a.k, &a.v, &a.o}) randomize(*l, rng, scale);
}

// Evaluates a graph on a non-recording tape.
template <Real T = D, typename Fn>
Tensor<T> eval(Fn&& fn) {
    Tape<T> tape(false);
    return tape.value(fn(tape));
}

inline double max_abs_diff(const Tensor<D>& a, const Vec& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline Vec to_vec(const Tensor<D>& t) { return Vec(t.data().begin(), t.data().end()); }

// c[m x n] = a[m x k] b[k x n]
inline Vec oracle_matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n) {
    Vec c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
            c[i * n + j] = s;
        }
    return c;
}

inline Vec oracle_linear(const Vec& x, const Vec& w, const Vec& b, std::size_t rows, std::size_t in, std::size_t out) {
    Vec y = oracle_matmul(x, w, rows, in, out);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < out; ++j) y[r * out + j] += b[j];
    return y;
}

inline Vec oracle_softmax(const Vec& x) {
    double m = x[0];
    for (double v : x) m = std::max(m, v);
    Vec e(x.size());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += e[i] = std::exp(x[i] - m);
    for (double& v : e) v /= s;
    return e;
}

// 3x3 depthwise convolution, zero padding 1, as six nested loops.
inline Vec oracle_dwconv(const Vec& x, const Vec& k, const Vec& b, std::size_t H, std::size_t W, std::size_t C) {
    Vec y(H * W * C, 0.0);
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j)
            for (std::size_t c = 0; c < C; ++c) {
                double s = b[c];
                for (int di = -1; di <= 1; ++di)
                    for (int dj = -1; dj <= 1; ++dj) {
                        const long ii = long(i) + di, jj = long(j) + dj;
                        if (ii < 0 || jj < 0 || ii >= long(H) || jj >= long(W)) continue;
                        s += x[(ii * W + jj) * C + c] * k[((di + 1) * 3 + (dj + 1)) * C + c];
                    }
                y[(i * W + j) * C + c] = s;
            }
    return y;
}

// Scaled dot-product attention for one query row.
inline Vec oracle_attend(const Vec& q, const std::vector<Vec>& keys, const std::vector<Vec>& values,
                         const Vec* bias = nullptr) {
    const std::size_t d = q.size();
    Vec logits(keys.size());
    for (std::size_t r = 0; r < keys.size(); ++r) {
        double s = 0.0;
        for (std::size_t t = 0; t < d; ++t) s += q[t] * keys[r][t];
        logits[r] = s / std::sqrt(double(d)) + (bias ? (*bias)[r] : 0.0);
    }
    const Vec w = oracle_softmax(logits);
    Vec out(values[0].size(), 0.0);
    for (std::size_t r = 0; r < values.size(); ++r)
        for (std::size_t t = 0; t < out.size(); ++t) out[t] += w[r] * values[r][t];
    return out;
}

inline Vec project(const Vec& token, const LinearParams<D>& p) {
    const std::size_t in = p.weight.value.dim(0), out = p.weight.value.dim(1);
    return oracle_linear(token, to_vec(p.weight.value), to_vec(p.bias.value), 1, in, out);
}

// Multi-head attention of one query token over a list of context tokens,
// heads split over contiguous channel blocks, followed by the output map.
inline Vec oracle_token_attention(const Vec& query_token, const std::vector<Vec>& context, const AttentionParams<D>& a,
                                  const Vec* bias = nullptr) {
    const std::size_t d = query_token.size(), hd = d / a.heads;
    const Vec q = project(query_token, a.q);
    std::vector<Vec> ks, vs;
    for (const Vec& t : context) {
        ks.push_back(project(t, a.k));
        vs.push_back(project(t, a.v));
    }
    Vec concat(d, 0.0);
    for (std::size_t h = 0; h < a.heads; ++h) {
        Vec qh(q.begin() + h * hd, q.begin() + (h + 1) * hd);
        std::vector<Vec> kh, vh;
        for (std::size_t r = 0; r < ks.size(); ++r) {
            kh.emplace_back(ks[r].begin() + h * hd, ks[r].begin() + (h + 1) * hd);
            vh.emplace_back(vs[r].begin() + h * hd, vs[r].begin() + (h + 1) * hd);
        }
        const Vec o = oracle_attend(qh, kh, vh, bias);
        std::copy(o.begin(), o.end(), concat.begin() + h * hd);
    }
    return project(concat, a.o);
}

inline Vec token(const Tensor<D>& map, std::size_t i, std::size_t j) {
    const std::size_t c = map.dim(2);
    return Vec(map.ptr() + (i * map.dim(1) + j) * c, map.ptr() + (i * map.dim(1) + j + 1) * c);
}

// Central attention with an odd k x k window padded by k / 2: the window of
// token (i, j) is its neighbourhood, with zero tokens outside the map.
inline Vec oracle_mcsa(const Tensor<D>& x, const AttentionParams<D>& a, std::size_t k) {
    const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
    const long r = long(k / 2);
    Vec out;
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            std::vector<Vec> window;
            for (long di = -r; di <= r; ++di)
                for (long dj = -r; dj <= r; ++dj) {
                    const long ii = long(i) + di, jj = long(j) + dj;
                    const bool inside = ii >= 0 && jj >= 0 && ii < long(H) && jj < long(W);
                    window.push_back(inside ? token(x, ii, jj) : Vec(C, 0.0));
                }
            const Vec o = oracle_token_attention(token(x, i, j), window, a);
            out.insert(out.end(), o.begin(), o.end());
        }
    return out;
}

inline Vec oracle_msa(const Tensor<D>& x, const AttentionParams<D>& a) {
    const std::size_t H = x.dim(0), W = x.dim(1);
    std::vector<Vec> tokens;
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) tokens.push_back(token(x, i, j));
    Vec out;
    for (std::size_t n = 0; n < tokens.size(); ++n) {
        Vec bias_row;
        if (a.pos_bias) {
            bias_row.assign(a.pos_bias->ptr() + n * tokens.size(), a.pos_bias->ptr() + (n + 1) * tokens.size());
        }
        const Vec o = oracle_token_attention(tokens[n], tokens, a, a.pos_bias ? &bias_row : nullptr);
        out.insert(out.end(), o.begin(), o.end());
    }
    return out;
}

inline Vec oracle_layer_norm(const Vec& x, const Vec& gamma, const Vec& beta, std::size_t C, double eps = 1e-5) {
    Vec y(x.size());
    for (std::size_t r = 0; r < x.size() / C; ++r) {
        double mean = 0.0, var = 0.0;
        for (std::size_t c = 0; c < C; ++c) mean += x[r * C + c];
        mean /= double(C);
        for (std::size_t c = 0; c < C; ++c) var += (x[r * C + c] - mean) * (x[r * C + c] - mean);
        var /= double(C);
        for (std::size_t c = 0; c < C; ++c)
            y[r * C + c] = (x[r * C + c] - mean) / std::sqrt(var + eps) * gamma[c] + beta[c];
    }
    return y;
}

}  // namespace simvit::test
