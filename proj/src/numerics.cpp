#include "simvit/numerics.hpp"

#include <cmath>
#include <numbers>

#include "gemm.hpp"

namespace simvit {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw DimensionError(what);
}

template <Real T>
void require_map(const Tensor<T>& x, const char* op) {
    require(x.rank() == 3, std::string(op) + " expects an H x W x C map, got " + shape_string(x.shape()));
}

}  // namespace

template <Real T>
LinearParams<T> make_linear(const std::string& name, std::size_t in, std::size_t out) {
    return {Parameter<T>(name + ".weight", Tensor<T>({in, out})),
            Parameter<T>(name + ".bias", Tensor<T>({out}))};
}

template <Real T>
LayerNormParams<T> make_layer_norm(const std::string& name, std::size_t channels) {
    return {Parameter<T>(name + ".gamma", Tensor<T>::full({channels}, T(1))),
            Parameter<T>(name + ".beta", Tensor<T>({channels}))};
}

template <Real T>
Var matmul(Tape<T>& tape, Var a, Var b) {
    const auto& A = tape.value(a);
    const auto& B = tape.value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
        throw DimensionError("matmul: cannot multiply " + shape_string(A.shape()) + " by " +
                             shape_string(B.shape()));
    }
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor<T> C({m, n});
    detail::gemm_nn(m, k, n, A.ptr(), B.ptr(), C.ptr());
    return tape.record(std::move(C), {a, b}, [a, b, m, k, n](Tape<T>& t, Var, const Tensor<T>& g) {
        if (t.requires_grad(a)) detail::gemm_nt(m, n, k, g.ptr(), t.value(b).ptr(), t.grad_slot(a).ptr());
        if (t.requires_grad(b)) detail::gemm_tn(m, k, n, t.value(a).ptr(), g.ptr(), t.grad_slot(b).ptr());
    });
}

template <Real T>
Var linear(Tape<T>& tape, Var x, Var w, Var b) {
    const auto& X = tape.value(x);
    const auto& W = tape.value(w);
    const auto& B = tape.value(b);
    require(W.rank() == 2, "linear: weight must be 2-D, got " + shape_string(W.shape()));
    require(X.rank() >= 1 && X.shape().back() == W.dim(0),
            "linear: input " + shape_string(X.shape()) + " does not match weight " + shape_string(W.shape()));
    require(B.rank() == 1 && B.dim(0) == W.dim(1),
            "linear: bias " + shape_string(B.shape()) + " does not match weight " + shape_string(W.shape()));
    const std::size_t din = W.dim(0), dout = W.dim(1), rows = X.size() / din;
    Shape out_shape = X.shape();
    out_shape.back() = dout;
    Tensor<T> Y(out_shape);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < dout; ++j) Y[r * dout + j] = B[j];
    detail::gemm_nn(rows, din, dout, X.ptr(), W.ptr(), Y.ptr());
    return tape.record(std::move(Y), {x, w, b}, [x, w, b, rows, din, dout](Tape<T>& t, Var, const Tensor<T>& g) {
        if (t.requires_grad(x)) detail::gemm_nt(rows, dout, din, g.ptr(), t.value(w).ptr(), t.grad_slot(x).ptr());
        if (t.requires_grad(w)) detail::gemm_tn(rows, din, dout, t.value(x).ptr(), g.ptr(), t.grad_slot(w).ptr());
        if (t.requires_grad(b)) {
            T* db = t.grad_slot(b).ptr();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < dout; ++j) db[j] += g[r * dout + j];
        }
    });
}

template <Real T>
Var softmax_lastdim(Tape<T>& tape, Var x) {
    const auto& X = tape.value(x);
    require(X.rank() >= 1 && X.shape().back() >= 1, "softmax: empty last axis");
    if (!all_finite(X)) throw NumericError("softmax: non-finite input");
    const std::size_t n = X.shape().back(), rows = X.size() / n;
    Tensor<T> S(X.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = X.ptr() + r * n;
        T* out = S.ptr() + r * n;
        T mx = in[0];
        for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
        T sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = std::exp(in[i] - mx);
            sum += out[i];
        }
        for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
    }
    return tape.record(std::move(S), {x}, [x, n, rows](Tape<T>& t, Var self, const Tensor<T>& g) {
        const auto& s = t.value(self);
        T* dx = t.grad_slot(x).ptr();
        for (std::size_t r = 0; r < rows; ++r) {
            const T* sr = s.ptr() + r * n;
            const T* gr = g.ptr() + r * n;
            T dot = 0;
            for (std::size_t i = 0; i < n; ++i) dot += sr[i] * gr[i];
            for (std::size_t i = 0; i < n; ++i) dx[r * n + i] += sr[i] * (gr[i] - dot);
        }
    });
}

template <Real T>
Var layer_norm(Tape<T>& tape, Var x, Var gamma, Var beta, double eps) {
    const auto& X = tape.value(x);
    const auto& G = tape.value(gamma);
    const auto& Bt = tape.value(beta);
    require(X.rank() >= 1 && X.shape().back() >= 1, "layer_norm: empty last axis");
    const std::size_t c = X.shape().back(), rows = X.size() / c;
    require(G.shape() == Shape{c} && Bt.shape() == Shape{c},
            "layer_norm: affine params " + shape_string(G.shape()) + "/" + shape_string(Bt.shape()) +
                " do not match input " + shape_string(X.shape()));
    Tensor<T> Y(X.shape());
    // normalized values and inverse std, kept for the backward pass
    Tensor<T> xhat(X.shape());
    Tensor<T> inv_std({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = X.ptr() + r * c;
        T mean = 0;
        for (std::size_t i = 0; i < c; ++i) mean += in[i];
        mean /= T(c);
        T var = 0;
        for (std::size_t i = 0; i < c; ++i) var += (in[i] - mean) * (in[i] - mean);
        var /= T(c);
        const T istd = T(1) / std::sqrt(var + T(eps));
        inv_std[r] = istd;
        for (std::size_t i = 0; i < c; ++i) {
            const T h = (in[i] - mean) * istd;
            xhat[r * c + i] = h;
            Y[r * c + i] = h * G[i] + Bt[i];
        }
    }
    return tape.record(
        std::move(Y), {x, gamma, beta},
        [x, gamma, beta, c, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](
            Tape<T>& t, Var, const Tensor<T>& g) {
            const auto& G = t.value(gamma);
            if (t.requires_grad(gamma) || t.requires_grad(beta)) {
                Tensor<T>& dg = t.grad_slot(gamma);
                Tensor<T>& db = t.grad_slot(beta);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < c; ++i) {
                        dg[i] += g[r * c + i] * xhat[r * c + i];
                        db[i] += g[r * c + i];
                    }
            }
            if (!t.requires_grad(x)) return;
            T* dx = t.grad_slot(x).ptr();
            for (std::size_t r = 0; r < rows; ++r) {
                T sum_dh = 0, sum_dh_h = 0;
                for (std::size_t i = 0; i < c; ++i) {
                    const T dh = g[r * c + i] * G[i];
                    sum_dh += dh;
                    sum_dh_h += dh * xhat[r * c + i];
                }
                const T mean_dh = sum_dh / T(c), mean_dh_h = sum_dh_h / T(c);
                for (std::size_t i = 0; i < c; ++i) {
                    const T dh = g[r * c + i] * G[i];
                    dx[r * c + i] += inv_std[r] * (dh - mean_dh - xhat[r * c + i] * mean_dh_h);
                }
            }
        });
}

template <Real T>
Var gelu(Tape<T>& tape, Var x) {
    const auto& X = tape.value(x);
    Tensor<T> Y(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) {
        const T v = X[i];
        Y[i] = v * T(0.5) * (T(1) + std::erf(v * (T(1) / std::numbers::sqrt2_v<T>)));
    }
    return tape.record(std::move(Y), {x}, [x](Tape<T>& t, Var, const Tensor<T>& g) {
        const auto& X = t.value(x);
        T* dx = t.grad_slot(x).ptr();
        const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * (T(1) / std::numbers::sqrt2_v<T>);
        for (std::size_t i = 0; i < X.size(); ++i) {
            const T v = X[i];
            const T cdf = T(0.5) * (T(1) + std::erf(v * (T(1) / std::numbers::sqrt2_v<T>)));
            const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
            dx[i] += g[i] * (cdf + v * pdf);
        }
    });
}

template <Real T>
Var depthwise_conv3x3(Tape<T>& tape, Var x, Var kernel, Var bias) {
    const auto& X = tape.value(x);
    const auto& K = tape.value(kernel);
    const auto& B = tape.value(bias);
    require_map(X, "depthwise_conv3x3");
    const std::size_t h = X.dim(0), w = X.dim(1), c = X.dim(2);
    require(K.shape() == Shape{3, 3, c},
            "depthwise_conv3x3: kernel " + shape_string(K.shape()) + " does not match input " + shape_string(X.shape()));
    require(B.shape() == Shape{c},
            "depthwise_conv3x3: bias " + shape_string(B.shape()) + " does not match input " + shape_string(X.shape()));
    Tensor<T> Y(X.shape());
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            T* out = Y.ptr() + (i * w + j) * c;
            for (std::size_t ch = 0; ch < c; ++ch) out[ch] = B[ch];
            for (std::size_t di = 0; di < 3; ++di) {
                if (i + di < 1 || i + di - 1 >= h) continue;
                for (std::size_t dj = 0; dj < 3; ++dj) {
                    if (j + dj < 1 || j + dj - 1 >= w) continue;
                    const T* in = X.ptr() + ((i + di - 1) * w + (j + dj - 1)) * c;
                    const T* kk = K.ptr() + (di * 3 + dj) * c;
                    for (std::size_t ch = 0; ch < c; ++ch) out[ch] += kk[ch] * in[ch];
                }
            }
        }
    return tape.record(std::move(Y), {x, kernel, bias}, [x, kernel, bias, h, w, c](Tape<T>& t, Var, const Tensor<T>& g) {
        const auto& X = t.value(x);
        const auto& K = t.value(kernel);
        T* dx = t.requires_grad(x) ? t.grad_slot(x).ptr() : nullptr;
        T* dk = t.requires_grad(kernel) ? t.grad_slot(kernel).ptr() : nullptr;
        if (t.requires_grad(bias)) {
            T* db = t.grad_slot(bias).ptr();
            for (std::size_t p = 0; p < h * w; ++p)
                for (std::size_t ch = 0; ch < c; ++ch) db[ch] += g[p * c + ch];
        }
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const T* go = g.ptr() + (i * w + j) * c;
                for (std::size_t di = 0; di < 3; ++di) {
                    if (i + di < 1 || i + di - 1 >= h) continue;
                    for (std::size_t dj = 0; dj < 3; ++dj) {
                        if (j + dj < 1 || j + dj - 1 >= w) continue;
                        const std::size_t src = ((i + di - 1) * w + (j + dj - 1)) * c;
                        const std::size_t tap = (di * 3 + dj) * c;
                        if (dx)
                            for (std::size_t ch = 0; ch < c; ++ch) dx[src + ch] += K[tap + ch] * go[ch];
                        if (dk)
                            for (std::size_t ch = 0; ch < c; ++ch) dk[tap + ch] += X[src + ch] * go[ch];
                    }
                }
            }
    });
}

template <Real T>
Var zero_pad2d(Tape<T>& tape, Var x, std::size_t pad) {
    const auto& X = tape.value(x);
    require_map(X, "zero_pad2d");
    const std::size_t h = X.dim(0), w = X.dim(1), c = X.dim(2);
    const std::size_t wp = w + 2 * pad;
    Tensor<T> Y({h + 2 * pad, wp, c});
    for (std::size_t i = 0; i < h; ++i)
        std::copy_n(X.ptr() + i * w * c, w * c, Y.ptr() + ((i + pad) * wp + pad) * c);
    return tape.record(std::move(Y), {x}, [x, h, w, c, pad, wp](Tape<T>& t, Var, const Tensor<T>& g) {
        T* dx = t.grad_slot(x).ptr();
        for (std::size_t i = 0; i < h; ++i) {
            const T* src = g.ptr() + ((i + pad) * wp + pad) * c;
            for (std::size_t k = 0; k < w * c; ++k) dx[i * w * c + k] += src[k];
        }
    });
}

template <Real T>
Var global_avg_pool(Tape<T>& tape, Var x) {
    const auto& X = tape.value(x);
    require_map(X, "global_avg_pool");
    const std::size_t n = X.dim(0) * X.dim(1), c = X.dim(2);
    require(n >= 1, "global_avg_pool: empty map");
    Tensor<T> Y({c});
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) Y[ch] += X[p * c + ch];
    for (std::size_t ch = 0; ch < c; ++ch) Y[ch] /= T(n);
    return tape.record(std::move(Y), {x}, [x, n, c](Tape<T>& t, Var, const Tensor<T>& g) {
        T* dx = t.grad_slot(x).ptr();
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t ch = 0; ch < c; ++ch) dx[p * c + ch] += g[ch] / T(n);
    });
}

template <Real T>
Var add(Tape<T>& tape, Var a, Var b) {
    const auto& A = tape.value(a);
    const auto& B = tape.value(b);
    require(A.shape() == B.shape(), "add: shapes " + shape_string(A.shape()) + " and " + shape_string(B.shape()) + " differ");
    Tensor<T> C = A;
    C += B;
    return tape.record(std::move(C), {a, b}, [a, b](Tape<T>& t, Var, const Tensor<T>& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

template <Real T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
    Tensor<T> y = tape.value(x).reshaped(std::move(shape));
    return tape.record(std::move(y), {x}, [x](Tape<T>& t, Var, const Tensor<T>& g) {
        t.accumulate(x, g.reshaped(t.value(x).shape()));
    });
}

template <Real T>
Var weighted_sum(Tape<T>& tape, Var x, const Tensor<T>& weights) {
    const auto& X = tape.value(x);
    require(X.shape() == weights.shape(),
            "weighted_sum: weights " + shape_string(weights.shape()) + " vs input " + shape_string(X.shape()));
    T s = 0;
    for (std::size_t i = 0; i < X.size(); ++i) s += X[i] * weights[i];
    return tape.record(Tensor<T>::scalar(s), {x}, [x, weights](Tape<T>& t, Var, const Tensor<T>& g) {
        T* dx = t.grad_slot(x).ptr();
        for (std::size_t i = 0; i < weights.size(); ++i) dx[i] += g[0] * weights[i];
    });
}

#define SIMVIT_INSTANTIATE(T)                                                               \
    template LinearParams<T> make_linear(const std::string&, std::size_t, std::size_t);    \
    template LayerNormParams<T> make_layer_norm(const std::string&, std::size_t);          \
    template Var matmul(Tape<T>&, Var, Var);                                                \
    template Var linear(Tape<T>&, Var, Var, Var);                                           \
    template Var softmax_lastdim(Tape<T>&, Var);                                            \
    template Var layer_norm(Tape<T>&, Var, Var, Var, double);                               \
    template Var gelu(Tape<T>&, Var);                                                       \
    template Var depthwise_conv3x3(Tape<T>&, Var, Var, Var);                                \
    template Var zero_pad2d(Tape<T>&, Var, std::size_t);                                    \
    template Var global_avg_pool(Tape<T>&, Var);                                            \
    template Var add(Tape<T>&, Var, Var);                                                   \
    template Var reshape(Tape<T>&, Var, Shape);                                             \
    template Var weighted_sum(Tape<T>&, Var, const Tensor<T>&);

SIMVIT_INSTANTIATE(float)
SIMVIT_INSTANTIATE(double)

}  // namespace simvit
