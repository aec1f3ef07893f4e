#include "simvit/attention.hpp"

#include <cmath>
#include <sstream>

namespace simvit {

namespace {

std::string spec_string(const WindowSpec& spec) {
    std::ostringstream os;
    os << "(k=" << spec.k << ", p=" << spec.p << ", s=" << spec.s << ")";
    return os.str();
}

template <Real T>
void softmax_inplace(T* v, std::size_t n) {
    T mx = v[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
    T sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = std::exp(v[i] - mx);
        sum += v[i];
    }
    for (std::size_t i = 0; i < n; ++i) v[i] /= sum;
}

// Given softmax weights a and upstream dA, overwrite dA with dlogits.
template <Real T>
void softmax_backward_inplace(const T* a, T* da, std::size_t n) {
    T dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += a[i] * da[i];
    for (std::size_t i = 0; i < n; ++i) da[i] = a[i] * (da[i] - dot);
}

}  // namespace

void WindowSpec::validate() const {
    if (k < 1 || s < 1) throw GeometryError("window spec " + spec_string(*this) + " needs k >= 1 and s >= 1");
}

GridSize window_count(std::size_t height, std::size_t width, const WindowSpec& spec) {
    spec.validate();
    if (height + 2 * spec.p < spec.k || width + 2 * spec.p < spec.k) {
        throw GeometryError("window " + spec_string(spec) + " does not fit a padded " + std::to_string(height) +
                            "x" + std::to_string(width) + " map");
    }
    return {(height + 2 * spec.p - spec.k) / spec.s + 1, (width + 2 * spec.p - spec.k) / spec.s + 1};
}

void require_resolution_preserving(std::size_t height, std::size_t width, const WindowSpec& spec) {
    const GridSize grid = window_count(height, width, spec);
    if (grid.h != height || grid.w != width) {
        throw GeometryError("window " + spec_string(spec) + " maps " + std::to_string(height) + "x" +
                            std::to_string(width) + " tokens to " + std::to_string(grid.h) + "x" +
                            std::to_string(grid.w) + " windows; attention blocks must preserve resolution");
    }
    if (spec.k != 2 * spec.p + 1) {
        throw GeometryError("window " + spec_string(spec) + " has no central token (need k = 2p + 1)");
    }
}

template <Real T>
AttentionParams<T> make_attention(const std::string& name, std::size_t width, std::size_t heads) {
    if (heads == 0 || width % heads != 0) {
        throw ValidationError(name + ": width " + std::to_string(width) + " is not divisible by " +
                              std::to_string(heads) + " heads");
    }
    AttentionParams<T> p;
    p.q = make_linear<T>(name + ".q", width, width);
    p.k = make_linear<T>(name + ".k", width, width);
    p.v = make_linear<T>(name + ".v", width, width);
    p.o = make_linear<T>(name + ".o", width, width);
    p.heads = heads;
    return p;
}

template <Real T>
Var unfold_windows(Tape<T>& tape, Var x, const WindowSpec& spec) {
    const auto& X = tape.value(x);
    if (X.rank() != 3) throw DimensionError("unfold_windows expects H x W x C, got " + shape_string(X.shape()));
    const std::size_t h = X.dim(0), w = X.dim(1), c = X.dim(2);
    const GridSize grid = window_count(h, w, spec);
    const std::size_t k = spec.k, p = spec.p, s = spec.s, cells = k * k;

    // source token of each (window, cell), or npos for padding
    constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::vector<std::size_t> source(grid.h * grid.w * cells, npos);
    for (std::size_t i = 0; i < grid.h; ++i)
        for (std::size_t j = 0; j < grid.w; ++j)
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = 0; b < k; ++b) {
                    const std::size_t r = i * s + a, col = j * s + b;
                    if (r < p || r - p >= h || col < p || col - p >= w) continue;
                    source[((i * grid.w + j) * cells) + a * k + b] = (r - p) * w + (col - p);
                }

    Tensor<T> Y({grid.h * grid.w, cells, c});
    for (std::size_t slot = 0; slot < source.size(); ++slot)
        if (source[slot] != npos) std::copy_n(X.ptr() + source[slot] * c, c, Y.ptr() + slot * c);

    return tape.record(std::move(Y), {x}, [x, c, source = std::move(source)](Tape<T>& t, Var, const Tensor<T>& g) {
        T* dx = t.grad_slot(x).ptr();
        for (std::size_t slot = 0; slot < source.size(); ++slot) {
            if (source[slot] == npos) continue;
            const T* gs = g.ptr() + slot * c;
            T* d = dx + source[slot] * c;
            for (std::size_t ch = 0; ch < c; ++ch) d[ch] += gs[ch];
        }
    });
}

template <Real T>
Var csa(Tape<T>& tape, Var q, Var keys, Var values) {
    const auto& Q = tape.value(q);
    const auto& K = tape.value(keys);
    const auto& V = tape.value(values);
    if (Q.rank() != 2 || Q.dim(0) != 1 || K.rank() != 2 || V.rank() != 2 || K.dim(1) != Q.dim(1) ||
        V.shape() != K.shape() || K.dim(0) < 1) {
        throw DimensionError("csa: query " + shape_string(Q.shape()) + ", keys " + shape_string(K.shape()) +
                             ", values " + shape_string(V.shape()) + " are incompatible");
    }
    const std::size_t n = K.dim(0), d = K.dim(1);
    const T scale = T(1) / std::sqrt(T(d));
    Tensor<T> weights({n});
    for (std::size_t t = 0; t < n; ++t) {
        T acc = 0;
        for (std::size_t c = 0; c < d; ++c) acc += Q[c] * K[t * d + c];
        weights[t] = acc * scale;
    }
    softmax_inplace(weights.ptr(), n);
    Tensor<T> out({1, d});
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t c = 0; c < d; ++c) out[c] += weights[t] * V[t * d + c];

    return tape.record(std::move(out), {q, keys, values},
                       [q, keys, values, n, d, scale, weights = std::move(weights)](Tape<T>& t, Var,
                                                                                   const Tensor<T>& g) {
                           const auto& Q = t.value(q);
                           const auto& K = t.value(keys);
                           const auto& V = t.value(values);
                           std::vector<T> dl(n);
                           for (std::size_t r = 0; r < n; ++r) {
                               T acc = 0;
                               for (std::size_t c = 0; c < d; ++c) acc += g[c] * V[r * d + c];
                               dl[r] = acc;
                           }
                           if (t.requires_grad(values)) {
                               T* dv = t.grad_slot(values).ptr();
                               for (std::size_t r = 0; r < n; ++r)
                                   for (std::size_t c = 0; c < d; ++c) dv[r * d + c] += weights[r] * g[c];
                           }
                           softmax_backward_inplace(weights.ptr(), dl.data(), n);
                           if (t.requires_grad(q)) {
                               T* dq = t.grad_slot(q).ptr();
                               for (std::size_t r = 0; r < n; ++r)
                                   for (std::size_t c = 0; c < d; ++c) dq[c] += scale * dl[r] * K[r * d + c];
                           }
                           if (t.requires_grad(keys)) {
                               T* dk = t.grad_slot(keys).ptr();
                               for (std::size_t r = 0; r < n; ++r)
                                   for (std::size_t c = 0; c < d; ++c) dk[r * d + c] += scale * dl[r] * Q[c];
                           }
                       });
}

template <Real T>
Var sa_global(Tape<T>& tape, Var queries, Var keys, Var values, const Tensor<T>* pos_bias) {
    return multihead_attention(tape, queries, keys, values, 1, pos_bias);
}

template <Real T>
Var central_attention(Tape<T>& tape, Var queries, Var padded_keys, Var padded_values, std::size_t heads,
                      const WindowSpec& spec) {
    const auto& Q = tape.value(queries);
    const auto& K = tape.value(padded_keys);
    const auto& V = tape.value(padded_values);
    if (Q.rank() != 3) throw DimensionError("central_attention: queries must be H x W x d, got " + shape_string(Q.shape()));
    const std::size_t h = Q.dim(0), w = Q.dim(1), d = Q.dim(2);
    require_resolution_preserving(h, w, spec);
    const std::size_t hp = h + 2 * spec.p, wp = w + 2 * spec.p;
    const Shape padded{hp, wp, d};
    if (K.shape() != padded || V.shape() != padded) {
        throw DimensionError("central_attention: keys " + shape_string(K.shape()) + " / values " +
                             shape_string(V.shape()) + " do not match padded map " + shape_string(padded));
    }
    if (heads == 0 || d % heads != 0) {
        throw DimensionError("central_attention: width " + std::to_string(d) + " not divisible by " +
                             std::to_string(heads) + " heads");
    }
    const std::size_t k = spec.k, n = k * k, dh = d / heads;
    const T scale = T(1) / std::sqrt(T(dh));

    // attention weights, [position][head][cell]
    Tensor<T> weights({h * w, heads, n});
    Tensor<T> out({h, w, d});
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const std::size_t pos = i * w + j;
            const T* qrow = Q.ptr() + pos * d;
            T* orow = out.ptr() + pos * d;
            for (std::size_t hd = 0; hd < heads; ++hd) {
                T* a = weights.ptr() + (pos * heads + hd) * n;
                const std::size_t off = hd * dh;
                for (std::size_t ci = 0; ci < k; ++ci)
                    for (std::size_t cj = 0; cj < k; ++cj) {
                        const T* krow = K.ptr() + ((i + ci) * wp + (j + cj)) * d + off;
                        T acc = 0;
                        for (std::size_t c = 0; c < dh; ++c) acc += qrow[off + c] * krow[c];
                        a[ci * k + cj] = acc * scale;
                    }
                softmax_inplace(a, n);
                for (std::size_t ci = 0; ci < k; ++ci)
                    for (std::size_t cj = 0; cj < k; ++cj) {
                        const T* vrow = V.ptr() + ((i + ci) * wp + (j + cj)) * d + off;
                        const T wt = a[ci * k + cj];
                        for (std::size_t c = 0; c < dh; ++c) orow[off + c] += wt * vrow[c];
                    }
            }
        }

    return tape.record(
        std::move(out), {queries, padded_keys, padded_values},
        [queries, padded_keys, padded_values, h, w, d, wp, k, n, dh, heads, scale,
         weights = std::move(weights)](Tape<T>& t, Var, const Tensor<T>& g) {
            const auto& Q = t.value(queries);
            const auto& K = t.value(padded_keys);
            const auto& V = t.value(padded_values);
            T* dq = t.requires_grad(queries) ? t.grad_slot(queries).ptr() : nullptr;
            T* dk = t.requires_grad(padded_keys) ? t.grad_slot(padded_keys).ptr() : nullptr;
            T* dv = t.requires_grad(padded_values) ? t.grad_slot(padded_values).ptr() : nullptr;
            std::vector<T> dl(n);
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    const std::size_t pos = i * w + j;
                    const T* go = g.ptr() + pos * d;
                    const T* qrow = Q.ptr() + pos * d;
                    for (std::size_t hd = 0; hd < heads; ++hd) {
                        const T* a = weights.ptr() + (pos * heads + hd) * n;
                        const std::size_t off = hd * dh;
                        for (std::size_t cell = 0; cell < n; ++cell) {
                            const std::size_t src = ((i + cell / k) * wp + (j + cell % k)) * d + off;
                            T acc = 0;
                            for (std::size_t c = 0; c < dh; ++c) acc += go[off + c] * V[src + c];
                            dl[cell] = acc;
                            if (dv)
                                for (std::size_t c = 0; c < dh; ++c) dv[src + c] += a[cell] * go[off + c];
                        }
                        softmax_backward_inplace(a, dl.data(), n);
                        for (std::size_t cell = 0; cell < n; ++cell) {
                            const std::size_t src = ((i + cell / k) * wp + (j + cell % k)) * d + off;
                            const T coef = scale * dl[cell];
                            if (dq)
                                for (std::size_t c = 0; c < dh; ++c) dq[pos * d + off + c] += coef * K[src + c];
                            if (dk)
                                for (std::size_t c = 0; c < dh; ++c) dk[src + c] += coef * qrow[off + c];
                        }
                    }
                }
        });
}

template <Real T>
Var multihead_attention(Tape<T>& tape, Var queries, Var keys, Var values, std::size_t heads, const Tensor<T>* pos_bias) {
    const auto& Q = tape.value(queries);
    const auto& K = tape.value(keys);
    const auto& V = tape.value(values);
    if (Q.rank() != 2 || K.rank() != 2 || V.shape() != K.shape() || K.dim(1) != Q.dim(1) || K.dim(0) < 1) {
        throw DimensionError("attention: queries " + shape_string(Q.shape()) + ", keys " + shape_string(K.shape()) +
                             ", values " + shape_string(V.shape()) + " are incompatible");
    }
    const std::size_t nq = Q.dim(0), nk = K.dim(0), d = Q.dim(1);
    if (heads == 0 || d % heads != 0) {
        throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                             " heads");
    }
    if (pos_bias && pos_bias->shape() != Shape{nq, nk}) {
        throw DimensionError("attention: positional bias " + shape_string(pos_bias->shape()) + " does not match " +
                             std::to_string(nq) + "x" + std::to_string(nk) + " logits");
    }
    const std::size_t dh = d / heads;
    const T scale = T(1) / std::sqrt(T(dh));

    // attention weights, [head][query][key]
    Tensor<T> weights({heads, nq, nk});
    Tensor<T> out({nq, d});
    for (std::size_t hd = 0; hd < heads; ++hd) {
        const std::size_t off = hd * dh;
        for (std::size_t r = 0; r < nq; ++r) {
            T* a = weights.ptr() + (hd * nq + r) * nk;
            for (std::size_t m = 0; m < nk; ++m) {
                T acc = 0;
                for (std::size_t c = 0; c < dh; ++c) acc += Q[r * d + off + c] * K[m * d + off + c];
                a[m] = acc * scale;
                if (pos_bias) a[m] += (*pos_bias)[r * nk + m];
            }
            softmax_inplace(a, nk);
            for (std::size_t m = 0; m < nk; ++m)
                for (std::size_t c = 0; c < dh; ++c) out[r * d + off + c] += a[m] * V[m * d + off + c];
        }
    }

    return tape.record(
        std::move(out), {queries, keys, values},
        [queries, keys, values, nq, nk, d, dh, heads, scale, weights = std::move(weights)](Tape<T>& t, Var,
                                                                                          const Tensor<T>& g) {
            const auto& Q = t.value(queries);
            const auto& K = t.value(keys);
            const auto& V = t.value(values);
            T* dq = t.requires_grad(queries) ? t.grad_slot(queries).ptr() : nullptr;
            T* dk = t.requires_grad(keys) ? t.grad_slot(keys).ptr() : nullptr;
            T* dv = t.requires_grad(values) ? t.grad_slot(values).ptr() : nullptr;
            std::vector<T> dl(nk);
            for (std::size_t hd = 0; hd < heads; ++hd) {
                const std::size_t off = hd * dh;
                for (std::size_t r = 0; r < nq; ++r) {
                    const T* a = weights.ptr() + (hd * nq + r) * nk;
                    const T* go = g.ptr() + r * d + off;
                    for (std::size_t m = 0; m < nk; ++m) {
                        T acc = 0;
                        for (std::size_t c = 0; c < dh; ++c) acc += go[c] * V[m * d + off + c];
                        dl[m] = acc;
                        if (dv)
                            for (std::size_t c = 0; c < dh; ++c) dv[m * d + off + c] += a[m] * go[c];
                    }
                    softmax_backward_inplace(a, dl.data(), nk);
                    for (std::size_t m = 0; m < nk; ++m) {
                        const T coef = scale * dl[m];
                        if (dq)
                            for (std::size_t c = 0; c < dh; ++c) dq[r * d + off + c] += coef * K[m * d + off + c];
                        if (dk)
                            for (std::size_t c = 0; c < dh; ++c) dk[m * d + off + c] += coef * Q[r * d + off + c];
                    }
                }
            }
        });
}

template <Real T>
Var mcsa(Tape<T>& tape, Var x, const AttentionParams<T>& params, const WindowSpec& spec) {
    const auto& X = tape.value(x);
    if (X.rank() != 3 || X.dim(2) != params.width()) {
        throw DimensionError("mcsa: input " + shape_string(X.shape()) + " does not match attention width " +
                             std::to_string(params.width()));
    }
    if (params.pos_bias) throw ValidationError("mcsa: positional bias applies to global attention only");
    require_resolution_preserving(X.dim(0), X.dim(1), spec);
    Var padded = zero_pad2d(tape, x, spec.p);
    Var q = linear(tape, x, params.q);
    Var k = linear(tape, padded, params.k);
    Var v = linear(tape, padded, params.v);
    Var heads = central_attention(tape, q, k, v, params.heads, spec);
    return linear(tape, heads, params.o);
}

template <Real T>
Var msa(Tape<T>& tape, Var x, const AttentionParams<T>& params) {
    const auto& X = tape.value(x);
    if (X.rank() != 3 || X.dim(2) != params.width()) {
        throw DimensionError("msa: input " + shape_string(X.shape()) + " does not match attention width " +
                             std::to_string(params.width()));
    }
    const Shape map_shape = X.shape();
    Var tokens = reshape(tape, x, {map_shape[0] * map_shape[1], map_shape[2]});
    Var q = linear(tape, tokens, params.q);
    Var k = linear(tape, tokens, params.k);
    Var v = linear(tape, tokens, params.v);
    const Tensor<T>* bias = params.pos_bias ? &*params.pos_bias : nullptr;
    Var heads = multihead_attention(tape, q, k, v, params.heads, bias);
    return reshape(tape, linear(tape, heads, params.o), map_shape);
}

template <Real T>
Tensor<T> mcsa_reference(const Tensor<T>& x, const AttentionParams<T>& params, const WindowSpec& spec) {
    if (x.rank() != 3 || x.dim(2) != params.width()) {
        throw DimensionError("mcsa_reference: input " + shape_string(x.shape()) + " does not match width " +
                             std::to_string(params.width()));
    }
    const std::size_t h = x.dim(0), w = x.dim(1), d = x.dim(2);
    require_resolution_preserving(h, w, spec);
    const std::size_t n = spec.k * spec.k, heads = params.heads, dh = d / heads;

    Tape<T> tape(false);
    const Tensor<T> windows = tape.value(unfold_windows(tape, tape.constant(x), spec));
    Tensor<T> concat({h * w, d});
    for (std::size_t win = 0; win < h * w; ++win) {
        Tensor<T> tokens({n, d});
        std::copy_n(windows.ptr() + win * n * d, n * d, tokens.ptr());
        // the centre cell of window (i, j) is token (i, j)
        Tensor<T> centre({1, d});
        std::copy_n(x.ptr() + win * d, d, centre.ptr());

        const Tensor<T>& qw = tape.value(linear(tape, tape.constant(centre), params.q));
        const Tensor<T>& kw = tape.value(linear(tape, tape.constant(tokens), params.k));
        const Tensor<T>& vw = tape.value(linear(tape, tape.constant(tokens), params.v));
        for (std::size_t hd = 0; hd < heads; ++hd) {
            Tensor<T> qh({1, dh}), kh({n, dh}), vh({n, dh});
            for (std::size_t c = 0; c < dh; ++c) qh[c] = qw[hd * dh + c];
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < dh; ++c) {
                    kh[r * dh + c] = kw[r * d + hd * dh + c];
                    vh[r * dh + c] = vw[r * d + hd * dh + c];
                }
            const Tensor<T>& head = tape.value(csa(tape, tape.constant(qh), tape.constant(kh), tape.constant(vh)));
            for (std::size_t c = 0; c < dh; ++c) concat[win * d + hd * dh + c] = head[c];
        }
    }
    return tape.value(linear(tape, tape.constant(concat), params.o)).reshaped({h, w, d});
}

#define SIMVIT_INSTANTIATE(T)                                                                          \
    template AttentionParams<T> make_attention(const std::string&, std::size_t, std::size_t);         \
    template Var unfold_windows(Tape<T>&, Var, const WindowSpec&);                                    \
    template Var csa(Tape<T>&, Var, Var, Var);                                                         \
    template Var sa_global(Tape<T>&, Var, Var, Var, const Tensor<T>*);                                 \
    template Var central_attention(Tape<T>&, Var, Var, Var, std::size_t, const WindowSpec&);          \
    template Var multihead_attention(Tape<T>&, Var, Var, Var, std::size_t, const Tensor<T>*);          \
    template Var mcsa(Tape<T>&, Var, const AttentionParams<T>&, const WindowSpec&);                   \
    template Var msa(Tape<T>&, Var, const AttentionParams<T>&);                                        \
    template Tensor<T> mcsa_reference(const Tensor<T>&, const AttentionParams<T>&, const WindowSpec&);

SIMVIT_INSTANTIATE(float)
SIMVIT_INSTANTIATE(double)

}  // namespace simvit
