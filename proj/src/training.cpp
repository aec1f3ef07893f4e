#include "simvit/training.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>
#include <thread>

#include "simvit/random.hpp"

namespace simvit {

template <Real T>
Var cross_entropy(Tape<T>& tape, Var logits, std::size_t label) {
    const auto& z = tape.value(logits);
    const std::size_t n = z.size();
    if (label >= n) {
        throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " outside [0, " + std::to_string(n) +
                                ")");
    }
    T mx = z[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, z[i]);
    T sum = 0;
    for (std::size_t i = 0; i < n; ++i) sum += std::exp(z[i] - mx);
    const T lse = mx + std::log(sum);
    return tape.record(Tensor<T>::scalar(lse - z[label]), {logits},
                       [logits, label, lse, n](Tape<T>& t, Var, const Tensor<T>& g) {
                           const auto& z = t.value(logits);
                           T* dz = t.grad_slot(logits).ptr();
                           for (std::size_t i = 0; i < n; ++i) {
                               const T p = std::exp(z[i] - lse);
                               dz[i] += g[0] * (p - (i == label ? T(1) : T(0)));
                           }
                       });
}

template <Real T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state) {
    if (state.first_moment.empty()) {
        for (const auto* p : params) {
            state.first_moment.emplace_back(p->shape());
            state.second_moment.emplace_back(p->shape());
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                             " tensors, got " + std::to_string(params.size()));
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter<T>& p = *params[i];
        Tensor<T>& m = state.first_moment[i];
        Tensor<T>& v = state.second_moment[i];
        if (m.shape() != p.shape()) {
            throw DimensionError("adam_step: moment " + shape_string(m.shape()) + " vs parameter '" + p.name + "' " +
                                 shape_string(p.shape()));
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = p.grad[j];
            const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            m[j] = T(mj);
            v[j] = T(vj);
            p.value[j] = T(p.value[j] - state.lr * (mj / c1) / (std::sqrt(vj / c2) + state.eps));
        }
    }
}

bool GradCheckReport::pass() const {
    return std::all_of(entries.begin(), entries.end(), [](const GradCheckEntry& e) { return e.pass; });
}

const GradCheckEntry* GradCheckReport::worst() const {
    const GradCheckEntry* worst = nullptr;
    for (const auto& e : entries)
        if (!worst || !(e.max_rel_error <= worst->max_rel_error)) worst = &e;
    return worst;
}

GradCheckReport finite_diff_check(const LossFn& fn, std::span<Parameter<double>* const> params,
                                  const GradCheckOptions& options) {
    SplitMix64 rng(options.seed);
    for (auto* p : params) p->zero_grad();

    Tape<double> tape;
    Var out = fn(tape);
    Tensor<double> projection(tape.value(out).shape());
    if (projection.size() == 1) {
        projection[0] = 1.0;
    } else {
        for (double& w : projection.data()) w = rng.uniform(-1.0, 1.0);
    }
    tape.backward(weighted_sum(tape, out, projection));
    if (options.after_backward) options.after_backward(params);

    auto evaluate = [&] {
        Tape<double> t(false);
        return t.value(weighted_sum(t, fn(t), projection))[0];
    };

    GradCheckReport report;
    report.tol = options.tol;
    for (Parameter<double>* p : params) {
        GradCheckEntry entry;
        entry.name = p->name;
        if (!all_finite(p->grad)) {
            entry.finite = false;
            entry.pass = false;
            entry.max_rel_error = std::numeric_limits<double>::infinity();
            report.entries.push_back(entry);
            continue;
        }
        std::vector<std::size_t> coords(p->size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (coords.size() > options.samples) {
            for (std::size_t i = 0; i < options.samples; ++i) {
                std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
            }
            coords.resize(options.samples);
        }
        for (std::size_t idx : coords) {
            const double original = p->value[idx];
            p->value[idx] = original + options.eps;
            const double plus = evaluate();
            p->value[idx] = original - options.eps;
            const double minus = evaluate();
            p->value[idx] = original;
            const double numeric = (plus - minus) / (2.0 * options.eps);
            const double analytic = p->grad[idx];
            const double scale = std::max({std::abs(analytic), std::abs(numeric), options.abs_floor});
            const double err = std::abs(analytic - numeric) / scale;
            if (!(err <= entry.max_rel_error) || entry.checked == 0) {
                entry.max_rel_error = err;
                entry.argmax = idx;
                entry.analytic = analytic;
                entry.numeric = numeric;
            }
            ++entry.checked;
        }
        entry.pass = entry.max_rel_error <= options.tol;
        report.entries.push_back(entry);
    }
    return report;
}

template <Real T>
Tensor<T> ToyDataset::image(std::size_t i) const {
    if (i >= size()) throw std::out_of_range("toy image " + std::to_string(i) + " of " + std::to_string(size()));
    const std::size_t side = images.dim(1), per = side * side * images.dim(3);
    std::vector<T> px(images.ptr() + i * per, images.ptr() + (i + 1) * per);
    return Tensor<T>({side, side, images.dim(3)}, std::move(px));
}

std::uint64_t ToyDataset::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint32_t word) {
        for (int b = 0; b < 4; ++b) {
            h ^= (word >> (8 * b)) & 0xFFu;
            h *= 0x100000001b3ULL;
        }
    };
    for (float v : images.data()) feed(std::bit_cast<std::uint32_t>(v));
    for (std::size_t l : labels) feed(static_cast<std::uint32_t>(l));
    return h;
}

ToyDataset gen_toy_dataset(std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t side) {
    if (classes == 0 || n < classes) {
        throw ValidationError("toy dataset: need at least one image per class (n = " + std::to_string(n) +
                              ", classes = " + std::to_string(classes) + ")");
    }
    ToyDataset data;
    data.seed = seed;
    data.classes = classes;
    data.images = Tensor<float>({n, side, side, 3});
    data.labels.resize(n);
    SplitMix64 rng(seed);
    constexpr double kPeriod = 8.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % classes;
        data.labels[i] = label;
        const double angle = double(label) * 18.0 * std::numbers::pi / 180.0;
        const double cs = std::cos(angle), sn = std::sin(angle);
        for (std::size_t y = 0; y < side; ++y)
            for (std::size_t x = 0; x < side; ++x) {
                const double phase = 2.0 * std::numbers::pi * (double(x) * cs + double(y) * sn) / kPeriod;
                double v = 0.5 + 0.4 * std::sin(phase) + 0.1 * (2.0 * rng.uniform() - 1.0);
                v = std::clamp(v, 0.0, 1.0);
                const float normalized = static_cast<float>((v - 0.5) / 0.5);
                float* px = data.images.ptr() + ((i * side + y) * side + x) * 3;
                px[0] = px[1] = px[2] = normalized;
            }
    }
    return data;
}

std::string format_epoch(const EpochStats& stats) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "epoch %zu loss %.6f acc %.6f", stats.epoch, stats.loss, stats.accuracy);
    return buf;
}

template <Real T>
std::size_t argmax(const Tensor<T>& t) {
    if (t.empty()) throw DimensionError("argmax of an empty tensor");
    return static_cast<std::size_t>(std::max_element(t.data().begin(), t.data().end()) - t.data().begin());
}

template <Real T>
std::vector<EpochStats> train_toy(Model<T>& model, const ToyDataset& data, const TrainOptions& options) {
    if (model.config().num_classes != data.classes) {
        throw ValidationError("train_toy: model has " + std::to_string(model.config().num_classes) +
                              " classes, dataset has " + std::to_string(data.classes));
    }
    if (options.batch == 0 || options.group_size == 0) throw ValidationError("train_toy: batch and group size must be positive");
    if (data.size() == 0) throw ValidationError("train_toy: empty dataset");

    const std::vector<Parameter<T>*> params = model.parameters();
    const std::vector<const Parameter<T>*> const_params(params.begin(), params.end());
    const std::size_t max_groups = (options.batch + options.group_size - 1) / options.group_size;
    std::vector<GradBuffer<T>> buffers;
    for (std::size_t g = 0; g < max_groups; ++g) buffers.emplace_back(const_params);

    AdamState<T> adam;
    adam.lr = options.lr;
    SplitMix64 rng(options.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<double> sample_loss(options.batch);
    std::vector<char> sample_hit(options.batch);
    std::vector<EpochStats> trace;

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double loss_sum = 0.0;
        std::size_t hits = 0;

        for (std::size_t start = 0; start < order.size(); start += options.batch) {
            const std::size_t count = std::min(options.batch, order.size() - start);
            const std::size_t groups = (count + options.group_size - 1) / options.group_size;
            const T inv_count = T(1) / T(count);

            auto run_group = [&](std::size_t g) {
                GradBuffer<T>& buffer = buffers[g];
                buffer.clear();
                const std::size_t lo = g * options.group_size, hi = std::min(count, lo + options.group_size);
                for (std::size_t s = lo; s < hi; ++s) {
                    const std::size_t idx = order[start + s];
                    Tape<T> tape;
                    tape.redirect_gradients(&buffer);
                    Var logits = forward_logits(tape, model, tape.constant(data.image<T>(idx)));
                    Var loss = cross_entropy(tape, logits, data.labels[idx]);
                    sample_loss[s] = double(tape.value(loss)[0]);
                    sample_hit[s] = argmax(tape.value(logits)) == data.labels[idx];
                    tape.backward(loss, Tensor<T>::scalar(inv_count));
                }
            };

            const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, groups);
            if (workers == 1) {
                for (std::size_t g = 0; g < groups; ++g) run_group(g);
            } else {
                std::atomic<std::size_t> next{0};
                std::exception_ptr failure;
                std::mutex failure_mutex;
                std::vector<std::thread> pool;
                for (std::size_t w = 0; w < workers; ++w) {
                    pool.emplace_back([&] {
                        for (std::size_t g; (g = next.fetch_add(1)) < groups;) {
                            try {
                                run_group(g);
                            } catch (...) {
                                std::lock_guard lock(failure_mutex);
                                if (!failure) failure = std::current_exception();
                            }
                        }
                    });
                }
                for (auto& th : pool) th.join();
                if (failure) std::rethrow_exception(failure);
            }

            model.zero_grad();
            for (std::size_t g = 1; g < groups; ++g) buffers[0].add(buffers[g]);
            buffers[0].deposit();
            adam_step<T>(params, adam);

            for (std::size_t s = 0; s < count; ++s) {
                loss_sum += sample_loss[s];
                hits += sample_hit[s] ? 1 : 0;
            }
        }

        EpochStats stats{epoch, loss_sum / double(data.size()), double(hits) / double(data.size())};
        trace.push_back(stats);
        if (options.trace) *options.trace << format_epoch(stats) << '\n' << std::flush;
        if (options.target_accuracy && stats.accuracy >= *options.target_accuracy) break;
    }
    return trace;
}

template <Real T>
double evaluate_toy(const Model<T>& model, const ToyDataset& data) {
    if (data.size() == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (argmax(forward_classify(model, data.image<T>(i))) == data.labels[i]) ++hits;
    }
    return double(hits) / double(data.size());
}

template <Real T>
double mean_toy_loss(const Model<T>& model, const ToyDataset& data) {
    if (data.size() == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        Tape<T> tape(false);
        Var logits = forward_logits(tape, model, tape.constant(data.image<T>(i)));
        sum += double(tape.value(cross_entropy(tape, logits, data.labels[i]))[0]);
    }
    return sum / double(data.size());
}

#define SIMVIT_INSTANTIATE(T)                                                                  \
    template Var cross_entropy(Tape<T>&, Var, std::size_t);                                    \
    template void adam_step(std::span<Parameter<T>* const>, AdamState<T>&);                    \
    template Tensor<T> ToyDataset::image<T>(std::size_t) const;                                \
    template std::vector<EpochStats> train_toy(Model<T>&, const ToyDataset&, const TrainOptions&); \
    template double evaluate_toy(const Model<T>&, const ToyDataset&);                          \
    template double mean_toy_loss(const Model<T>&, const ToyDataset&);                         \
    template std::size_t argmax(const Tensor<T>&);

SIMVIT_INSTANTIATE(float)
SIMVIT_INSTANTIATE(double)

}  // namespace simvit
