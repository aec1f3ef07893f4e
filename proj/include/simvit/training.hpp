#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simvit/model.hpp"

namespace simvit {

// -log softmax(logits)[label] as a 1-element tensor.
template <Real T>
Var cross_entropy(Tape<T>& tape, Var logits, std::size_t label);

template <Real T>
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<Tensor<T>> first_moment;
    std::vector<Tensor<T>> second_moment;
};

// One bias-corrected Adam update from each Parameter::grad. Moments are
// allocated on the first call and must keep mirroring `params`.
template <Real T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state);

struct GradCheckOptions {
    double eps = 1e-4;
    double tol = 1e-4;
    double abs_floor = 1e-6;
    // Coordinates checked per parameter; smaller parameters are checked
    // exhaustively.
    std::size_t samples = 50;
    std::uint64_t seed = 0;
    // Runs between the analytic backward pass and the comparison. Tests use
    // it to inject faults into the gradients.
    std::function<void(std::span<Parameter<double>* const>)> after_backward;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t argmax = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t checked = 0;
    bool finite = true;
    bool pass = true;
};

struct GradCheckReport {
    std::string label;
    double tol = 0.0;
    std::vector<GradCheckEntry> entries;

    bool pass() const;
    // Entry with the largest relative error, nullptr when empty.
    const GradCheckEntry* worst() const;
};

// Compares the tape's gradients for `params` against central differences
// (f(theta + eps) - f(theta - eps)) / 2 eps. `fn` must bind every checked
// parameter through tape.param() and may return any shape; non-scalar
// outputs are reduced with a fixed random projection. Relative error is
// |a - n| / max(|a|, |n|, abs_floor).
using LossFn = std::function<Var(Tape<double>&)>;
GradCheckReport finite_diff_check(const LossFn& fn, std::span<Parameter<double>* const> params,
                                  const GradCheckOptions& options = {});

// Oriented sinusoidal gratings, one orientation per class, with uniform
// noise; see gen_toy_dataset.
struct ToyDataset {
    Tensor<float> images;  // n x side x side x 3, normalized to [-1, 1]
    std::vector<std::size_t> labels;
    std::uint64_t seed = 0;
    std::size_t classes = 0;

    std::size_t size() const { return labels.size(); }
    template <Real T>
    Tensor<T> image(std::size_t i) const;
    // FNV-1a over the float32 pixel bits followed by the labels as u32, all
    // little-endian.
    std::uint64_t checksum() const;
};

// Image i has label i % classes, so class counts differ by at most one.
// Pixel (y, x) of a class-c image is
//   0.5 + 0.4 sin(2 pi (x cos a + y sin a) / 8) + 0.1 (2u - 1),  a = c * 18 deg,
// with u drawn from splitmix64(seed) once per pixel in raster order
// (channels share it), clamped to [0, 1], then mapped by (v - 0.5) / 0.5.
ToyDataset gen_toy_dataset(std::uint64_t seed, std::size_t n = 256, std::size_t classes = 10, std::size_t side = 32);

struct TrainOptions {
    std::size_t epochs = 50;
    std::size_t batch = 32;
    std::uint64_t seed = 0;  // shuffling
    double lr = 1e-3;
    // Batch elements are split into fixed groups of group_size; groups are
    // spread over `workers` threads and reduced in group order, so the
    // trace does not depend on the worker count.
    std::size_t workers = 1;
    std::size_t group_size = 4;
    // Stop after the first epoch whose train accuracy reaches this value.
    std::optional<double> target_accuracy;
    // Receives one `epoch <k> loss <float> acc <float>` line per epoch.
    std::ostream* trace = nullptr;
};

struct EpochStats {
    std::size_t epoch = 0;
    double loss = 0.0;      // mean cross-entropy over the epoch
    double accuracy = 0.0;  // fraction of samples classified correctly while training
};

std::string format_epoch(const EpochStats& stats);

template <Real T>
std::vector<EpochStats> train_toy(Model<T>& model, const ToyDataset& data, const TrainOptions& options);

// Fraction of the dataset whose argmax logit equals the label.
template <Real T>
double evaluate_toy(const Model<T>& model, const ToyDataset& data);

// Mean cross-entropy over the dataset without updating anything.
template <Real T>
double mean_toy_loss(const Model<T>& model, const ToyDataset& data);

template <Real T>
std::size_t argmax(const Tensor<T>& t);

}  // namespace simvit
