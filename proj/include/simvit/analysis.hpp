#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "simvit/model.hpp"

namespace simvit {

// Counts split by where they come from. Position embeddings count as
// embedding; every layer norm, including the head's, counts as norms.
struct CostBreakdown {
    std::uint64_t embedding = 0;
    std::uint64_t attention = 0;
    std::uint64_t ffn = 0;
    std::uint64_t norms = 0;
    std::uint64_t head = 0;

    std::uint64_t total() const { return embedding + attention + ffn + norms + head; }
    CostBreakdown& operator+=(const CostBreakdown& o);
    bool operator==(const CostBreakdown&) const = default;
};

struct StageCost {
    CostBreakdown params;
    CostBreakdown macs;
    std::size_t height = 0;  // token map extent, 0 when no resolution was given
    std::size_t width = 0;
};

struct CostReport {
    std::vector<StageCost> stages;
    StageCost head;
    std::size_t input_height = 0;
    std::size_t input_width = 0;

    std::uint64_t total_params() const;
    std::uint64_t total_macs() const;
    CostBreakdown params_breakdown() const;
    CostBreakdown macs_breakdown() const;
};

// Closed-form parameter count; MAC fields stay zero.
CostReport count_params(const ModelConfig& config);

// Parameter and multiply-accumulate counts at an H x W input. Affine layers
// cost d_in * d_out per output token; attention costs n * d for the scores
// and n * d for the weighted sum per query (n keys); depthwise 3x3 costs 9
// per channel per token. Biases, norms, softmax, GELU and residual
// additions are free.
CostReport count_macs(const ModelConfig& config, std::size_t height, std::size_t width);

// Tab-separated table: a header row, one row per stage, a head row and a
// totals row.
std::string describe(const ModelConfig& config, std::size_t height, std::size_t width);

}  // namespace simvit
