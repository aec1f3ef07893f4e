#pragma once

#include <string>

#include "simvit/attention.hpp"

namespace simvit {

enum class AttentionKind { central, global };

const char* attention_kind_name(AttentionKind kind);

template <Real T>
struct PatchEmbedParams {
    std::size_t patch = 1;
    LinearParams<T> proj;  // (P*P*C_in) x C_out
    LayerNormParams<T> norm;
};

template <Real T>
struct ConvFFNParams {
    LinearParams<T> fc1;       // C x (E*C)
    Parameter<T> dw_kernel;    // 3 x 3 x (E*C)
    Parameter<T> dw_bias;      // E*C
    LinearParams<T> fc2;       // (E*C) x C
    std::size_t expansion = 1;
};

template <Real T>
struct BlockParams {
    LayerNormParams<T> ln1;
    AttentionParams<T> attn;
    AttentionKind kind = AttentionKind::central;
    WindowSpec window;
    LayerNormParams<T> ln2;
    ConvFFNParams<T> ffn;
};

template <Real T>
PatchEmbedParams<T> make_patch_embed(const std::string& name, std::size_t patch, std::size_t in_channels,
                                     std::size_t out_channels);

template <Real T>
ConvFFNParams<T> make_conv_ffn(const std::string& name, std::size_t channels, std::size_t expansion);

template <Real T>
BlockParams<T> make_block(const std::string& name, std::size_t channels, std::size_t heads, std::size_t expansion,
                          AttentionKind kind, const WindowSpec& window);

// H x W x C -> (H/P) x (W/P) x (P*P*C). Each output token is its P x P
// patch flattened in raster order with channels fastest.
template <Real T>
Var space_to_depth(Tape<T>& tape, Var x, std::size_t patch);

// Non-overlapping patches, flattened, projected and layer-normalized.
template <Real T>
Var patch_embed(Tape<T>& tape, Var x, const PatchEmbedParams<T>& params);

// fc1 -> depthwise 3x3 -> GELU -> fc2, on an H x W x C map.
template <Real T>
Var conv_ffn(Tape<T>& tape, Var x, const ConvFFNParams<T>& params);

// Pre-norm block with two residual branches:
//   h~ = attn(LN1(h)) + h,  out = ConvFFN(LN2(h~)) + h~
template <Real T>
Var simvit_block(Tape<T>& tape, Var h, const BlockParams<T>& params);

}  // namespace simvit
