#include "simvit/blocks.hpp"

namespace simvit {

const char* attention_kind_name(AttentionKind kind) {
    return kind == AttentionKind::central ? "central" : "global";
}

template <Real T>
PatchEmbedParams<T> make_patch_embed(const std::string& name, std::size_t patch, std::size_t in_channels,
                                     std::size_t out_channels) {
    if (patch == 0) throw ValidationError(name + ": patch size must be positive");
    return {patch, make_linear<T>(name + ".proj", patch * patch * in_channels, out_channels),
            make_layer_norm<T>(name + ".norm", out_channels)};
}

template <Real T>
ConvFFNParams<T> make_conv_ffn(const std::string& name, std::size_t channels, std::size_t expansion) {
    if (expansion == 0) throw ValidationError(name + ": expansion ratio must be positive");
    const std::size_t hidden = channels * expansion;
    ConvFFNParams<T> p;
    p.fc1 = make_linear<T>(name + ".fc1", channels, hidden);
    p.dw_kernel = Parameter<T>(name + ".dw.kernel", Tensor<T>({3, 3, hidden}));
    p.dw_bias = Parameter<T>(name + ".dw.bias", Tensor<T>({hidden}));
    p.fc2 = make_linear<T>(name + ".fc2", hidden, channels);
    p.expansion = expansion;
    return p;
}

template <Real T>
BlockParams<T> make_block(const std::string& name, std::size_t channels, std::size_t heads, std::size_t expansion,
                          AttentionKind kind, const WindowSpec& window) {
    window.validate();
    BlockParams<T> b;
    b.ln1 = make_layer_norm<T>(name + ".ln1", channels);
    b.attn = make_attention<T>(name + ".attn", channels, heads);
    b.kind = kind;
    b.window = window;
    b.ln2 = make_layer_norm<T>(name + ".ln2", channels);
    b.ffn = make_conv_ffn<T>(name + ".ffn", channels, expansion);
    return b;
}

template <Real T>
Var space_to_depth(Tape<T>& tape, Var x, std::size_t patch) {
    const auto& X = tape.value(x);
    if (X.rank() != 3) throw DimensionError("patch embedding expects H x W x C, got " + shape_string(X.shape()));
    const std::size_t h = X.dim(0), w = X.dim(1), c = X.dim(2);
    if (patch == 0 || h % patch != 0 || w % patch != 0) {
        throw GeometryError("patch embedding: " + std::to_string(h) + "x" + std::to_string(w) +
                            " input is not divisible by patch size " + std::to_string(patch));
    }
    const std::size_t ho = h / patch, wo = w / patch, run = patch * c;
    Tensor<T> Y({ho, wo, patch * patch * c});
    // each patch row is a contiguous run of patch*c values in both layouts
    auto for_each_run = [=](auto&& fn) {
        for (std::size_t i = 0; i < ho; ++i)
            for (std::size_t j = 0; j < wo; ++j)
                for (std::size_t a = 0; a < patch; ++a)
                    fn(((i * patch + a) * w + j * patch) * c, ((i * wo + j) * patch + a) * run);
    };
    for_each_run([&](std::size_t src, std::size_t dst) { std::copy_n(X.ptr() + src, run, Y.ptr() + dst); });
    return tape.record(std::move(Y), {x}, [x, for_each_run, run](Tape<T>& t, Var, const Tensor<T>& g) {
        T* dx = t.grad_slot(x).ptr();
        for_each_run([&](std::size_t src, std::size_t dst) {
            for (std::size_t k = 0; k < run; ++k) dx[src + k] += g[dst + k];
        });
    });
}

template <Real T>
Var patch_embed(Tape<T>& tape, Var x, const PatchEmbedParams<T>& params) {
    Var patches = space_to_depth(tape, x, params.patch);
    return layer_norm(tape, linear(tape, patches, params.proj), params.norm);
}

template <Real T>
Var conv_ffn(Tape<T>& tape, Var x, const ConvFFNParams<T>& params) {
    Var hidden = linear(tape, x, params.fc1);
    hidden = depthwise_conv3x3(tape, hidden, tape.param(params.dw_kernel), tape.param(params.dw_bias));
    hidden = gelu(tape, hidden);
    return linear(tape, hidden, params.fc2);
}

template <Real T>
Var simvit_block(Tape<T>& tape, Var h, const BlockParams<T>& params) {
    Var normed = layer_norm(tape, h, params.ln1);
    Var attended = params.kind == AttentionKind::central ? mcsa(tape, normed, params.attn, params.window)
                                                         : msa(tape, normed, params.attn);
    Var mid = add(tape, attended, h);
    Var ffn = conv_ffn(tape, layer_norm(tape, mid, params.ln2), params.ffn);
    return add(tape, ffn, mid);
}

#define SIMVIT_INSTANTIATE(T)                                                                                   \
    template PatchEmbedParams<T> make_patch_embed(const std::string&, std::size_t, std::size_t, std::size_t);  \
    template ConvFFNParams<T> make_conv_ffn(const std::string&, std::size_t, std::size_t);                     \
    template BlockParams<T> make_block(const std::string&, std::size_t, std::size_t, std::size_t,             \
                                       AttentionKind, const WindowSpec&);                                      \
    template Var space_to_depth(Tape<T>&, Var, std::size_t);                                                    \
    template Var patch_embed(Tape<T>&, Var, const PatchEmbedParams<T>&);                                        \
    template Var conv_ffn(Tape<T>&, Var, const ConvFFNParams<T>&);                                              \
    template Var simvit_block(Tape<T>&, Var, const BlockParams<T>&);

SIMVIT_INSTANTIATE(float)
SIMVIT_INSTANTIATE(double)

}  // namespace simvit
