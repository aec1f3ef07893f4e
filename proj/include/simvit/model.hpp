#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "simvit/blocks.hpp"

namespace simvit {

struct StageConfig {
    std::size_t patch = 2;
    std::size_t channels = 64;
    std::size_t heads = 1;
    std::size_t expansion = 4;
    std::size_t depth = 1;
    AttentionKind attn = AttentionKind::central;
    WindowSpec window;

    bool operator==(const StageConfig&) const = default;
};

struct ModelConfig {
    std::string variant = "custom";
    std::vector<StageConfig> stages;
    std::size_t num_classes = 1000;
    std::size_t in_channels = 3;
    // Learned absolute position embedding added to stage-1 tokens. Ties the
    // model to image_size x image_size inputs.
    bool pos_embed = false;
    std::size_t image_size = 224;

    // Throws ValidationError naming the offending field.
    void validate() const;
    // Product of all patch sizes: inputs must be divisible by this.
    std::size_t reduction() const;

    bool operator==(const ModelConfig&) const = default;
};

// "micro", "tiny", "small", "medium", "large", plus "micro-reduced"
// (micro widths, one block per stage).
const std::vector<std::string>& preset_names();
ModelConfig preset_config(std::string_view variant, std::size_t num_classes = 1000);

template <Real T>
struct Stage {
    PatchEmbedParams<T> embed;
    std::vector<BlockParams<T>> blocks;
};

template <Real T>
class Model {
   public:
    // Structure only: weights zero, norms at identity. See build_model.
    explicit Model(ModelConfig config);

    const ModelConfig& config() const { return config_; }

    // Every parameter in registration order: per stage the embedding, the
    // position embedding after stage 1's embedding when enabled, each
    // block, then the head.
    std::vector<Parameter<T>*> parameters();
    std::vector<const Parameter<T>*> parameters() const;
    std::size_t parameter_count() const;
    void zero_grad();

    std::vector<Stage<T>> stages;
    std::optional<Parameter<T>> pos_embed;
    LayerNormParams<T> head_norm;
    LinearParams<T> head;

   private:
    ModelConfig config_;
};

// Affine and convolution weights ~ N(0, 0.02^2) truncated at +-2 sigma,
// drawn in registration order from splitmix64(seed); biases 0; norms at
// identity.
template <Real T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed);

template <Real T>
struct FeaturePyramid {
    std::vector<Tensor<T>> maps;  // one per stage, F1 first
};

// Stage outputs (after each stage's last block) for an H x W x 3 image.
template <Real T>
std::vector<Var> forward_features(Tape<T>& tape, const Model<T>& model, Var image);

// Logits over num_classes: LN over the last map, mean over tokens, linear.
template <Real T>
Var forward_logits(Tape<T>& tape, const Model<T>& model, Var image);

template <Real T>
FeaturePyramid<T> forward_features(const Model<T>& model, const Tensor<T>& image);

template <Real T>
Tensor<T> forward_classify(const Model<T>& model, const Tensor<T>& image);

}  // namespace simvit
