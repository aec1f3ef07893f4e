#include "simvit/model.hpp"

#include <array>

#include "simvit/random.hpp"

namespace simvit {

namespace {

struct PresetRow {
    const char* name;
    std::array<std::size_t, 4> channels;
    std::array<std::size_t, 4> depths;
    std::array<std::size_t, 4> expansions;
};

constexpr std::array<std::size_t, 4> kPatches{4, 2, 2, 2};
constexpr std::array<std::size_t, 4> kHeads{1, 2, 5, 8};

constexpr std::array<PresetRow, 6> kPresets{{
    {"micro", {32, 64, 160, 256}, {2, 3, 3, 2}, {8, 8, 4, 4}},
    {"tiny", {64, 128, 320, 512}, {2, 4, 3, 2}, {8, 8, 4, 4}},
    {"small", {64, 128, 320, 512}, {3, 6, 13, 3}, {8, 8, 4, 4}},
    {"medium", {64, 128, 320, 512}, {3, 8, 30, 3}, {8, 8, 4, 4}},
    {"large", {64, 128, 320, 512}, {3, 8, 40, 3}, {4, 4, 4, 4}},
    {"micro-reduced", {32, 64, 160, 256}, {1, 1, 1, 1}, {8, 8, 4, 4}},
}};

bool is_initialized_weight(const std::string& name) {
    auto ends_with = [&](std::string_view suffix) {
        return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    return ends_with(".weight") || ends_with(".kernel") || name == "pos_embed";
}

template <typename ModelRef, typename Fn>
void visit_parameters(ModelRef& m, Fn&& fn) {
    auto linear = [&](auto& l) {
        fn(l.weight);
        fn(l.bias);
    };
    auto norm = [&](auto& n) {
        fn(n.gamma);
        fn(n.beta);
    };
    for (std::size_t s = 0; s < m.stages.size(); ++s) {
        auto& stage = m.stages[s];
        linear(stage.embed.proj);
        norm(stage.embed.norm);
        if (s == 0 && m.pos_embed) fn(*m.pos_embed);
        for (auto& b : stage.blocks) {
            norm(b.ln1);
            linear(b.attn.q);
            linear(b.attn.k);
            linear(b.attn.v);
            linear(b.attn.o);
            norm(b.ln2);
            linear(b.ffn.fc1);
            fn(b.ffn.dw_kernel);
            fn(b.ffn.dw_bias);
            linear(b.ffn.fc2);
        }
    }
    norm(m.head_norm);
    linear(m.head);
}

}  // namespace

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError(msg); };
    if (stages.empty() || stages.size() > 4) fail("stages: need 1 to 4 stages, got " + std::to_string(stages.size()));
    if (num_classes == 0) fail("num_classes: must be at least 1");
    if (in_channels == 0) fail("in_channels: must be at least 1");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const StageConfig& s = stages[i];
        const std::string where = "stage " + std::to_string(i + 1) + ": ";
        if (s.patch == 0) fail(where + "patch must be positive");
        if (s.channels == 0) fail(where + "channels must be positive");
        if (s.heads == 0 || s.channels % s.heads != 0) {
            fail(where + "channels " + std::to_string(s.channels) + " not divisible by heads " + std::to_string(s.heads));
        }
        if (s.expansion == 0) fail(where + "expansion must be positive");
        if (s.window.k == 0 || s.window.s == 0) fail(where + "window needs k >= 1 and s >= 1");
        if (s.attn == AttentionKind::central && (s.window.s != 1 || s.window.k != 2 * s.window.p + 1)) {
            fail(where + "central attention needs a resolution-preserving window (k = 2p + 1, s = 1)");
        }
    }
    if (pos_embed && (image_size == 0 || image_size % reduction() != 0)) {
        fail("image_size: " + std::to_string(image_size) + " is not divisible by " + std::to_string(reduction()));
    }
}

std::size_t ModelConfig::reduction() const {
    std::size_t r = 1;
    for (const auto& s : stages) r *= s.patch;
    return r;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& row : kPresets) out.emplace_back(row.name);
        return out;
    }();
    return names;
}

ModelConfig preset_config(std::string_view variant, std::size_t num_classes) {
    for (const auto& row : kPresets) {
        if (variant != row.name) continue;
        ModelConfig cfg;
        cfg.variant = row.name;
        cfg.num_classes = num_classes;
        for (std::size_t i = 0; i < 4; ++i) {
            StageConfig s;
            s.patch = kPatches[i];
            s.channels = row.channels[i];
            s.heads = kHeads[i];
            s.expansion = row.expansions[i];
            s.depth = row.depths[i];
            s.attn = i < 3 ? AttentionKind::central : AttentionKind::global;
            cfg.stages.push_back(s);
        }
        cfg.validate();
        return cfg;
    }
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown variant '" + std::string(variant) + "' (known: " + known + ")");
}

template <Real T>
Model<T>::Model(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    std::size_t in = config_.in_channels;
    for (std::size_t i = 0; i < config_.stages.size(); ++i) {
        const StageConfig& sc = config_.stages[i];
        const std::string prefix = "stages." + std::to_string(i);
        Stage<T> stage;
        stage.embed = make_patch_embed<T>(prefix + ".embed", sc.patch, in, sc.channels);
        for (std::size_t b = 0; b < sc.depth; ++b) {
            stage.blocks.push_back(make_block<T>(prefix + ".blocks." + std::to_string(b), sc.channels, sc.heads,
                                                 sc.expansion, sc.attn, sc.window));
        }
        stages.push_back(std::move(stage));
        in = sc.channels;
    }
    if (config_.pos_embed) {
        const std::size_t side = config_.image_size / config_.stages[0].patch;
        pos_embed.emplace("pos_embed", Tensor<T>({side, side, config_.stages[0].channels}));
    }
    head_norm = make_layer_norm<T>("head.norm", in);
    head = make_linear<T>("head.fc", in, config_.num_classes);
}

template <Real T>
std::vector<Parameter<T>*> Model<T>::parameters() {
    std::vector<Parameter<T>*> out;
    visit_parameters(*this, [&](Parameter<T>& p) { out.push_back(&p); });
    return out;
}

template <Real T>
std::vector<const Parameter<T>*> Model<T>::parameters() const {
    std::vector<const Parameter<T>*> out;
    visit_parameters(*this, [&](const Parameter<T>& p) { out.push_back(&p); });
    return out;
}

template <Real T>
std::size_t Model<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->size();
    return n;
}

template <Real T>
void Model<T>::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

template <Real T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed) {
    Model<T> model(config);
    SplitMix64 rng(seed);
    for (Parameter<T>* p : model.parameters()) {
        if (!is_initialized_weight(p->name)) continue;
        for (T& v : p->value.data()) v = static_cast<T>(rng.truncated_normal(0.02));
    }
    return model;
}

template <Real T>
std::vector<Var> forward_features(Tape<T>& tape, const Model<T>& model, Var image) {
    const ModelConfig& cfg = model.config();
    const auto& img = tape.value(image);
    if (img.rank() != 3 || img.dim(2) != cfg.in_channels) {
        throw DimensionError("forward: expected an H x W x " + std::to_string(cfg.in_channels) + " image, got " +
                             shape_string(img.shape()));
    }
    const std::size_t r = cfg.reduction();
    if (img.dim(0) % r != 0 || img.dim(1) % r != 0) {
        throw GeometryError("forward: " + std::to_string(img.dim(0)) + "x" + std::to_string(img.dim(1)) +
                            " input is not divisible by " + std::to_string(r));
    }
    if (cfg.pos_embed && (img.dim(0) != cfg.image_size || img.dim(1) != cfg.image_size)) {
        throw GeometryError("forward: position embedding fixes the input to " + std::to_string(cfg.image_size) + "x" +
                            std::to_string(cfg.image_size));
    }
    std::vector<Var> features;
    Var h = image;
    for (std::size_t s = 0; s < model.stages.size(); ++s) {
        const Stage<T>& stage = model.stages[s];
        h = patch_embed(tape, h, stage.embed);
        if (s == 0 && model.pos_embed) h = add(tape, h, tape.param(*model.pos_embed));
        for (const auto& block : stage.blocks) h = simvit_block(tape, h, block);
        features.push_back(h);
    }
    return features;
}

template <Real T>
Var forward_logits(Tape<T>& tape, const Model<T>& model, Var image) {
    Var last = forward_features(tape, model, image).back();
    Var pooled = global_avg_pool(tape, layer_norm(tape, last, model.head_norm));
    return linear(tape, pooled, model.head);
}

template <Real T>
FeaturePyramid<T> forward_features(const Model<T>& model, const Tensor<T>& image) {
    Tape<T> tape(false);
    FeaturePyramid<T> out;
    for (Var v : forward_features(tape, model, tape.constant(image))) out.maps.push_back(tape.value(v));
    return out;
}

template <Real T>
Tensor<T> forward_classify(const Model<T>& model, const Tensor<T>& image) {
    Tape<T> tape(false);
    return tape.value(forward_logits(tape, model, tape.constant(image)));
}

#define SIMVIT_INSTANTIATE(T)                                                              \
    template class Model<T>;                                                               \
    template Model<T> build_model(const ModelConfig&, std::uint64_t);                      \
    template std::vector<Var> forward_features(Tape<T>&, const Model<T>&, Var);            \
    template Var forward_logits(Tape<T>&, const Model<T>&, Var);                           \
    template FeaturePyramid<T> forward_features(const Model<T>&, const Tensor<T>&);        \
    template Tensor<T> forward_classify(const Model<T>&, const Tensor<T>&);

SIMVIT_INSTANTIATE(float)
SIMVIT_INSTANTIATE(double)

}  // namespace simvit
