#include <gtest/gtest.h>

#include <cmath>

#include "simvit/checks.hpp"
#include "support.hpp"

namespace simvit {
namespace {

using test::D;
using test::eval;
using test::random_tensor;
using test::to_vec;
using test::Vec;

Vec oracle_space_to_depth(const Tensor<D>& x, std::size_t P) {
    const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
    Vec out;
    for (std::size_t i = 0; i < H / P; ++i)
        for (std::size_t j = 0; j < W / P; ++j)
            for (std::size_t a = 0; a < P; ++a)
                for (std::size_t b = 0; b < P; ++b)
                    for (std::size_t c = 0; c < C; ++c) out.push_back(x.at(i * P + a, j * P + b, c));
    return out;
}

Vec oracle_gelu(Vec v) {
    for (double& x : v) x = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
    return v;
}

void randomize(LayerNormParams<D>& n, SplitMix64& rng) {
    for (D& v : n.gamma.value.data()) v = rng.uniform(0.5, 1.5);
    test::randomize(n.beta, rng);
}

void randomize(ConvFFNParams<D>& f, SplitMix64& rng) {
    test::randomize(f.fc1, rng);
    test::randomize(f.dw_kernel, rng);
    test::randomize(f.dw_bias, rng);
    test::randomize(f.fc2, rng);
}

Vec oracle_conv_ffn(const Tensor<D>& x, const ConvFFNParams<D>& f) {
    const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2), E = f.fc1.weight.value.dim(1);
    Vec h = test::oracle_linear(to_vec(x), to_vec(f.fc1.weight.value), to_vec(f.fc1.bias.value), H * W, C, E);
    h = test::oracle_dwconv(h, to_vec(f.dw_kernel.value), to_vec(f.dw_bias.value), H, W, E);
    h = oracle_gelu(h);
    return test::oracle_linear(h, to_vec(f.fc2.weight.value), to_vec(f.fc2.bias.value), H * W, E, C);
}

Vec oracle_ln(const Tensor<D>& x, const LayerNormParams<D>& n) {
    return test::oracle_layer_norm(to_vec(x), to_vec(n.gamma.value), to_vec(n.beta.value), x.dim(x.rank() - 1));
}

TEST(SpaceToDepth, MatchesRasterChannelFastestOrder) {
    SplitMix64 rng(1);
    const Tensor<D> x = random_tensor(rng, {8, 6, 3});
    const Tensor<D> y = eval([&](Tape<D>& t) { return space_to_depth(t, t.constant(x), 2); });
    ASSERT_EQ(y.shape(), (Shape{4, 3, 12}));
    EXPECT_EQ(to_vec(y), oracle_space_to_depth(x, 2));
}

TEST(SpaceToDepth, RejectsIndivisibleInput) {
    Tape<D> t;
    EXPECT_THROW(space_to_depth(t, t.constant(Tensor<D>({6, 7, 3})), 2), GeometryError);
}

TEST(PatchEmbed, MatchesLoopOracle) {
    SplitMix64 rng(2);
    auto pe = make_patch_embed<D>("embed", 4, 3, 8);
    test::randomize(pe.proj, rng);
    randomize(pe.norm, rng);
    const Tensor<D> x = random_tensor(rng, {8, 12, 3});
    const Tensor<D> y = eval([&](Tape<D>& t) { return patch_embed(t, t.constant(x), pe); });
    ASSERT_EQ(y.shape(), (Shape{2, 3, 8}));
    const Vec flat = oracle_space_to_depth(x, 4);
    const Vec proj = test::oracle_linear(flat, to_vec(pe.proj.weight.value), to_vec(pe.proj.bias.value), 6, 48, 8);
    const Vec ref = test::oracle_layer_norm(proj, to_vec(pe.norm.gamma.value), to_vec(pe.norm.beta.value), 8);
    EXPECT_LE(test::max_abs_diff(y, ref), 1e-12);
}

TEST(PatchEmbed, ConstantImageGivesIdenticalTokens) {
    SplitMix64 rng(3);
    auto pe = make_patch_embed<D>("embed", 2, 3, 6);
    test::randomize(pe.proj, rng);
    Tensor<D> x({8, 8, 3});
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j)
            for (std::size_t c = 0; c < 3; ++c) x.at(i, j, c) = 0.1 * double(c + 1);
    const Tensor<D> y = eval([&](Tape<D>& t) { return patch_embed(t, t.constant(x), pe); });
    for (std::size_t n = 1; n < 16; ++n)
        for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(y[n * 6 + c], y[c], 1e-12);
}

TEST(ConvFFN, MatchesLoopOracle) {
    SplitMix64 rng(4);
    auto f = make_conv_ffn<D>("ffn", 4, 3);
    randomize(f, rng);
    const Tensor<D> x = random_tensor(rng, {5, 3, 4});
    const Tensor<D> y = eval([&](Tape<D>& t) { return conv_ffn(t, t.constant(x), f); });
    EXPECT_LE(test::max_abs_diff(y, oracle_conv_ffn(x, f)), 1e-12);
}

TEST(ConvFFN, ParameterShapes) {
    auto f = make_conv_ffn<D>("ffn", 32, 8);
    EXPECT_EQ(f.fc1.weight.shape(), (Shape{32, 256}));
    EXPECT_EQ(f.dw_kernel.shape(), (Shape{3, 3, 256}));
    EXPECT_EQ(f.fc2.weight.shape(), (Shape{256, 32}));
    EXPECT_EQ(f.dw_kernel.name, "ffn.dw.kernel");
}

TEST(Block, MatchesComposedOracle) {
    SplitMix64 rng(5);
    for (auto kind : {AttentionKind::central, AttentionKind::global}) {
        auto b = make_block<D>("b", 4, 2, 2, kind, WindowSpec{});
        randomize(b.ln1, rng);
        randomize(b.ln2, rng);
        test::randomize(b.attn, rng);
        randomize(b.ffn, rng);
        const Tensor<D> x = random_tensor(rng, {4, 3, 4});
        const Tensor<D> y = eval([&](Tape<D>& t) { return simvit_block(t, t.constant(x), b); });

        const Tensor<D> n1(x.shape(), oracle_ln(x, b.ln1));
        const Vec attn = kind == AttentionKind::central ? test::oracle_mcsa(n1, b.attn, 3) : test::oracle_msa(n1, b.attn);
        Tensor<D> mid(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) mid[i] = attn[i] + x[i];
        const Tensor<D> n2(x.shape(), oracle_ln(mid, b.ln2));
        const Vec ffn = oracle_conv_ffn(n2, b.ffn);
        Vec ref(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) ref[i] = ffn[i] + mid[i];
        EXPECT_LE(test::max_abs_diff(y, ref), 1e-12) << attention_kind_name(kind);
    }
}

TEST(Block, ZeroBranchesGiveIdentity) {
    for (std::uint64_t seed : {0, 1, 2}) EXPECT_TRUE(check_zero_branch_identity(seed).pass);
}

TEST(Block, PreservesResolutionForEveryPresetStage) {
    for (const std::string& name : {"micro", "tiny", "small", "medium", "large"}) {
        const ModelConfig config = preset_config(name);
        std::size_t side = 224;
        for (const StageConfig& s : config.stages) {
            side /= s.patch;
            auto b = make_block<float>("b", s.channels, s.heads, s.expansion, s.attn, s.window);
            const Tensor<float> x = Tensor<float>::full({side, side, s.channels}, 0.25f);
            const Tensor<float> y = eval<float>([&](Tape<float>& t) { return simvit_block(t, t.constant(x), b); });
            EXPECT_EQ(y.shape(), x.shape()) << name << " " << side;
        }
    }
}

TEST(BlockGradients, PassFiniteDifferences) {
    for (std::uint64_t seed : {0, 1, 2}) {
        for (const auto& report : gradient_audit(AuditScope::block, seed)) {
            const auto* w = report.worst();
            EXPECT_TRUE(report.pass()) << report.label << " " << w->name << " " << w->max_rel_error;
        }
    }
}

}  // namespace
}  // namespace simvit
