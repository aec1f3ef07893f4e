#include "simvit/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "simvit/random.hpp"

namespace simvit {

namespace {

using D = double;

Tensor<D> random_tensor(SplitMix64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor<D> t(std::move(shape));
    for (D& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

void randomize(Parameter<D>& p, SplitMix64& rng, double lo, double hi) {
    for (D& v : p.value.data()) v = rng.uniform(lo, hi);
}

void randomize(LinearParams<D>& p, SplitMix64& rng, double scale) {
    randomize(p.weight, rng, -scale, scale);
    randomize(p.bias, rng, -scale, scale);
}

void randomize(LayerNormParams<D>& p, SplitMix64& rng) {
    randomize(p.gamma, rng, 0.5, 1.5);
    randomize(p.beta, rng, -0.5, 0.5);
}

AttentionParams<D> random_attention(std::size_t width, std::size_t heads, SplitMix64& rng, double scale = 0.5) {
    auto a = make_attention<D>("attn", width, heads);
    for (auto* l : {&a.q, &a.k, &a.v, &a.o}) randomize(*l, rng, scale);
    return a;
}

std::vector<Parameter<D>*> params_of(LinearParams<D>& l) { return {&l.weight, &l.bias}; }
std::vector<Parameter<D>*> params_of(LayerNormParams<D>& n) { return {&n.gamma, &n.beta}; }

std::vector<Parameter<D>*> params_of(AttentionParams<D>& a) {
    std::vector<Parameter<D>*> out;
    for (auto* l : {&a.q, &a.k, &a.v, &a.o}) {
        auto p = params_of(*l);
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

std::vector<Parameter<D>*> params_of(ConvFFNParams<D>& f) {
    std::vector<Parameter<D>*> out = params_of(f.fc1);
    out.push_back(&f.dw_kernel);
    out.push_back(&f.dw_bias);
    auto fc2 = params_of(f.fc2);
    out.insert(out.end(), fc2.begin(), fc2.end());
    return out;
}

std::vector<Parameter<D>*> params_of(BlockParams<D>& b) {
    std::vector<Parameter<D>*> out = params_of(b.ln1);
    for (auto* p : params_of(b.attn)) out.push_back(p);
    for (auto* p : params_of(b.ln2)) out.push_back(p);
    for (auto* p : params_of(b.ffn)) out.push_back(p);
    return out;
}

void randomize(ConvFFNParams<D>& f, SplitMix64& rng) {
    randomize(f.fc1, rng, 0.5);
    randomize(f.dw_kernel, rng, -0.5, 0.5);
    randomize(f.dw_bias, rng, -0.5, 0.5);
    randomize(f.fc2, rng, 0.5);
}

void randomize(BlockParams<D>& b, SplitMix64& rng) {
    randomize(b.ln1, rng);
    for (auto* l : {&b.attn.q, &b.attn.k, &b.attn.v, &b.attn.o}) randomize(*l, rng, 0.5);
    randomize(b.ln2, rng);
    randomize(b.ffn, rng);
}

Parameter<D> input(std::string name, Tensor<D> value) { return Parameter<D>(std::move(name), std::move(value)); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

Tensor<D> run(const std::function<Var(Tape<D>&)>& fn) {
    Tape<D> tape(false);
    return tape.value(fn(tape));
}

}  // namespace

bool all_pass(const std::vector<CheckResult>& results) {
    return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
}

CheckResult check_window_law(const WindowSpec& spec, std::size_t max_extent) {
    CheckResult r{"window law " + std::to_string(spec.k) + "/" + std::to_string(spec.p) + "/" + std::to_string(spec.s),
                  true, ""};
    std::size_t cases = 0;
    for (std::size_t h = 1; h <= max_extent && r.pass; ++h) {
        for (std::size_t w = 1; w <= max_extent; ++w, ++cases) {
            GridSize g;
            try {
                g = window_count(h, w, spec);
            } catch (const GeometryError& e) {
                r.pass = false;
                r.detail = e.what();
                break;
            }
            if (g != GridSize{h, w}) {
                r.pass = false;
                r.detail = std::to_string(h) + "x" + std::to_string(w) + " gave " + std::to_string(g.h) + "x" +
                           std::to_string(g.w);
                break;
            }
        }
    }
    if (r.pass) r.detail = std::to_string(cases) + " sizes";
    return r;
}

CheckResult check_oracle_equivalence(std::size_t instances, std::uint64_t seed, double tol) {
    SplitMix64 rng(seed);
    double worst = 0.0;
    std::string where;
    const std::size_t head_choices[] = {1, 2, 4};
    for (std::size_t n = 0; n < instances; ++n) {
        const std::size_t heads = head_choices[rng.below(3)];
        const std::size_t width = heads * (1 + rng.below(16 / heads));
        const std::size_t h = 1 + rng.below(8), w = 1 + rng.below(8);
        const auto params = random_attention(width, heads, rng);
        const Tensor<D> x = random_tensor(rng, {h, w, width});
        const Tensor<D> fused = run([&](Tape<D>& t) { return mcsa(t, t.constant(x), params, WindowSpec{}); });
        const Tensor<D> naive = mcsa_reference(x, params, WindowSpec{});
        for (std::size_t i = 0; i < fused.size(); ++i) {
            const double d = std::abs(fused[i] - naive[i]);
            if (!(d <= worst)) {
                worst = d;
                where = std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(width) + " h=" +
                        std::to_string(heads);
            }
        }
    }
    CheckResult r{"mcsa oracle equivalence", worst <= tol, "max |diff| " + fmt(worst)};
    if (!where.empty()) r.detail += " at " + where;
    r.detail += ", " + std::to_string(instances) + " instances";
    return r;
}

CheckResult check_zero_branch_identity(std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::size_t mismatches = 0;
    for (auto kind : {AttentionKind::central, AttentionKind::global}) {
        auto block = make_block<D>("block", 8, 2, 4, kind, WindowSpec{});
        randomize(block.ln1, rng);
        randomize(block.ln2, rng);
        const Tensor<D> x = random_tensor(rng, {5, 4, 8});
        const Tensor<D> y = run([&](Tape<D>& t) { return simvit_block(t, t.constant(x), block); });
        for (std::size_t i = 0; i < x.size(); ++i) mismatches += y[i] != x[i];
    }
    return {"zero-branch block identity", mismatches == 0, std::to_string(mismatches) + " differing values"};
}

CheckResult check_convex_hull(std::uint64_t seed, std::size_t instances) {
    SplitMix64 rng(seed);
    std::size_t violations = 0;
    for (std::size_t n = 0; n < instances; ++n) {
        const std::size_t rows = 1 + rng.below(12), d = 1 + rng.below(8);
        const Tensor<D> q = random_tensor(rng, {1, d}, -3, 3);
        const Tensor<D> k = random_tensor(rng, {rows, d}, -3, 3);
        const Tensor<D> v = random_tensor(rng, {rows, d}, -3, 3);
        const Tensor<D> out = run([&](Tape<D>& t) { return csa(t, t.constant(q), t.constant(k), t.constant(v)); });
        for (std::size_t j = 0; j < d; ++j) {
            double lo = v.at(0, j), hi = v.at(0, j);
            for (std::size_t i = 1; i < rows; ++i) {
                lo = std::min(lo, v.at(i, j));
                hi = std::max(hi, v.at(i, j));
            }
            violations += !(out.at(0, j) >= lo && out.at(0, j) <= hi);
        }
    }
    return {"csa convex hull", violations == 0,
            std::to_string(violations) + " violations over " + std::to_string(instances) + " instances"};
}

CheckResult check_permutation_invariance(std::uint64_t seed, std::size_t instances, double tol) {
    SplitMix64 rng(seed);
    double worst = 0.0;
    for (std::size_t n = 0; n < instances; ++n) {
        const std::size_t rows = 2 + rng.below(11), d = 1 + rng.below(8);
        const Tensor<D> q = random_tensor(rng, {1, d});
        const Tensor<D> k = random_tensor(rng, {rows, d});
        const Tensor<D> v = random_tensor(rng, {rows, d});
        std::vector<std::size_t> perm(rows);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = rows; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
        Tensor<D> kp({rows, d}), vp({rows, d});
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                kp.at(i, j) = k.at(perm[i], j);
                vp.at(i, j) = v.at(perm[i], j);
            }
        }
        const Tensor<D> a = run([&](Tape<D>& t) { return csa(t, t.constant(q), t.constant(k), t.constant(v)); });
        const Tensor<D> b = run([&](Tape<D>& t) { return csa(t, t.constant(q), t.constant(kp), t.constant(vp)); });
        for (std::size_t j = 0; j < d; ++j) worst = std::max(worst, std::abs(a[j] - b[j]));
    }
    return {"csa joint K/V permutation invariance", worst <= tol, "max |diff| " + fmt(worst)};
}

CheckResult check_translation_equivariance(std::uint64_t seed) {
    SplitMix64 rng(seed);
    const std::size_t h = 9, w = 8, c = 8;
    const auto params = random_attention(c, 2, rng);
    const Tensor<D> x = random_tensor(rng, {h, w, c});
    const Tensor<D> y = run([&](Tape<D>& t) { return mcsa(t, t.constant(x), params, WindowSpec{}); });

    std::size_t compared = 0, mismatches = 0;
    const long shifts[][2] = {{1, 2}, {2, -1}, {-2, -3}, {0, 1}};
    for (const auto& shift : shifts) {
        const long dy = shift[0], dx = shift[1];
        // cells with no source keep fresh noise, so they cannot help
        Tensor<D> xs = random_tensor(rng, {h, w, c});
        for (long i = 0; i < long(h); ++i) {
            for (long j = 0; j < long(w); ++j) {
                const long si = i - dy, sj = j - dx;
                if (si < 0 || sj < 0 || si >= long(h) || sj >= long(w)) continue;
                for (std::size_t ch = 0; ch < c; ++ch) xs.at(i, j, ch) = x.at(si, sj, ch);
            }
        }
        const Tensor<D> ys = run([&](Tape<D>& t) { return mcsa(t, t.constant(xs), params, WindowSpec{}); });
        auto interior = [&](long i, long j) { return i >= 1 && j >= 1 && i <= long(h) - 2 && j <= long(w) - 2; };
        for (long i = 0; i < long(h); ++i) {
            for (long j = 0; j < long(w); ++j) {
                if (!interior(i, j) || !interior(i + dy, j + dx)) continue;
                ++compared;
                for (std::size_t ch = 0; ch < c; ++ch) mismatches += ys.at(i + dy, j + dx, ch) != y.at(i, j, ch);
            }
        }
    }
    return {"mcsa translation equivariance", mismatches == 0 && compared > 0,
            std::to_string(mismatches) + " mismatches over " + std::to_string(compared) + " interior positions"};
}

CheckResult check_softmax_normalization(std::uint64_t seed, double tol) {
    SplitMix64 rng(seed);
    double worst = 0.0;
    std::size_t negatives = 0;
    for (std::size_t n = 1; n <= 64; ++n) {
        const Tensor<D> x = random_tensor(rng, {3, n}, -30, 30);
        const Tensor<D> s = run([&](Tape<D>& t) { return softmax_lastdim(t, t.constant(x)); });
        for (std::size_t r = 0; r < 3; ++r) {
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                sum += s.at(r, i);
                negatives += s.at(r, i) < 0.0;
            }
            worst = std::max(worst, std::abs(sum - 1.0));
        }
    }
    return {"softmax normalization", worst <= tol && negatives == 0,
            "max |sum - 1| " + fmt(worst) + ", " + std::to_string(negatives) + " negative entries"};
}

CheckResult check_zero_pos_bias(std::uint64_t seed) {
    SplitMix64 rng(seed);
    auto params = random_attention(8, 2, rng);
    const Tensor<D> x = random_tensor(rng, {3, 4, 8});
    const Tensor<D> plain = run([&](Tape<D>& t) { return msa(t, t.constant(x), params); });
    params.pos_bias = Tensor<D>({12, 12});
    const Tensor<D> biased = run([&](Tape<D>& t) { return msa(t, t.constant(x), params); });
    return {"msa zero pos_bias", plain == biased, plain == biased ? "bit-identical" : "outputs differ"};
}

std::vector<CheckResult> verify_invariants(std::uint64_t seed) {
    return {check_window_law(WindowSpec{3, 1, 1}),
            check_window_law(WindowSpec{5, 2, 1}),
            check_oracle_equivalence(50, seed),
            check_zero_branch_identity(seed),
            check_convex_hull(seed),
            check_permutation_invariance(seed),
            check_translation_equivariance(seed),
            check_softmax_normalization(seed),
            check_zero_pos_bias(seed)};
}

const char* audit_scope_name(AuditScope scope) {
    switch (scope) {
        case AuditScope::kernel: return "kernel";
        case AuditScope::attention: return "attention";
        case AuditScope::block: return "block";
        case AuditScope::model: return "model";
    }
    return "?";
}

std::optional<AuditScope> parse_audit_scope(std::string_view name) {
    for (auto s : {AuditScope::kernel, AuditScope::attention, AuditScope::block, AuditScope::model})
        if (name == audit_scope_name(s)) return s;
    return std::nullopt;
}

namespace {

GradCheckReport labelled(std::string label, const LossFn& fn, std::vector<Parameter<D>*> params,
                         const GradCheckOptions& options) {
    GradCheckReport report = finite_diff_check(fn, params, options);
    report.label = std::move(label);
    return report;
}

void kernel_audit(std::uint64_t seed, const GradCheckOptions& options, std::vector<GradCheckReport>& out) {
    SplitMix64 rng(seed);
    auto opts = options;
    opts.seed = seed;
    const std::string tag = " seed " + std::to_string(seed);

    {
        auto a = input("a", random_tensor(rng, {3, 4}));
        auto b = input("b", random_tensor(rng, {4, 5}));
        out.push_back(labelled("matmul" + tag, [&](Tape<D>& t) { return matmul(t, t.param(a), t.param(b)); },
                               {&a, &b}, opts));
    }
    {
        auto x = input("x", random_tensor(rng, {2, 3, 4}));
        auto w = input("weight", random_tensor(rng, {4, 5}));
        auto b = input("bias", random_tensor(rng, {5}));
        out.push_back(labelled("linear" + tag,
                               [&](Tape<D>& t) { return linear(t, t.param(x), t.param(w), t.param(b)); },
                               {&x, &w, &b}, opts));
    }
    {
        auto x = input("x", random_tensor(rng, {3, 6}, -3, 3));
        out.push_back(labelled("softmax_lastdim" + tag, [&](Tape<D>& t) { return softmax_lastdim(t, t.param(x)); },
                               {&x}, opts));
    }
    {
        auto x = input("x", random_tensor(rng, {4, 6}, -2, 2));
        auto g = input("gamma", random_tensor(rng, {6}, 0.5, 1.5));
        auto b = input("beta", random_tensor(rng, {6}));
        out.push_back(labelled("layer_norm" + tag,
                               [&](Tape<D>& t) { return layer_norm(t, t.param(x), t.param(g), t.param(b)); },
                               {&x, &g, &b}, opts));
    }
    {
        auto x = input("x", random_tensor(rng, {10}, -3, 3));
        out.push_back(labelled("gelu" + tag, [&](Tape<D>& t) { return gelu(t, t.param(x)); }, {&x}, opts));
    }
    {
        auto x = input("x", random_tensor(rng, {4, 5, 3}));
        auto k = input("kernel", random_tensor(rng, {3, 3, 3}));
        auto b = input("bias", random_tensor(rng, {3}));
        out.push_back(labelled("depthwise_conv3x3" + tag,
                               [&](Tape<D>& t) { return depthwise_conv3x3(t, t.param(x), t.param(k), t.param(b)); },
                               {&x, &k, &b}, opts));
    }
    {
        auto x = input("x", random_tensor(rng, {3, 4, 2}));
        out.push_back(labelled("zero_pad2d" + tag, [&](Tape<D>& t) { return zero_pad2d(t, t.param(x), 2); }, {&x},
                               opts));
    }
    {
        auto x = input("x", random_tensor(rng, {3, 4, 5}));
        out.push_back(labelled("global_avg_pool" + tag,
                               [&](Tape<D>& t) { return global_avg_pool(t, t.param(x)); }, {&x}, opts));
    }
}

void attention_audit(std::uint64_t seed, const GradCheckOptions& options, std::vector<GradCheckReport>& out) {
    SplitMix64 rng(seed);
    auto opts = options;
    opts.seed = seed;
    {
        auto q = input("q", random_tensor(rng, {1, 4}));
        auto k = input("keys", random_tensor(rng, {9, 4}));
        auto v = input("values", random_tensor(rng, {9, 4}));
        out.push_back(labelled("csa", [&](Tape<D>& t) { return csa(t, t.param(q), t.param(k), t.param(v)); },
                               {&q, &k, &v}, opts));
    }
    {
        auto q = input("queries", random_tensor(rng, {6, 4}));
        auto k = input("keys", random_tensor(rng, {6, 4}));
        auto v = input("values", random_tensor(rng, {6, 4}));
        const Tensor<D> bias = random_tensor(rng, {6, 6});
        out.push_back(labelled("sa_global",
                               [&](Tape<D>& t) { return sa_global(t, t.param(q), t.param(k), t.param(v)); },
                               {&q, &k, &v}, opts));
        out.push_back(labelled("sa_global pos_bias",
                               [&](Tape<D>& t) { return sa_global(t, t.param(q), t.param(k), t.param(v), &bias); },
                               {&q, &k, &v}, opts));
    }
    for (const WindowSpec spec : {WindowSpec{3, 1, 1}, WindowSpec{5, 2, 1}}) {
        auto a = random_attention(8, 2, rng);
        auto x = input("x", random_tensor(rng, {5, 4, 8}));
        auto params = params_of(a);
        params.insert(params.begin(), &x);
        out.push_back(labelled("mcsa " + std::to_string(spec.k) + "/" + std::to_string(spec.p) + "/" +
                                   std::to_string(spec.s),
                               [&](Tape<D>& t) { return mcsa(t, t.param(x), a, spec); }, params, opts));
    }
    {
        auto a = random_attention(8, 2, rng);
        auto x = input("x", random_tensor(rng, {3, 3, 8}));
        auto params = params_of(a);
        params.insert(params.begin(), &x);
        out.push_back(labelled("msa", [&](Tape<D>& t) { return msa(t, t.param(x), a); }, params, opts));
    }
}

void block_audit(std::uint64_t seed, const GradCheckOptions& options, std::vector<GradCheckReport>& out) {
    SplitMix64 rng(seed);
    auto opts = options;
    opts.seed = seed;
    {
        auto pe = make_patch_embed<D>("embed", 2, 3, 6);
        randomize(pe.proj, rng, 0.5);
        randomize(pe.norm, rng);
        auto x = input("x", random_tensor(rng, {8, 6, 3}));
        std::vector<Parameter<D>*> params{&x, &pe.proj.weight, &pe.proj.bias, &pe.norm.gamma, &pe.norm.beta};
        out.push_back(labelled("patch_embed", [&](Tape<D>& t) { return patch_embed(t, t.param(x), pe); }, params,
                               opts));
    }
    {
        auto ffn = make_conv_ffn<D>("ffn", 4, 2);
        randomize(ffn, rng);
        auto x = input("x", random_tensor(rng, {4, 5, 4}));
        auto params = params_of(ffn);
        params.insert(params.begin(), &x);
        out.push_back(labelled("conv_ffn", [&](Tape<D>& t) { return conv_ffn(t, t.param(x), ffn); }, params, opts));
    }
    for (auto kind : {AttentionKind::central, AttentionKind::global}) {
        auto block = make_block<D>("block", 8, 2, 2, kind, WindowSpec{});
        randomize(block, rng);
        auto x = input("x", random_tensor(rng, {4, 4, 8}));
        auto params = params_of(block);
        params.insert(params.begin(), &x);
        out.push_back(labelled(std::string("simvit_block ") + attention_kind_name(kind),
                               [&](Tape<D>& t) { return simvit_block(t, t.param(x), block); }, params, opts));
    }
}

void model_audit(std::uint64_t seed, const GradCheckOptions& options, std::vector<GradCheckReport>& out) {
    const ModelConfig config = preset_config("micro-reduced", 10);
    Model<D> model = build_model<D>(config, seed);
    SplitMix64 rng(seed ^ 0x5eedULL);
    const Tensor<D> image = random_tensor(rng, {32, 32, 3});
    const std::size_t label = seed % config.num_classes;
    auto opts = options;
    opts.seed = seed;
    out.push_back(labelled("micro-reduced 32x32",
                           [&](Tape<D>& t) {
                               return cross_entropy(t, forward_logits(t, model, t.constant(image)), label);
                           },
                           model.parameters(), opts));
}

}  // namespace

std::vector<GradCheckReport> gradient_audit(AuditScope scope, std::uint64_t seed, const GradCheckOptions& options) {
    std::vector<GradCheckReport> out;
    switch (scope) {
        case AuditScope::kernel:
            for (std::uint64_t s = seed; s < seed + 5; ++s) kernel_audit(s, options, out);
            break;
        case AuditScope::attention: attention_audit(seed, options, out); break;
        case AuditScope::block: block_audit(seed, options, out); break;
        case AuditScope::model: model_audit(seed, options, out); break;
    }
    return out;
}

std::string format_report(const GradCheckReport& report) {
    std::ostringstream os;
    for (const auto& e : report.entries) {
        os << report.label << '\t' << e.name << "\tmax_rel_err " << fmt(e.max_rel_error) << "\tchecked " << e.checked
           << '\t' << (e.pass ? "PASS" : "FAIL") << '\n';
    }
    return os.str();
}

}  // namespace simvit
