#include "simvit/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>

#include "simvit/analysis.hpp"
#include "simvit/checks.hpp"
#include "simvit/io.hpp"
#include "simvit/random.hpp"

namespace simvit {

namespace {

std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

// Options shared by every command that needs a model configuration.
struct ModelArgs {
    std::string variant = "micro";
    std::string config_path;
    std::optional<std::size_t> classes;

    void add_to(CLI::App& cmd, const std::string& default_variant) {
        variant = default_variant;
        cmd.add_option("--variant", variant, "Preset name")->check(CLI::IsMember(preset_names()));
        cmd.add_option("--config", config_path, "Run config file; replaces --variant")->check(CLI::ExistingFile);
        cmd.add_option("--classes", classes, "Number of classes (default 10 for micro-reduced, else 1000)");
    }

    ModelConfig resolve() const {
        ModelConfig config;
        if (!config_path.empty()) {
            config = load_run_config(config_path).model;
        } else {
            config = preset_config(variant, variant == "micro-reduced" ? 10 : 1000);
        }
        if (classes) config.num_classes = *classes;
        config.validate();
        return config;
    }
};

struct MapStats {
    double mean = 0.0, stddev = 0.0;
};

MapStats stats_of(const Tensor<float>& t) {
    double sum = 0.0, sq = 0.0;
    for (float v : t.data()) sum += v;
    const double mean = sum / double(t.size());
    for (float v : t.data()) sq += (v - mean) * (v - mean);
    return {mean, std::sqrt(sq / double(t.size()))};
}

std::string dims(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out;
}

int cmd_describe(const ModelArgs& m, std::size_t res, std::ostream& out) {
    out << describe(m.resolve(), res, res);
    return kExitOk;
}

int cmd_gradcheck(const std::string& scope_name, std::uint64_t seed, std::ostream& out) {
    std::vector<AuditScope> scopes;
    if (scope_name == "all") {
        scopes = {AuditScope::kernel, AuditScope::attention, AuditScope::block, AuditScope::model};
    } else {
        scopes = {*parse_audit_scope(scope_name)};
    }
    bool pass = true;
    for (AuditScope scope : scopes) {
        bool scope_pass = true;
        double worst = 0.0;
        for (const auto& report : gradient_audit(scope, seed)) {
            out << format_report(report);
            scope_pass = scope_pass && report.pass();
            if (const auto* w = report.worst(); w && !(w->max_rel_error <= worst)) worst = w->max_rel_error;
        }
        out << "gradcheck " << audit_scope_name(scope) << ' ' << (scope_pass ? "PASS" : "FAIL") << " worst "
            << sci(worst) << '\n';
        pass = pass && scope_pass;
    }
    return pass ? kExitOk : kExitCheckFailed;
}

struct ForwardArgs {
    std::string image_path, weights_path;
    bool random = false;
    std::size_t res = 224;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> toy_seed;
};

int cmd_forward(const ModelArgs& m, const ForwardArgs& f, std::ostream& out) {
    const ModelConfig config = m.resolve();
    const Model<float> model =
        f.weights_path.empty() ? build_model<float>(config, f.seed) : load_weights<float>(f.weights_path, config);

    if (f.toy_seed) {
        const ToyDataset data = gen_toy_dataset(*f.toy_seed, 256, config.num_classes);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < data.size(); ++i)
            hits += argmax(forward_classify(model, data.image<float>(i))) == data.labels[i];
        out << "toy_accuracy\t" << fixed(double(hits) / double(data.size())) << '\n';
        if (f.image_path.empty() && !f.random) return kExitOk;
    }

    Tensor<float> image;
    if (!f.image_path.empty()) {
        image = read_ppm<float>(f.image_path);
    } else {
        image = Tensor<float>({f.res, f.res, config.in_channels});
        SplitMix64 rng(f.seed);
        for (float& v : image.data()) v = float(rng.uniform(-1.0, 1.0));
    }
    Tape<float> tape(false);
    const Var input = tape.constant(image);
    const std::vector<Var> maps = forward_features(tape, model, input);
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const Tensor<float>& map = tape.value(maps[i]);
        const MapStats s = stats_of(map);
        out << 'F' << (i + 1) << '\t' << dims(map.shape()) << "\tmean " << fixed(s.mean) << "\tstd "
            << fixed(s.stddev) << '\n';
    }
    const Tensor<float> logits = forward_classify(model, image);
    out << "logits";
    for (float v : logits.data()) out << '\t' << fixed(v);
    out << "\nargmax\t" << argmax(logits) << '\n';
    return kExitOk;
}

int cmd_verify(std::uint64_t seed, std::ostream& out) {
    const auto results = verify_invariants(seed);
    for (const auto& r : results) out << (r.pass ? "PASS" : "FAIL") << '\t' << r.name << '\t' << r.detail << '\n';
    const bool pass = all_pass(results);
    out << "verify " << (pass ? "PASS" : "FAIL") << '\n';
    return pass ? kExitOk : kExitCheckFailed;
}

struct TrainArgs {
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    std::string out_path;
    std::size_t workers = 1;
    double lr = 1e-3;
    std::optional<double> target;
};

int cmd_train(const ModelArgs& m, const TrainArgs& a, std::ostream& out) {
    const ModelConfig config = m.resolve();
    Model<float> model = build_model<float>(config, a.seed);
    const ToyDataset data = gen_toy_dataset(a.seed, 256, config.num_classes);
    TrainOptions opts;
    opts.epochs = a.epochs;
    opts.seed = a.seed;
    opts.lr = a.lr;
    opts.workers = a.workers;
    opts.target_accuracy = a.target;
    opts.trace = &out;
    train_toy(model, data, opts);
    save_weights(model, a.out_path);
    out << "accuracy\t" << fixed(evaluate_toy(model, data)) << '\n';
    out << "saved\t" << a.out_path << '\n';
    return kExitOk;
}

int cmd_eval(const ModelArgs& m, const std::string& weights, std::uint64_t seed, std::ostream& out) {
    const ModelConfig config = m.resolve();
    const Model<float> model = load_weights<float>(weights, config);
    const ToyDataset data = gen_toy_dataset(seed, 256, config.num_classes);
    out << "accuracy\t" << fixed(evaluate_toy(model, data)) << '\n';
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sliding-window vision transformer toolkit", "simvit"};
    app.require_subcommand(1);

    std::size_t res = 224;
    std::uint64_t seed = 0;

    ModelArgs describe_model;
    auto* describe_cmd = app.add_subcommand("describe", "Per-stage parameter and MAC table");
    describe_model.add_to(*describe_cmd, "micro");
    describe_cmd->add_option("--res", res, "Square input resolution");

    std::string scope = "all";
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient audit (double precision)");
    grad_cmd->add_option("--scope", scope, "kernel, attention, block, model or all")
        ->check(CLI::IsMember({"kernel", "attention", "block", "model", "all"}));
    grad_cmd->add_option("--seed", seed);

    ModelArgs forward_model;
    ForwardArgs fwd;
    std::uint64_t toy_seed = 0;
    auto* forward_cmd = app.add_subcommand("forward", "Feature pyramid statistics and logits for one image");
    forward_model.add_to(*forward_cmd, "micro");
    auto* image_opt = forward_cmd->add_option("--image", fwd.image_path, "Binary PPM input")->check(CLI::ExistingFile);
    auto* random_opt = forward_cmd->add_flag("--random", fwd.random, "Uniform random input in [-1, 1]");
    image_opt->excludes(random_opt);
    forward_cmd->add_option("--res", fwd.res, "Resolution of the random input");
    forward_cmd->add_option("--seed", fwd.seed, "Seed for weights and random input");
    forward_cmd->add_option("--weights", fwd.weights_path, "Weight file to load instead of seeding")
        ->check(CLI::ExistingFile);
    auto* toy_opt = forward_cmd->add_option("--toy-seed", toy_seed, "Also report accuracy on the toy set");

    auto* verify_cmd = app.add_subcommand("verify", "Structural invariant suite");
    verify_cmd->add_option("--seed", seed);

    ModelArgs train_model;
    TrainArgs train;
    double target = 0.0;
    auto* train_cmd = app.add_subcommand("train-toy", "Fit the toy grating set and save the weights");
    train_model.add_to(*train_cmd, "micro-reduced");
    train_cmd->add_option("--epochs", train.epochs);
    train_cmd->add_option("--seed", train.seed, "Seed for weights, data and shuffling");
    train_cmd->add_option("--out", train.out_path, "Weight file to write")->required();
    train_cmd->add_option("--workers", train.workers)->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", train.lr)->check(CLI::PositiveNumber);
    auto* target_opt = train_cmd->add_option("--target-acc", target, "Stop once train accuracy reaches this")
                           ->check(CLI::Range(0.0, 1.0));

    ModelArgs eval_model;
    std::string eval_weights;
    auto* eval_cmd = app.add_subcommand("eval-toy", "Accuracy of saved weights on the toy set");
    eval_model.add_to(*eval_cmd, "micro-reduced");
    eval_cmd->add_option("--weights", eval_weights)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--seed", seed, "Toy dataset seed");

    auto usage = [&](const std::string& message) {
        err << "error: " << message << '\n';
        const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return kExitUsage;
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        return usage(e.what());
    }

    try {
        if (describe_cmd->parsed()) return cmd_describe(describe_model, res, out);
        if (grad_cmd->parsed()) return cmd_gradcheck(scope, seed, out);
        if (forward_cmd->parsed()) {
            if (toy_opt->count()) fwd.toy_seed = toy_seed;
            if (fwd.image_path.empty() && !fwd.random && !fwd.toy_seed) {
                return usage("forward needs --image, --random or --toy-seed");
            }
            return cmd_forward(forward_model, fwd, out);
        }
        if (verify_cmd->parsed()) return cmd_verify(seed, out);
        if (train_cmd->parsed()) {
            if (target_opt->count()) train.target = target;
            return cmd_train(train_model, train, out);
        }
        if (eval_cmd->parsed()) return cmd_eval(eval_model, eval_weights, seed, out);
    } catch (const ValidationError& e) {
        return usage(e.what());
    } catch (const GeometryError& e) {
        return usage(e.what());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitCheckFailed;
    }
    return usage("no subcommand");
}

}  // namespace simvit
