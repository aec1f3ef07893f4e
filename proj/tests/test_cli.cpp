#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "simvit/cli.hpp"

namespace simvit {
namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "simvit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::vector<std::string>> rows(const std::string& text) {
    std::vector<std::vector<std::string>> result;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string cell; std::getline(ls, cell, '\t');) cells.push_back(cell);
        result.push_back(cells);
    }
    return result;
}

std::string value_of(const std::string& text, const std::string& key) {
    for (const auto& r : rows(text))
        if (r.size() == 2 && r[0] == key) return r[1];
    return {};
}

class TempDir : public ::testing::Test {
   protected:
    void SetUp() override {
        dir_ = std::filesystem::temp_directory_path() /
               ("simvit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        std::filesystem::create_directories(dir_);
    }
    void TearDown() override { std::filesystem::remove_all(dir_); }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    std::filesystem::path dir_;
};

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run({}).code, kExitUsage);
    EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
    EXPECT_EQ(run({"describe", "--bogus"}).code, kExitUsage);
    const Result bad_variant = run({"describe", "--variant", "huge"});
    EXPECT_EQ(bad_variant.code, kExitUsage);
    EXPECT_NE(bad_variant.err.find("error:"), std::string::npos);
    EXPECT_NE(bad_variant.err.find("--variant"), std::string::npos);
    EXPECT_EQ(run({"describe", "--res", "100"}).code, kExitUsage);
    EXPECT_EQ(run({"forward"}).code, kExitUsage);
    EXPECT_EQ(run({"train-toy"}).code, kExitUsage);
    EXPECT_EQ(run({"gradcheck", "--scope", "everything"}).code, kExitUsage);
    EXPECT_EQ(run({"eval-toy", "--weights", "/nonexistent.bin"}).code, kExitUsage);
    EXPECT_EQ(run({"describe", "--classes", "0"}).code, kExitUsage);
}

TEST(Cli, HelpExitsZero) {
    const Result r = run({"--help"});
    EXPECT_EQ(r.code, kExitOk);
    EXPECT_NE(r.out.find("train-toy"), std::string::npos);
}

TEST(Cli, DescribeMicro) {
    const Result r = run({"describe", "--variant", "micro"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto t = rows(r.out);
    ASSERT_EQ(t.size(), 7u);
    EXPECT_EQ(t.back()[0], "total");
    const double params_m = std::stod(t.back()[11]);
    EXPECT_NEAR(params_m, 3.3, 0.165);
}

TEST(Cli, ForwardRandomPrintsPyramidAndLogits) {
    const Result r = run({"forward", "--variant", "micro", "--random", "--res", "224", "--classes", "10"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto t = rows(r.out);
    ASSERT_EQ(t.size(), 6u);
    const char* expected[] = {"56x56x32", "28x28x64", "14x14x160", "7x7x256"};
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(t[i][0], "F" + std::to_string(i + 1));
        EXPECT_EQ(t[i][1], expected[i]);
    }
    EXPECT_EQ(t[4][0], "logits");
    EXPECT_EQ(t[4].size(), 11u);
    EXPECT_EQ(t[5][0], "argmax");
    EXPECT_EQ(run({"forward", "--variant", "micro", "--random", "--res", "224", "--classes", "10"}).out, r.out);
}

TEST_F(TempDir, ForwardReadsPpm) {
    {
        std::ofstream f(path("img.ppm"), std::ios::binary);
        f << "P6\n32 32\n255\n";
        for (int i = 0; i < 32 * 32 * 3; ++i) f.put(char(i % 251));
    }
    const Result r = run({"forward", "--variant", "micro-reduced", "--image", path("img.ppm")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(rows(r.out)[3][1], "1x1x256");

    std::ofstream(path("bad.ppm")) << "P3\n1 1\n255\n0 0 0\n";
    EXPECT_EQ(run({"forward", "--variant", "micro-reduced", "--image", path("bad.ppm")}).code, kExitCheckFailed);
}

TEST(Cli, VerifyPasses) {
    const Result r = run({"verify", "--seed", "3"});
    EXPECT_EQ(r.code, kExitOk) << r.out;
    EXPECT_NE(r.out.find("verify PASS"), std::string::npos);
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, GradcheckKernelScope) {
    const Result r = run({"gradcheck", "--scope", "kernel", "--seed", "2"});
    EXPECT_EQ(r.code, kExitOk) << r.out;
    EXPECT_NE(r.out.find("gradcheck kernel PASS"), std::string::npos);
}

TEST_F(TempDir, TrainEvalAndForwardAgree) {
    std::ofstream(path("run.cfg")) << "stage = 4 16 1 2 1 central\nstage = 2 32 2 2 1 global\nnum_classes = 10\n";
    const Result train = run({"train-toy", "--config", path("run.cfg"), "--epochs", "3", "--seed", "4", "--workers", "2",
                           "--out", path("w.bin")});
    ASSERT_EQ(train.code, kExitOk) << train.err;
    const auto t = rows(train.out);
    ASSERT_EQ(t.size(), 5u);
    EXPECT_EQ(t[0][0].rfind("epoch 0 loss ", 0), 0u) << t[0][0];
    EXPECT_EQ(t[2][0].rfind("epoch 2 loss ", 0), 0u) << t[2][0];
    EXPECT_EQ(value_of(train.out, "saved"), path("w.bin"));
    const std::string acc = value_of(train.out, "accuracy");
    ASSERT_FALSE(acc.empty());

    const Result eval = run({"eval-toy", "--config", path("run.cfg"), "--weights", path("w.bin"), "--seed", "4"});
    ASSERT_EQ(eval.code, kExitOk) << eval.err;
    EXPECT_EQ(value_of(eval.out, "accuracy"), acc);

    const Result fwd = run({"forward", "--config", path("run.cfg"), "--weights", path("w.bin"), "--toy-seed", "4"});
    ASSERT_EQ(fwd.code, kExitOk) << fwd.err;
    EXPECT_EQ(value_of(fwd.out, "toy_accuracy"), acc);

    // weights for a different architecture are a runtime failure
    const Result wrong = run({"eval-toy", "--weights", path("w.bin")});
    EXPECT_EQ(wrong.code, kExitCheckFailed);
    EXPECT_NE(wrong.err.find("stages.0.embed.proj.weight"), std::string::npos) << wrong.err;
}

TEST_F(TempDir, TrainingIsReproducibleAcrossRuns) {
    std::ofstream(path("run.cfg")) << "stage = 4 16 1 2 1 central\nstage = 2 32 2 2 1 global\nnum_classes = 10\n";
    const auto train = [&](const std::string& out, const std::string& workers) {
        return run({"train-toy", "--config", path("run.cfg"), "--epochs", "2", "--workers", workers, "--out", path(out)});
    };
    const Result a = train("a.bin", "1"), b = train("b.bin", "3");
    ASSERT_EQ(a.code, kExitOk);
    ASSERT_EQ(b.code, kExitOk);
    EXPECT_EQ(rows(a.out)[0], rows(b.out)[0]);
    EXPECT_EQ(rows(a.out)[1], rows(b.out)[1]);
    std::ifstream fa(path("a.bin"), std::ios::binary), fb(path("b.bin"), std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(fa)), {}), bb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_FALSE(ba.empty());
    EXPECT_EQ(ba, bb);
}

}  // namespace
}  // namespace simvit
