#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"

namespace sgma {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<json> read_log(const fs::path& p) {
    std::vector<json> out;
    std::ifstream f(p);
    std::string line;
    while (std::getline(f, line)) out.push_back(json::parse(line));
    return out;
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / "sgma_cli_test";
        fs::remove_all(root_);
        fs::create_directories(root_);
        Config c = test::tiny_config(Variant::C);
        c.train.epochs = 1;
        c.train.warmup_epochs = 0;
        std::ofstream(root_ / "tiny.json") << json(c).dump(2);
    }
    static void TearDownTestSuite() { fs::remove_all(root_); }

    int run(std::vector<std::string> args) {
        out_.str("");
        err_.str("");
        return cli::run(args, out_, err_);
    }
    std::string config() const { return (root_ / "tiny.json").string(); }
    fs::path dir(const std::string& name) const { return root_ / name; }

    static fs::path root_;
    std::ostringstream out_, err_;
};

fs::path Cli::root_;

TEST_F(Cli, SynthDataIsDeterministic) {
    ASSERT_EQ(run({"synth-data", "--config", config(), "--out", dir("d1").string(), "--seed", "5"}), 0) << err_.str();
    ASSERT_EQ(run({"synth-data", "--config", config(), "--out", dir("d2").string(), "--seed", "5"}), 0);
    EXPECT_EQ(slurp(dir("d1") / "manifest.json"), slurp(dir("d2") / "manifest.json"));
    const json man = json::parse(slurp(dir("d1") / "manifest.json"));
    EXPECT_EQ(slurp(dir("d1") / "R" / (man["splits"]["train"][0].get<std::string>() + ".png")),
              slurp(dir("d2") / "R" / (man["splits"]["train"][0].get<std::string>() + ".png")));
    EXPECT_EQ(json::parse(slurp(dir("d1") / "effective_config.json"))["data"]["synthetic"]["seed"], 5);
    ASSERT_EQ(run({"synth-data", "--config", config(), "--out", dir("d3").string(), "--seed", "6"}), 0);
    EXPECT_NE(slurp(dir("d1") / "manifest.json"), slurp(dir("d3") / "manifest.json"));
}

TEST_F(Cli, TrainEvalDiagnosePlot) {
    ASSERT_EQ(run({"synth-data", "--config", config(), "--out", dir("data").string()}), 0) << err_.str();
    const std::string root_override = "data.root=" + dir("data").string();
    ASSERT_EQ(run({"train", "--config", config(), "--out", dir("run").string(), "--override", root_override,
                   "--override", "train.epochs=2", "--seed", "4", "--variant", "b"}),
              0)
        << err_.str();
    const json eff = json::parse(slurp(dir("run") / "effective_config.json"));
    EXPECT_EQ(eff["train"]["epochs"], 2);
    EXPECT_EQ(eff["train"]["variant"], "b");
    EXPECT_EQ(eff["seed"]["mas"], 4);
    EXPECT_EQ(eff["data"]["root"], dir("data").string());
    const auto log = read_log(dir("run") / "train_log.jsonl");
    ASSERT_EQ(log.size(), 2u);
    for (const char* k : {"epoch", "lr", "l_sgf", "l_mas", "total", "val_miou"}) EXPECT_TRUE(log[1].contains(k)) << k;
    EXPECT_EQ(log[1]["val_miou"].size(), 7u);
    EXPECT_TRUE(fs::exists(dir("run") / "best.ckpt"));
    EXPECT_TRUE(fs::exists(dir("run") / "last.ckpt"));

    const std::string ckpt = (dir("run") / "last.ckpt").string();
    ASSERT_EQ(run({"eval", "--config", config(), "--checkpoint", ckpt, "--out", dir("ev1").string(), "--override",
                   root_override}),
              0)
        << err_.str();
    ASSERT_EQ(run({"eval", "--config", config(), "--checkpoint", ckpt, "--out", dir("ev2").string(), "--override",
                   root_override}),
              0);
    EXPECT_EQ(slurp(dir("ev1") / "metrics.json"), slurp(dir("ev2") / "metrics.json"));
    const json m = json::parse(slurp(dir("ev1") / "metrics.json"));
    EXPECT_EQ(m["subsets"].size(), 7u);
    EXPECT_NE(slurp(dir("ev1") / "metrics.md").find("Last-1"), std::string::npos);

    ASSERT_EQ(run({"eval", "--config", config(), "--checkpoint", ckpt, "--out", dir("ev3").string(), "--subset",
                   "R,D", "--override", root_override}),
              0);
    EXPECT_EQ(json::parse(slurp(dir("ev3") / "metrics.json"))["subsets"].size(), 1u);
    EXPECT_NE(run({"eval", "--config", config(), "--checkpoint", ckpt, "--out", dir("ev4").string(), "--subset",
                   "R,T", "--override", root_override}),
              0);

    ASSERT_EQ(run({"diagnose", "--config", config(), "--checkpoint", ckpt, "--out", dir("dg").string(),
                   "--override", root_override}),
              0)
        << err_.str();
    ASSERT_EQ(run({"plot", "--out", dir("fig").string(), "--metrics", (dir("ev1") / "metrics.json").string(),
                   "--diagnostics", (dir("dg") / "diagnostics.json").string()}),
              0)
        << err_.str();
    for (const char* f : {"metrics_table.svg", "robustness_scale0.svg", "robustness_scale3.svg",
                          "intra_class_variance.svg"}) {
        const std::string svg = slurp(dir("fig") / f);
        EXPECT_EQ(svg.rfind("<svg", 0), 0u) << f;
        EXPECT_NE(svg.find("</svg>"), std::string::npos) << f;
    }
}

TEST_F(Cli, UntrainedCheckpointEvaluatesEverySubset) {
    ASSERT_EQ(run({"train", "--config", config(), "--out", dir("zero").string(), "--override", "train.epochs=0",
                   "--override", "train.warmup_epochs=0"}),
              0)
        << err_.str();
    ASSERT_EQ(run({"eval", "--config", config(), "--checkpoint", (dir("zero") / "best.ckpt").string(), "--out",
                   dir("zero_eval").string()}),
              0)
        << err_.str();
    const json m = json::parse(slurp(dir("zero_eval") / "metrics.json"));
    ASSERT_EQ(m["subsets"].size(), 7u);
    for (const auto& s : m["subsets"]) EXPECT_LT(s["miou"].get<double>(), 0.6);
}

TEST_F(Cli, ZeroMasWeightLogsMatchVariantB) {
    ASSERT_EQ(run({"train", "--config", config(), "--out", dir("lm0").string(), "--override", "loss.lambda_mas=0"}), 0)
        << err_.str();
    ASSERT_EQ(run({"train", "--config", config(), "--out", dir("vb").string(), "--variant", "b"}), 0);
    const auto a = read_log(dir("lm0") / "train_log.jsonl"), b = read_log(dir("vb") / "train_log.jsonl");
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i]["l_sgf"], b[i]["l_sgf"]);
        EXPECT_EQ(a[i]["total"], b[i]["total"]);
        EXPECT_EQ(a[i]["val_miou"], b[i]["val_miou"]);
    }
}

TEST_F(Cli, FailuresExitNonzeroWithOneLine) {
    EXPECT_NE(run({"train", "--config", config(), "--out", dir("bad").string(), "--override", "train.nope=1"}), 0);
    EXPECT_NE(err_.str().find("train.nope"), std::string::npos);
    const std::string msg = err_.str();
    EXPECT_EQ(std::count(msg.begin(), msg.end(), '\n'), 1);

    const std::string missing = (dir("nowhere") / "x.ckpt").string();
    EXPECT_NE(run({"eval", "--config", config(), "--checkpoint", missing, "--out", dir("bad2").string()}), 0);
    EXPECT_NE(err_.str().find(missing), std::string::npos);

    EXPECT_NE(run({"train", "--config", (dir("nowhere") / "c.json").string(), "--out", dir("bad3").string()}), 0);
    EXPECT_NE(err_.str().find("c.json"), std::string::npos);
    EXPECT_NE(run({}), 0);
    EXPECT_NE(run({"train", "--out", dir("bad4").string()}), 0);
    EXPECT_NE(run({"train", "--config", config(), "--out", dir("bad5").string(), "--variant", "d"}), 0);
    EXPECT_NE(run({"frobnicate"}), 0);
    EXPECT_NE(run({"plot", "--out", dir("bad6").string()}), 0);
}

}  // namespace
}  // namespace sgma
