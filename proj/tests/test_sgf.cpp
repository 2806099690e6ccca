#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sgma/error.hpp"
#include "sgma/model.hpp"
#include "sgma/ops.hpp"
#include "sgma/sgf.hpp"
#include "support.hpp"

namespace sgma {

void PrintTo(Variant v, std::ostream* os) { *os << to_string(v); }

namespace {

using test::random_tensor;
using test::random_var;

std::vector<Tensor> values(const std::vector<Var>& xs) {
    std::vector<Tensor> out;
    for (const Var& x : xs) out.push_back(x.value());
    return out;
}

TEST(Prototypes, MatchLoopOracle) {
    RngStream rng("proto", 1);
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t nm = 1 + trial % 3, nk = 2 + trial % 4, nc = 4 + 4 * (trial % 3);
        std::vector<Var> compacts, semantics;
        for (int64_t m = 0; m < nm; ++m) {
            compacts.push_back(random_var({2, 8, 8, nk}, rng));
            semantics.push_back(random_var({2, 8, 8, nc}, rng));
        }
        for (PrototypeNorm norm : {PrototypeNorm::Off, PrototypeNorm::Softmax}) {
            const Tensor got = build_prototypes(compacts, semantics, norm).value();
            const Tensor want = oracle::prototypes(values(compacts), values(semantics), norm == PrototypeNorm::Softmax);
            EXPECT_LT(max_abs_diff(got, want), 1e-10);
        }
    }
}

TEST(Prototypes, RejectMisalignedInputs) {
    RngStream rng("proto", 2);
    EXPECT_THROW(build_prototypes({random_var({1, 4, 4, 3}, rng)}, {random_var({1, 4, 5, 8}, rng)}, PrototypeNorm::Off),
                 ShapeError);
    EXPECT_THROW(build_prototypes({random_var({1, 4, 4, 3}, rng)}, {}, PrototypeNorm::Off), Error);
}

struct AttentionFixture : ::testing::Test {
    ParameterStore params;
    RngStream rng{"att", 3};
    AttentionParams p = AttentionParams::create("x", 16, params, rng);

    void SetUp() override {
        // Nonzero biases so the oracle exercises them.
        for (Var* b : {&p.bq, &p.bk, &p.bv, &p.bo})
            for (double& v : b->mutable_value().storage()) v = rng.normal(0.0, 0.3);
    }
};

TEST_F(AttentionFixture, SpatialPerceptronMatchesBruteForce) {
    for (int trial = 0; trial < 6; ++trial) {
        const int nm = 1 + trial % 3;
        std::vector<Var> sem;
        for (int m = 0; m < nm; ++m) sem.push_back(random_var({2, 3, 4, 16}, rng));
        const Var protos = random_var({2, 5, 16}, rng);
        const oracle::SpatialOut want = oracle::spatial(protos.value(), values(sem), p, 4);
        for (bool materialize : {false, true}) {
            const SpatialPerceptronOutput got = spatial_perceptron(protos, sem, p, 4, materialize);
            EXPECT_LT(max_abs_diff(got.guided.value(), want.guided), 1e-10);
            EXPECT_LT(max_abs_diff(got.weights, want.weights), 1e-12);
            if (materialize) {
                EXPECT_EQ(got.activations.shape(), (Shape{2, 3, 4, 5, 16}));
                const Tensor mean = ops::mean(got.activations, 3).value();
                EXPECT_LT(max_abs_diff(mean, want.guided), 1e-10);
            }
        }
    }
}

TEST_F(AttentionFixture, RobustnessPerceptronMatchesBruteForce) {
    for (int nm = 1; nm <= 4; ++nm) {
        std::vector<Var> sem;
        for (int m = 0; m < nm; ++m) sem.push_back(random_var({2, 4, 3, 16}, rng));
        const Var guided = random_var({2, 4, 3, 16}, rng);
        const RobustnessPerceptronOutput got = robustness_perceptron(guided, sem, p, 2);
        const oracle::RobustOut want = oracle::robust(guided.value(), values(sem), p, 2);
        EXPECT_LT(max_abs_diff(got.fused.value(), want.fused), 1e-10);
        EXPECT_LT(max_abs_diff(got.robustness, want.robustness), 1e-12);
        EXPECT_EQ(got.robustness.shape(), (Shape{2, nm, 4, 3}));
    }
}

TEST_F(AttentionFixture, RobustnessColumnsSumToOne) {
    for (int nm = 1; nm <= 4; ++nm) {
        std::vector<Var> sem;
        for (int m = 0; m < nm; ++m) sem.push_back(random_var({1, 5, 5, 16}, rng, 3.0));
        const Tensor r = robustness_perceptron(random_var({1, 5, 5, 16}, rng), sem, p, 4).robustness;
        for (int64_t px = 0; px < 25; ++px) {
            double s = 0.0;
            for (int m = 0; m < nm; ++m) s += r[m * 25 + px];
            EXPECT_NEAR(s, 1.0, 1e-12);
            if (nm == 1) {
                EXPECT_EQ(r[px], 1.0);
            }
        }
    }
}

TEST(SgfScale, ProjectorRejectsUnknownModality) {
    ParameterStore params;
    RngStream rng("init", 1);
    SgfConfig cfg;
    cfg.channels = {8, 8, 8, 8};
    cfg.sp_heads = 4;
    cfg.rp_heads = 2;
    const SgfScale sc(cfg, 0, {"R", "D"}, params, rng);
    EXPECT_THROW(sc.project_semantic(random_var({1, 4, 4, 8}, rng), "T"), UsageError);
    EXPECT_THROW(sc.project_semantic(random_var({1, 4, 4, 6}, rng), "R"), ShapeError);
    EXPECT_EQ(sc.project_semantic(random_var({1, 4, 4, 8}, rng), "R").shape(), (Shape{1, 4, 4, 8}));
}

TEST(SgfScale, ProjectorIsDepthwiseChainThenPointwise) {
    ParameterStore params;
    RngStream rng("init", 2);
    SgfConfig cfg;
    cfg.channels = {8, 8, 8, 8};
    cfg.sp_heads = 4;
    cfg.rp_heads = 2;
    cfg.mp_kernels = {5, 3};
    const SgfScale sc(cfg, 1, {"R"}, params, rng);
    const Var x = random_var({1, 6, 6, 8}, rng);
    Var y = ops::depthwise_conv2d(x, params.get("sgf.scale1.mp.R.dw0.weight"), params.get("sgf.scale1.mp.R.dw0.bias"));
    y = ops::depthwise_conv2d(y, params.get("sgf.scale1.mp.R.dw1.weight"), params.get("sgf.scale1.mp.R.dw1.bias"));
    y = ops::linear(y, params.get("sgf.scale1.mp.R.pw.weight"), params.get("sgf.scale1.mp.R.pw.bias"));
    EXPECT_EQ(max_abs_diff(sc.project_semantic(x, "R").value(), y.value()), 0.0);
}

TEST(SgfConfig, Validation) {
    SgfConfig cfg;
    cfg.channels = {8, 12, 16, 16};
    cfg.sp_heads = 8;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.channels = {8, 16, 16, 16};
    cfg.rp_heads = 4;
    EXPECT_NO_THROW(cfg.validate());
    cfg.mp_kernels = {4};
    EXPECT_THROW(cfg.validate(), ConfigError);
    EXPECT_THROW(parse_prototype_norm("l2"), ConfigError);
}

class ModelSubsets : public ::testing::TestWithParam<Variant> {};

TEST_P(ModelSubsets, AcceptEverySubsetAndIgnoreOrder) {
    Config cfg = test::tiny_config(GetParam());
    const Model model(cfg);
    const Dataset ds = synthetic_dataset(cfg.data.synthetic);
    const std::vector<const ModalityBundle*> batch{&ds.val[0], &ds.val[1]};
    NoGradGuard g;
    const std::vector<std::vector<std::string>> orders{{"R", "D", "N"}, {"N", "R", "D"}, {"D", "N", "R"}};
    const Tensor ref = model.logits(batch, orders[0]).value();
    for (const auto& o : orders) EXPECT_LT(max_abs_diff(model.logits(batch, o).value(), ref), 1e-9);
    EXPECT_LT(max_abs_diff(model.logits(batch, {"R", "N"}).value(), model.logits(batch, {"N", "R"}).value()), 1e-9);
    for (const auto& s : std::vector<std::vector<std::string>>{{"R"}, {"D"}, {"N"}, {"R", "D"}, {"D", "N"}})
        EXPECT_EQ(model.logits(batch, s).shape(), (Shape{2, 32, 32, 3}));
    EXPECT_THROW(model.logits(batch, {}), UsageError);
    EXPECT_THROW(model.logits(batch, {"R", "R"}), UsageError);
    EXPECT_THROW(model.logits(batch, {"T"}), UsageError);
}

INSTANTIATE_TEST_SUITE_P(Variants, ModelSubsets, ::testing::Values(Variant::A, Variant::B, Variant::C),
                         [](const ::testing::TestParamInfo<Variant>& info) { return to_string(info.param); });

TEST(Model, VariantAHasNoFusionParameters) {
    const Model a(test::tiny_config(Variant::A));
    const Model c(test::tiny_config(Variant::C));
    EXPECT_EQ(a.params().scalar_count("sgf."), 0);
    EXPECT_GT(c.params().scalar_count("sgf."), 0);
    EXPECT_THROW(a.sgf(), UsageError);
    EXPECT_EQ(a.params().scalar_count("encoder."), c.params().scalar_count("encoder."));
}

TEST(Model, SingleModalityRobustnessIsOne) {
    Config cfg = test::tiny_config(Variant::C);
    const Model model(cfg);
    const Dataset ds = synthetic_dataset(cfg.data.synthetic);
    NoGradGuard g;
    const FeaturePyramid pyr = extract_features(model.encoder(), ds.val[0], {"D"});
    const FusionOutput f = model.fuse(pyr, {"D"});
    for (int s = 0; s < kNumScales; ++s) {
        const Tensor r = f.sgf->robustness(s, 0);
        for (double v : r.storage()) EXPECT_EQ(v, 1.0);
    }
}

}  // namespace
}  // namespace sgma
