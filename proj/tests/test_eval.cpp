#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sgma/error.hpp"
#include "sgma/eval.hpp"
#include "support.hpp"

namespace sgma {
namespace {

TEST(Subsets, EnumerationOrderAndNames) {
    const auto s = enumerate_subsets({"R", "D", "N"});
    std::vector<std::string> names;
    for (const auto& x : s) names.push_back(subset_name(x));
    EXPECT_EQ(names, (std::vector<std::string>{"R", "D", "N", "RD", "RN", "DN", "RDN"}));
    EXPECT_EQ(enumerate_subsets({"a", "b", "c", "d"}).size(), 15u);
    EXPECT_EQ(subset_name({"rgb", "depth"}), "rgb+depth");
}

TEST(Metrics, MatchSetArithmetic) {
    RngStream rng("metrics", 1);
    for (int trial = 0; trial < 200; ++trial) {
        const int k = 2 + trial % 5;
        std::vector<int32_t> pred(256), gt(256);
        for (size_t i = 0; i < 256; ++i) {
            pred[i] = static_cast<int32_t>(rng.uniform_int(0, k - 1));
            gt[i] = rng.uniform() < 0.05 ? 255 : static_cast<int32_t>(rng.uniform_int(0, k - 1));
        }
        const ConfusionMatrix cm = confusion(pred, gt, k, 255);
        const oracle::SetMetrics want = oracle::set_metrics(pred, gt, k, 255);
        EXPECT_NEAR(miou(cm), want.miou, 1e-12);
        EXPECT_NEAR(f1(cm), want.mf1, 1e-12);
        const auto iou = class_iou(cm), f = class_f1(cm);
        for (int c = 0; c < k; ++c) {
            ASSERT_EQ(iou[static_cast<size_t>(c)].has_value(), !std::isnan(want.iou[static_cast<size_t>(c)]));
            if (!iou[static_cast<size_t>(c)]) continue;
            const double j = *iou[static_cast<size_t>(c)];
            EXPECT_NEAR(*f[static_cast<size_t>(c)], 2.0 * j / (1.0 + j), 1e-12);
        }
    }
}

TEST(Metrics, PerfectAndAbsentClasses) {
    const std::vector<int32_t> a{0, 0, 1, 1};
    const ConfusionMatrix cm = confusion(a, a, 4, 255);
    EXPECT_DOUBLE_EQ(miou(cm), 1.0);
    EXPECT_FALSE(class_iou(cm)[3].has_value());
    EXPECT_THROW(miou(confusion(a, std::vector<int32_t>(4, 255), 4, 255)), ValidationError);
    EXPECT_THROW(confusion(std::vector<int32_t>{0, 7}, std::vector<int32_t>{0, 1}, 2, 255), ValidationError);
    EXPECT_THROW(confusion(std::vector<int32_t>{0}, std::vector<int32_t>{0, 1}, 2, 255), ShapeError);
}

TEST(Metrics, AggregateOfPublishedNumbers) {
    const Aggregate a = aggregate({83.51, 57.05, 76.06, 86.62, 84.25, 82.56, 86.84});
    EXPECT_NEAR(a.average, 79.5557, 1e-4);
    EXPECT_DOUBLE_EQ(a.top1, 86.84);
    EXPECT_DOUBLE_EQ(a.last1, 57.05);
    EXPECT_THROW(aggregate({}), UsageError);
}

TEST(MetricsReport, JsonRoundTripAndTable) {
    MetricsReport r;
    r.modalities = {"R", "D"};
    for (const auto& s : enumerate_subsets(r.modalities)) {
        SubsetMetrics m;
        m.modalities = s;
        m.miou = 0.5 + 0.1 * static_cast<double>(s.size());
        m.f1 = 0.6;
        m.confusion = ConfusionMatrix(2);
        m.confusion.at(0, 1) = 3;
        r.subsets.push_back(m);
    }
    r.miou = aggregate({0.6, 0.6, 0.7});
    r.f1 = aggregate({0.6, 0.6, 0.6});
    const MetricsReport back = MetricsReport::from_json(r.to_json());
    EXPECT_EQ(back.to_json(), r.to_json());
    const std::string t = r.table();
    EXPECT_NE(t.find("| Metric | R | D | RD | Average | Top-1 | Last-1 |"), std::string::npos);
    EXPECT_NE(t.find("70.00"), std::string::npos);
}

TEST(Diagnostics, IntraClassVarianceMatchesDirectSum) {
    RngStream rng("icv", 1);
    const Tensor f = test::random_tensor({4, 4, 3}, rng);
    std::vector<int32_t> labels(16);
    for (size_t i = 0; i < 16; ++i) labels[i] = static_cast<int32_t>(i % 3);
    labels[0] = 255;
    labels[5] = 2;  // class 2 now has 6 pixels
    const auto v = intra_class_variance(f, labels, 4, 255);
    for (int k = 0; k < 3; ++k) {
        std::vector<int64_t> idx;
        for (int64_t i = 0; i < 16; ++i)
            if (labels[static_cast<size_t>(i)] == k) idx.push_back(i);
        double ss = 0.0;
        for (int64_t c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (int64_t i : idx) mean += f[i * 3 + c];
            mean /= static_cast<double>(idx.size());
            for (int64_t i : idx) ss += (f[i * 3 + c] - mean) * (f[i * 3 + c] - mean);
        }
        ASSERT_TRUE(v[static_cast<size_t>(k)].has_value());
        EXPECT_NEAR(*v[static_cast<size_t>(k)], ss / static_cast<double>(idx.size() - 1), 1e-12);
    }
    EXPECT_FALSE(v[3].has_value());
}

TEST(Diagnostics, StandardizeAndDownsample) {
    RngStream rng("icv", 2);
    const Tensor f = test::random_tensor({3, 3, 2}, rng, 5.0);
    const Tensor s = standardize(f);
    double m = 0.0, v = 0.0;
    for (double x : s.storage()) m += x;
    m /= static_cast<double>(s.numel());
    for (double x : s.storage()) v += (x - m) * (x - m);
    EXPECT_NEAR(std::sqrt(v / static_cast<double>(s.numel())), 1.0, 1e-9);
    LabelMap l{4, 4, {0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3}};
    EXPECT_EQ(downsample_labels(l, 2, 2), (std::vector<int32_t>{0, 1, 2, 3}));
}

TEST(Diagnostics, SilhouetteOfSeparatedClusters) {
    const std::vector<std::vector<double>> pts{{0.0}, {1.0}, {10.0}, {11.0}};
    const double s0 = 1.0 - 1.0 / 10.5, s1 = 1.0 - 1.0 / 9.5;
    EXPECT_NEAR(silhouette(pts, {0, 0, 1, 1}), (s0 + s1 + s1 + s0) / 4.0, 1e-12);
    EXPECT_THROW(silhouette(pts, {0, 0, 0, 0}), ValidationError);
}

TEST(Complexity, ScalingAndParameterCounts) {
    const Config cfg = Config::desk();
    const ComplexityReport m1 = complexity_report(cfg, 64, 64, 2);
    const ComplexityReport m2 = complexity_report(cfg, 64, 64, 4);
    EXPECT_EQ(m2.flops(sgf_modality_path()) / m1.flops(sgf_modality_path()), 2.0);
    Config k2 = cfg;
    k2.model.num_classes *= 2;
    const ComplexityReport kk = complexity_report(k2, 64, 64, 2);
    EXPECT_EQ(kk.flops(sgf_class_path()) / m1.flops(sgf_class_path()), 2.0);
    const ComplexityReport big = complexity_report(cfg, 256, 128, 2);
    for (const ComponentCost& c : m1.components) EXPECT_EQ(big.component(c.name).params, c.params) << c.name;
    // Linear in the pixel count for every component with spatial extent.
    EXPECT_EQ(big.flops(sgf_modality_path()) / m1.flops(sgf_modality_path()), 8.0);
    EXPECT_THROW(complexity_report(cfg, 48, 64, 2), ShapeError);
}

TEST(Complexity, ParameterCountsMatchTheModel) {
    for (Variant v : {Variant::A, Variant::C}) {
        Config cfg = Config::desk();
        cfg.train.variant = v;
        const Model model(cfg);
        const ComplexityReport r = complexity_report(cfg, 64, 64, 3);
        EXPECT_EQ(r.component("encoder").params, model.params().scalar_count("encoder."));
        EXPECT_EQ(r.component("head").params, model.params().scalar_count("head."));
        if (v == Variant::C) {
            EXPECT_EQ(r.params(sgf_components()), model.params().scalar_count("sgf."));
        }
    }
}

TEST(Complexity, CsfFlopsFromShapes) {
    const Config cfg = Config::desk();
    const ComplexityReport r = complexity_report(cfg, 64, 64, 3);
    double want = 0.0;
    int64_t side = 64 / 4;
    for (int s = 0; s < kNumScales; ++s) {
        if (s > 0) side /= 2;
        want += 2.0 * 3 * static_cast<double>(side * side) * static_cast<double>(cfg.model.encoder.stage_channels[static_cast<size_t>(s)]) * cfg.model.num_classes;
    }
    EXPECT_EQ(r.component("sgf.csf").flops, want);
}

TEST(Evaluate, UntrainedReportHasEverySubset) {
    Config cfg = test::tiny_config(Variant::C);
    const Model model(cfg);
    const Dataset ds = synthetic_dataset(cfg.data.synthetic);
    const MetricsReport r = evaluate(model, ds.val, 3, 255);
    ASSERT_EQ(r.subsets.size(), 7u);
    for (const SubsetMetrics& s : r.subsets) {
        EXPECT_GE(s.miou, 0.0);
        EXPECT_LE(s.miou, 1.0);
        EXPECT_EQ(s.confusion.total(), 2 * 32 * 32);
    }
    const MetricsReport one = evaluate(model, ds.val, 3, 255, {{"D", "R"}});
    ASSERT_EQ(one.subsets.size(), 1u);
    EXPECT_EQ(one.miou.average, one.subsets[0].miou);
}

TEST(Evaluate, DiagnoseReportShape) {
    Config cfg = test::tiny_config(Variant::C);
    cfg.eval.silhouette = true;
    cfg.eval.silhouette_cap = 50;
    const Model model(cfg);
    const Dataset ds = synthetic_dataset(cfg.data.synthetic);
    const DiagnosticsReport d = diagnose(model, ds.val, ds.manifest.class_names, 255);
    ASSERT_EQ(d.robustness.size(), static_cast<size_t>(kNumScales));
    for (const auto& scale : d.robustness) {
        double s = 0.0;
        for (double x : scale) s += x;
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
    EXPECT_EQ(d.intra_class_variance.size(), static_cast<size_t>(kNumScales));
    EXPECT_EQ(d.silhouette.size(), static_cast<size_t>(kNumScales));
    const auto j = d.to_json();
    EXPECT_TRUE(j.contains("complexity"));
    EXPECT_EQ(j["robustness"].size(), 4u);
}

}  // namespace
}  // namespace sgma
