#include <gtest/gtest.h>

#include <cmath>

#include "sgma/error.hpp"
#include "sgma/ops.hpp"
#include "support.hpp"

namespace sgma {
namespace {

using test::random_tensor;
using test::random_var;

Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    const int64_t n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3);
    const int64_t k = w.dim(0), co = w.dim(3);
    const int64_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
    Tensor out({n, oh, ow, co});
    for (int64_t bi = 0; bi < n; ++bi)
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t xx = 0; xx < ow; ++xx)
                for (int64_t o = 0; o < co; ++o) {
                    double acc = b[o];
                    for (int64_t ky = 0; ky < k; ++ky)
                        for (int64_t kx = 0; kx < k; ++kx) {
                            const int64_t iy = y * stride + ky - pad, ix = xx * stride + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                            for (int64_t c = 0; c < ci; ++c)
                                acc += x.at({bi, iy, ix, c}) * w.at({ky, kx, c, o});
                        }
                    out.at({bi, y, xx, o}) = acc;
                }
    return out;
}

Tensor depthwise_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
    const int64_t n = x.dim(0), h = x.dim(1), wd = x.dim(2), c = x.dim(3), k = w.dim(0), pad = k / 2;
    Tensor out(x.shape());
    for (int64_t bi = 0; bi < n; ++bi)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < wd; ++xx)
                for (int64_t ch = 0; ch < c; ++ch) {
                    double acc = b[ch];
                    for (int64_t ky = 0; ky < k; ++ky)
                        for (int64_t kx = 0; kx < k; ++kx) {
                            const int64_t iy = y + ky - pad, ix = xx + kx - pad;
                            if (iy >= 0 && iy < h && ix >= 0 && ix < wd) acc += x.at({bi, iy, ix, ch}) * w.at({ky, kx, ch});
                        }
                    out.at({bi, y, xx, ch}) = acc;
                }
    return out;
}

TEST(Ops, LinearMatchesLoops) {
    RngStream rng("t", 1);
    const Tensor x = random_tensor({3, 5, 7}, rng), w = random_tensor({7, 9}, rng), b = random_tensor({9}, rng);
    const Tensor y = ops::linear(Var(x), Var(w), Var(b)).value();
    for (int64_t r = 0; r < 15; ++r)
        for (int64_t o = 0; o < 9; ++o) {
            double acc = b[o];
            for (int64_t i = 0; i < 7; ++i) acc += x[r * 7 + i] * w[i * 9 + o];
            EXPECT_NEAR(y[r * 9 + o], acc, 1e-12);
        }
}

TEST(Ops, Conv2dMatchesLoops) {
    RngStream rng("t", 2);
    for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, {4, 4, 0}, {2, 2, 0}, {3, 2, 1}}) {
        const Tensor x = random_tensor({2, 8, 8, 3}, rng), w = random_tensor({k, k, 3, 5}, rng),
                     b = random_tensor({5}, rng);
        const Tensor y = ops::conv2d(Var(x), Var(w), Var(b), stride, pad).value();
        EXPECT_LT(max_abs_diff(y, conv_oracle(x, w, b, stride, pad)), 1e-12) << "k=" << k << " stride=" << stride;
    }
}

TEST(Ops, DepthwiseMatchesLoops) {
    RngStream rng("t", 3);
    for (int k : {1, 3, 7, 11}) {
        const Tensor x = random_tensor({2, 6, 9, 10}, rng), w = random_tensor({k, k, 10}, rng),
                     b = random_tensor({10}, rng);
        const Tensor y = ops::depthwise_conv2d(Var(x), Var(w), Var(b)).value();
        EXPECT_LT(max_abs_diff(y, depthwise_oracle(x, w, b)), 1e-12) << "k=" << k;
    }
}

TEST(Ops, SoftmaxSumsToOneAlongAxis) {
    RngStream rng("t", 4);
    const Tensor x = random_tensor({3, 4, 5}, rng, 5.0);
    const Tensor y = ops::softmax(Var(x), 1).value();
    for (int64_t a = 0; a < 3; ++a)
        for (int64_t c = 0; c < 5; ++c) {
            double s = 0.0;
            for (int64_t b = 0; b < 4; ++b) s += y.at({a, b, c});
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
}

TEST(Ops, BatchedMatmulTnMatchesLoops) {
    RngStream rng("t", 5);
    const Tensor a = random_tensor({2, 6, 3}, rng), x = random_tensor({2, 6, 4}, rng);
    const Tensor y = ops::batched_matmul_tn(Var(a), Var(x)).value();
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t k = 0; k < 3; ++k)
            for (int64_t c = 0; c < 4; ++c) {
                double acc = 0.0;
                for (int64_t p = 0; p < 6; ++p) acc += a.at({b, p, k}) * x.at({b, p, c});
                EXPECT_NEAR(y.at({b, k, c}), acc, 1e-12);
            }
}

TEST(Ops, ResizeBilinearIdentityAndConstant) {
    RngStream rng("t", 6);
    const Tensor x = random_tensor({1, 4, 5, 2}, rng);
    EXPECT_LT(max_abs_diff(ops::resize_bilinear(Var(x), 4, 5).value(), x), 1e-14);
    const Tensor c({1, 3, 3, 1}, 2.5);
    const Tensor up = ops::resize_bilinear(Var(c), 12, 7).value();
    for (double v : up.storage()) EXPECT_NEAR(v, 2.5, 1e-14);
}

TEST(Ops, ResizeBilinearHalfPixelUpsample) {
    // 2 -> 4 along one axis: outputs sit at source coordinates -0.25, 0.25, 0.75, 1.25.
    const Tensor x({1, 1, 2, 1}, std::vector<double>{0.0, 1.0});
    const Tensor y = ops::resize_bilinear(Var(x), 1, 4).value();
    EXPECT_NEAR(y[0], 0.0, 1e-14);
    EXPECT_NEAR(y[1], 0.25, 1e-14);
    EXPECT_NEAR(y[2], 0.75, 1e-14);
    EXPECT_NEAR(y[3], 1.0, 1e-14);
}

TEST(Ops, LayerNormZeroMeanUnitVariance) {
    RngStream rng("t", 7);
    const Tensor x = random_tensor({5, 16}, rng, 3.0);
    const Tensor y = ops::layer_norm(Var(x), Var(Tensor({16}, 1.0)), Var(Tensor({16}, 0.0))).value();
    for (int64_t r = 0; r < 5; ++r) {
        double m = 0.0, v = 0.0;
        for (int64_t c = 0; c < 16; ++c) m += y[r * 16 + c];
        m /= 16;
        for (int64_t c = 0; c < 16; ++c) v += (y[r * 16 + c] - m) * (y[r * 16 + c] - m);
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v / 16, 1.0, 1e-4);
    }
}

TEST(Ops, CrossEntropyIgnoresLabel) {
    const Tensor logits({2, 2}, std::vector<double>{0.0, 0.0, 5.0, -5.0});
    const Var l = ops::cross_entropy(Var(logits), {1, 255}, 255);
    EXPECT_NEAR(l.value()[0], std::log(2.0), 1e-12);
    EXPECT_THROW(ops::cross_entropy(Var(logits), {255, 255}, 255).value(), Error);
}

TEST(Ops, ShapeErrors) {
    RngStream rng("t", 8);
    EXPECT_THROW(ops::linear(random_var({2, 3}, rng), random_var({4, 5}, rng), Var()), ShapeError);
    EXPECT_THROW(ops::add(random_var({2, 3}, rng), random_var({3, 2}, rng)), ShapeError);
    EXPECT_THROW(ops::concat({random_var({2, 3}, rng), random_var({2, 4}, rng)}, 0), ShapeError);
}

TEST(Ops, BatchedRowsEqualSeparateCallsBitwise) {
    RngStream rng("t", 9);
    const Tensor w = random_tensor({3, 3, 4, 6}, rng), b = random_tensor({6}, rng);
    const Tensor dw = random_tensor({5, 5, 6}, rng), db = random_tensor({6}, rng);
    const Tensor x0 = random_tensor({1, 8, 8, 4}, rng), x1 = random_tensor({1, 8, 8, 4}, rng);
    auto run = [&](const Var& x) {
        return ops::depthwise_conv2d(ops::conv2d(x, Var(w), Var(b), 1, 1), Var(dw), Var(db)).value();
    };
    const Tensor both = run(ops::concat({Var(x0), Var(x1)}, 0));
    const Tensor a = run(Var(x0)), c = run(Var(x1));
    for (int64_t i = 0; i < a.numel(); ++i) {
        EXPECT_EQ(both[i], a[i]);
        EXPECT_EQ(both[a.numel() + i], c[i]);
    }
}

// --- gradients ---------------------------------------------------------------

struct GradCase {
    const char* name;
    std::function<Var(const Var&)> fn;
    Shape shape;
};

TEST(OpsGradient, FiniteDifferences) {
    RngStream rng("t", 10);
    const Var w = random_var({3, 3, 4, 5}, rng, 0.5, true), b = random_var({5}, rng, 0.5, true);
    const Var dw = random_var({3, 3, 4}, rng, 0.5, true), db = random_var({4}, rng, 0.5, true);
    const Var lw = random_var({4, 3}, rng, 0.5, true), lb = random_var({3}, rng, 0.5, true);
    const Var g = random_var({4}, rng, 0.5, true), be = random_var({4}, rng, 0.5, true);
    const std::vector<GradCase> cases{
        {"conv2d", [&](const Var& x) { return ops::conv2d(x, w, b, 1, 1); }, {2, 5, 5, 4}},
        {"conv2d_stride", [&](const Var& x) { return ops::conv2d(x, w, b, 2, 0); }, {1, 7, 7, 4}},
        {"depthwise", [&](const Var& x) { return ops::depthwise_conv2d(x, dw, db); }, {2, 4, 5, 4}},
        {"linear", [&](const Var& x) { return ops::linear(x, lw, lb); }, {3, 4}},
        {"layer_norm", [&](const Var& x) { return ops::layer_norm(x, g, be); }, {3, 4}},
        {"gelu", [](const Var& x) { return ops::gelu(x); }, {10}},
        {"softmax", [](const Var& x) { return ops::softmax(x, 1); }, {2, 5, 3}},
        {"mean", [](const Var& x) { return ops::mean(x, 1); }, {2, 5, 3}},
        {"resize", [](const Var& x) { return ops::resize_bilinear(x, 5, 7); }, {1, 3, 2, 2}},
        {"stack_slice", [](const Var& x) { return ops::slice(ops::stack({x, ops::scale(x, 2.0)}, 1), 1, 1, 1); }, {2, 3}},
    };
    for (const GradCase& c : cases) {
        Var x = random_var(c.shape, rng, 1.0, true);
        const Tensor proj = random_tensor(c.fn(x).shape(), rng);
        const auto loss = [&] { return test::project(c.fn(x), proj); };
        EXPECT_LT(test::fd_check(x, loss, 60), 1e-6) << c.name << " input";
    }
    for (Var* p : std::vector<Var*>{const_cast<Var*>(&w), const_cast<Var*>(&dw), const_cast<Var*>(&g)}) {
        Var x = random_var({1, 5, 5, 4}, rng, 1.0, true);
        std::function<Var()> fn;
        if (p == &w) fn = [&] { return ops::conv2d(x, w, b, 1, 1); };
        if (p == &dw) fn = [&] { return ops::depthwise_conv2d(x, dw, db); };
        if (p == &g) fn = [&] { return ops::layer_norm(x, g, be); };
        const Tensor proj = random_tensor(fn().shape(), rng);
        EXPECT_LT(test::fd_check(*p, [&] { return test::project(fn(), proj); }, 60), 1e-6);
    }
}

TEST(OpsGradient, CrossEntropy) {
    RngStream rng("t", 11);
    Var x = random_var({6, 4}, rng, 1.0, true);
    const std::vector<int32_t> labels{0, 3, 255, 2, 1, 1};
    EXPECT_LT(test::fd_check(x, [&] { return ops::cross_entropy(x, labels, 255); }), 1e-6);
}

TEST(OpsGradient, PixelAttention) {
    RngStream rng("t", 12);
    Var q = random_var({1, 1, 3, 8}, rng, 1.0, true);
    Var k = random_var({1, 4, 2, 8}, rng, 1.0, true);
    Var v = random_var({1, 4, 2, 8}, rng, 1.0, true);
    for (bool mean : {true, false}) {
        const Tensor proj = random_tensor(ops::pixel_attention(q, k, v, 2, mean).output.shape(), rng);
        auto loss = [&] { return test::project(ops::pixel_attention(q, k, v, 2, mean).output, proj); };
        EXPECT_LT(test::fd_check(q, loss), 1e-6);
        EXPECT_LT(test::fd_check(k, loss), 1e-6);
        EXPECT_LT(test::fd_check(v, loss), 1e-6);
    }
}

}  // namespace
}  // namespace sgma
