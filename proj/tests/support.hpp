#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <algorithm>
#include <functional>
#include <vector>

#include "sgma/autograd.hpp"
#include "sgma/config.hpp"
#include "sgma/data.hpp"
#include "sgma/ops.hpp"
#include "sgma/rng.hpp"
#include "sgma/tensor.hpp"

namespace sgma::test {

inline Tensor random_tensor(Shape shape, RngStream& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.storage()) v = rng.normal(0.0, scale);
    return t;
}

inline Var random_var(Shape shape, RngStream& rng, double scale = 1.0, bool requires_grad = false) {
    return Var(random_tensor(std::move(shape), rng, scale), requires_grad);
}

/// Model with 16x16-friendly widths: C = [8, 16, 16, 16], K = 3.
inline Config tiny_config(Variant variant = Variant::C) {
    Config c = Config::desk();
    c.model.num_classes = 3;
    c.model.encoder.stage_channels = {8, 16, 16, 16};
    c.model.encoder.blocks_per_stage = 1;
    c.model.head.embed_width = 8;
    c.model.sp_heads = 4;
    c.model.rp_heads = 2;
    c.model.mp_kernels = {5, 3};
    c.train.variant = variant;
    c.train.batch_size = 2;
    c.train.epochs = 2;
    c.train.warmup_epochs = 1;
    c.train.val_every = 1;
    c.eval.batch_size = 2;
    SynthSpec& s = c.data.synthetic;
    s.num_classes = 3;
    s.class_names = {"a", "b", "c"};
    s.image_size = 32;
    s.train_samples = 4;
    s.val_samples = 2;
    s.modalities = {{"R", 3, {0, 1, 2}, 0.05}, {"D", 1, {0, 1, 1}, 0.05}, {"N", 1, {0, 0, 1}, 0.1}};
    return c;
}

/// Largest relative error between the analytic gradient of `param` and a
/// fourth-order central difference of `loss`, over up to `max_entries` evenly
/// spaced entries. The denominator is floored at `floor` so that entries whose
/// true gradient vanishes are compared in absolute terms.
inline double fd_check(Var& param, const std::function<Var()>& loss, int64_t max_entries = 40, double h = 1e-4,
                       double floor = 1e-6) {
    param.zero_grad();
    Var l = loss();
    backward(l);
    const Tensor analytic = param.grad();
    auto eval_at = [&](double& x, double v) {
        x = v;
        NoGradGuard g;
        return loss().value()[0];
    };
    double worst = 0.0;
    const int64_t n = std::min<int64_t>(param.value().numel(), max_entries);
    const int64_t stride = std::max<int64_t>(1, param.value().numel() / n);
    for (int64_t i = 0, done = 0; i < param.value().numel() && done < n; i += stride, ++done) {
        double& x = param.mutable_value()[i];
        const double saved = x;
        const double f2 = eval_at(x, saved + 2 * h), f1 = eval_at(x, saved + h);
        const double b1 = eval_at(x, saved - h), b2 = eval_at(x, saved - 2 * h);
        x = saved;
        const double numeric = (-f2 + 8.0 * f1 - 8.0 * b1 + b2) / (12.0 * h);
        const double err = std::abs(numeric - analytic[i]) / std::max({std::abs(numeric), std::abs(analytic[i]), floor});
        if (std::getenv("SGMA_FD_TRACE") && err > 1e-5)
            std::fprintf(stderr, "fd %lld: analytic %.6e numeric %.6e err %.2e\n", static_cast<long long>(i),
                         analytic[i], numeric, err);
        worst = std::max(worst, err);
    }
    return worst;
}

/// sum(x * weights) as a [1, 1] Var; weights must have x's element count.
inline Var project(const Var& x, const Tensor& weights) {
    const Var flat = ops::reshape(x, {1, x.value().numel()});
    return ops::linear(flat, Var(weights.reshaped({weights.numel(), 1})), Var());
}

}  // namespace sgma::test
