#include "sgma/mas.hpp"

#include <algorithm>

#include "sgma/error.hpp"
#include "sgma/ops.hpp"

namespace sgma {

Tensor invert_robustness(const Tensor& r, double epsilon) {
    if (r.rank() != 3 && r.rank() != 4) throw ShapeError("invert_robustness: expected [M,H,W] or [B,M,H,W]");
    const int64_t nb = r.rank() == 4 ? r.dim(0) : 1;
    const int64_t nm = r.rank() == 4 ? r.dim(1) : r.dim(0);
    const int64_t np = r.numel() / (nb * nm);
    Tensor out = Tensor::zeros_like(r);
    for (int64_t b = 0; b < nb; ++b)
        for (int64_t p = 0; p < np; ++p) {
            double total = 0.0;
            for (int64_t m = 0; m < nm; ++m) {
                const int64_t i = (b * nm + m) * np + p;
                out[i] = 1.0 / std::max(r[i], epsilon);
                total += out[i];
            }
            for (int64_t m = 0; m < nm; ++m) out[(b * nm + m) * np + p] /= total;
        }
    return out;
}

std::vector<std::vector<double>> pool_probabilities_batched(const Tensor& rhat) {
    if (rhat.rank() != 4) throw ShapeError("pool_probabilities_batched: expected [B,M,H,W]");
    const int64_t nb = rhat.dim(0), nm = rhat.dim(1), np = rhat.dim(2) * rhat.dim(3);
    std::vector<std::vector<double>> out(static_cast<size_t>(nb), std::vector<double>(static_cast<size_t>(nm)));
    for (int64_t b = 0; b < nb; ++b)
        for (int64_t m = 0; m < nm; ++m) {
            double s = 0.0;
            for (int64_t p = 0; p < np; ++p) s += rhat[(b * nm + m) * np + p];
            out[static_cast<size_t>(b)][static_cast<size_t>(m)] = s / static_cast<double>(np);
        }
    return out;
}

std::vector<double> pool_probabilities(const Tensor& rhat) {
    if (rhat.rank() != 3) throw ShapeError("pool_probabilities: expected [M,H,W]");
    return pool_probabilities_batched(rhat.reshaped({1, rhat.dim(0), rhat.dim(1), rhat.dim(2)}))[0];
}

int sample_modality(std::span<const double> probabilities, RngStream& rng) {
    return sample_categorical(probabilities, rng);
}

MasScaleOutput mas_forward(const SgfScale& scale, const std::vector<Var>& semantics, const Tensor& robustness,
                           RngStream& rng, Mode mode, double epsilon) {
    if (mode != Mode::Train) throw UsageError("modality-aware sampling runs only in training mode");
    if (semantics.empty()) throw UsageError("mas_forward: no modalities given");
    if (robustness.rank() != 4 || robustness.dim(1) != static_cast<int64_t>(semantics.size()) ||
        robustness.dim(0) != semantics[0].shape()[0])
        throw ShapeError("mas_forward: robustness " + shape_str(robustness.shape()) + " does not match " +
                         std::to_string(semantics.size()) + " modalities");
    const auto probs = pool_probabilities_batched(invert_robustness(robustness, epsilon));
    std::vector<int> choices;
    for (const auto& s : probs) choices.push_back(sample_modality(s, rng));
    MasScaleOutput out = mas_forward(scale, semantics, choices, mode);
    out.probabilities = probs;
    return out;
}

MasScaleOutput mas_forward(const SgfScale& scale, const std::vector<Var>& semantics, const std::vector<int>& choices,
                           Mode mode) {
    if (mode != Mode::Train) throw UsageError("modality-aware sampling runs only in training mode");
    if (semantics.empty()) throw UsageError("mas_forward: no modalities given");
    const Var selected = semantics.size() == 1 ? semantics[0] : ops::select_per_sample(semantics, choices);
    MasScaleOutput out;
    out.choices = choices;
    out.fused = scale.fuse({selected}).fused;
    return out;
}

}  // namespace sgma
