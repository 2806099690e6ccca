#pragma once

#include <span>
#include <vector>

#include "sgma/rng.hpp"
#include "sgma/sgf.hpp"

namespace sgma {

enum class Mode { Train, Infer };

/// Reciprocal-and-normalize over the modality axis with a floor of `epsilon`.
/// r: [M, H, W] or [B, M, H, W]; the result has the same shape.
Tensor invert_robustness(const Tensor& r, double epsilon = 1e-8);

/// Spatial mean of each modality map. rhat: [M, H, W] -> M probabilities.
std::vector<double> pool_probabilities(const Tensor& rhat);
/// Batched form: [B, M, H, W] -> B rows of M probabilities.
std::vector<std::vector<double>> pool_probabilities_batched(const Tensor& rhat);

/// Index into the recorded modality order.
int sample_modality(std::span<const double> probabilities, RngStream& rng);

struct MasScaleOutput {
    Var fused;                                       // f_MAS, [B, H, W, C]
    std::vector<int> choices;                        // m* per batch entry, index into the semantics list
    std::vector<std::vector<double>> probabilities;  // s per batch entry
};

/// Inverts and pools `robustness` ([B, M, H, W]), draws one modality per batch
/// entry, and runs the class filter, prototypes and both perceptrons of `scale`
/// on that single modality.
MasScaleOutput mas_forward(const SgfScale& scale, const std::vector<Var>& semantics, const Tensor& robustness,
                           RngStream& rng, Mode mode, double epsilon = 1e-8);

/// Same chain with the modality choices given instead of drawn.
MasScaleOutput mas_forward(const SgfScale& scale, const std::vector<Var>& semantics, const std::vector<int>& choices,
                           Mode mode);

}  // namespace sgma
