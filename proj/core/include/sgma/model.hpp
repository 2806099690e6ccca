#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sgma/config.hpp"
#include "sgma/encoder.hpp"
#include "sgma/head_loss.hpp"
#include "sgma/mas.hpp"
#include "sgma/parameters.hpp"
#include "sgma/sgf.hpp"

namespace sgma {

struct FusionOutput {
    std::array<Var, kNumScales> fused;
    /// Present for variants b and c.
    std::optional<SgfOutput> sgf;
};

/// Encoder, fusion block and segmentation head with their parameters.
class Model {
public:
    explicit Model(const Config& config);

    const Config& config() const { return config_; }
    Variant variant() const { return config_.train.variant; }
    const std::vector<std::string>& modalities() const { return config_.model.modalities; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

    const Encoder& encoder() const { return encoder_; }
    const SegHead& head() const { return head_; }
    /// Throws for variant a, which has no fusion block.
    const SemanticGuidedFusion& sgf() const;

    /// Fusion of the modalities in `subset` (additive for variant a).
    FusionOutput fuse(const FeaturePyramid& pyramid, const std::vector<std::string>& subset) const;

    /// Inference-branch logits [B, H, W, K] for a batch restricted to `subset`.
    Var logits(const std::vector<const ModalityBundle*>& batch, const std::vector<std::string>& subset) const;
    /// Per-pixel argmax of the inference-branch logits, one map per bundle.
    std::vector<LabelMap> infer(const std::vector<const ModalityBundle*>& batch,
                                const std::vector<std::string>& subset) const;
    LabelMap infer(const ModalityBundle& bundle, const std::vector<std::string>& subset) const;

private:
    void check_subset(const std::vector<std::string>& subset) const;

    Config config_;
    ParameterStore params_;
    RngStream init_rng_;
    Encoder encoder_;
    std::optional<SemanticGuidedFusion> sgf_;
    SegHead head_;
};

/// Argmax over the last axis of [B, H, W, K] logits.
std::vector<LabelMap> argmax_labels(const Tensor& logits);

}  // namespace sgma
