#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "sgma/autograd.hpp"
#include "sgma/encoder.hpp"
#include "sgma/parameters.hpp"

namespace sgma {

enum class PrototypeNorm {
    Off,      // raw product of compact and semantic features
    Softmax,  // compact features softmax-normalized over all (modality, pixel) rows per class first
};

PrototypeNorm parse_prototype_norm(const std::string& s);
std::string to_string(PrototypeNorm norm);

struct SgfConfig {
    int num_classes = 5;
    int sp_heads = 8;
    int rp_heads = 4;
    /// Depthwise kernel sizes of the modality projector, in application order.
    std::vector<int> mp_kernels{11, 7, 3};
    std::array<int64_t, kNumScales> channels{32, 64, 128, 256};
    PrototypeNorm prototype_norm = PrototypeNorm::Off;
    /// Keep the per-class spatial activations (K-fold memory).
    bool diagnostics = false;

    void validate() const;
};

/// Query/key/value/output projections of one multi-head attention layer.
struct AttentionParams {
    Var wq, bq, wk, bk, wv, bv, wo, bo;

    static AttentionParams create(const std::string& prefix, int64_t channels, ParameterStore& params, RngStream& rng);
};

/// Prototypes [B, K, C]: for every class k, the sum over available modalities m
/// and pixels p of compact[m][p, k] * semantic[m][p, :]. compacts: [B, H, W, K],
/// semantics: [B, H, W, C], aligned by modality.
Var build_prototypes(const std::vector<Var>& compacts, const std::vector<Var>& semantics, PrototypeNorm norm);

struct SpatialPerceptronOutput {
    Var guided;         // f_se, [B, H, W, C]
    Var activations;    // a_se, [B, H, W, K, C]; only when materialized
    Tensor weights;     // head-averaged attention, [B, H*W, K, M]
};

/// Every pixel attends from the K projected prototypes to the M modality
/// features at that pixel; the K outputs are averaged.
SpatialPerceptronOutput spatial_perceptron(const Var& prototypes, const std::vector<Var>& semantics,
                                           const AttentionParams& p, int heads, bool materialize);

struct RobustnessPerceptronOutput {
    Var fused;          // f_SGF, [B, H, W, C]
    Tensor robustness;  // head-averaged attention weights, [B, M, H, W]
};

/// Every pixel attends from its semantic-guided feature to the M modality features.
RobustnessPerceptronOutput robustness_perceptron(const Var& guided, const std::vector<Var>& semantics,
                                                 const AttentionParams& p, int heads);

/// Everything computed by the fusion chain at one scale.
struct ScaleFusion {
    std::vector<Var> compacts;
    Var prototypes;
    SpatialPerceptronOutput spatial;
    Var fused;
    Tensor robustness;  // [B, M, H, W]
};

/// Parameters and stage operations of the fusion block at a single scale.
class SgfScale {
public:
    SgfScale(const SgfConfig& config, int scale, const std::vector<std::string>& modalities, ParameterStore& params,
             RngStream& init);

    int scale() const { return scale_; }
    int64_t channels() const { return channels_; }

    /// Modality-specific projector: depthwise convolutions then a pointwise projection.
    Var project_semantic(const Var& feature, const std::string& modality) const;
    /// Class-aware semantic filter shared by all modalities: C -> K channels.
    Var filter_class(const Var& semantic) const;
    /// Class filter, prototypes, spatial and robustness perceptrons over `semantics`.
    ScaleFusion fuse(const std::vector<Var>& semantics) const;

    const AttentionParams& sp() const { return sp_; }
    const AttentionParams& rp() const { return rp_; }

private:
    struct Projector {
        std::vector<Var> dw_weights, dw_biases;
        Var pw_weight, pw_bias;
    };

    SgfConfig config_;
    int scale_;
    int64_t channels_;
    std::map<std::string, Projector> projectors_;
    Var csf_weight_, csf_bias_;
    AttentionParams sp_, rp_;
};

struct SgfOutput {
    std::vector<std::string> modalities;
    std::array<std::vector<Var>, kNumScales> semantics;  // per scale, per modality
    std::array<ScaleFusion, kNumScales> scales;

    std::array<Var, kNumScales> fused() const;
    /// Robustness maps of scale i for batch entry b: [M, H_i, W_i].
    Tensor robustness(int scale, int64_t batch_index) const;
};

class SemanticGuidedFusion {
public:
    SemanticGuidedFusion(const SgfConfig& config, const std::vector<std::string>& modalities, ParameterStore& params,
                         RngStream& init);

    const SgfConfig& config() const { return config_; }
    const SgfScale& scale(int i) const { return scales_.at(static_cast<size_t>(i)); }

    /// Runs the chain on the modalities in `subset` (in that order); attention
    /// keys cover only those modalities.
    SgfOutput forward(const FeaturePyramid& pyramid, const std::vector<std::string>& subset) const;

private:
    SgfConfig config_;
    std::vector<SgfScale> scales_;
};

}  // namespace sgma
