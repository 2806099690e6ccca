#pragma once

#include <array>
#include <string>
#include <vector>

#include "sgma/autograd.hpp"
#include "sgma/data.hpp"
#include "sgma/parameters.hpp"

namespace sgma {

constexpr int kNumScales = 4;
constexpr int kEncoderInputChannels = 3;
constexpr std::array<int, kNumScales> kStageStrides{4, 2, 2, 2};

struct EncoderConfig {
    std::array<int64_t, kNumScales> stage_channels{32, 64, 128, 256};
    int blocks_per_stage = 2;

    /// Channels must be positive and non-decreasing.
    void validate() const;
};

/// Replicates a 1-channel image to 3 channels; 3-channel images pass through.
/// Returns [H, W, 3].
Tensor adapt_modality(const ModalityImage& image);

/// Per-modality feature pyramid. features[m][i] has shape [B, H_i, W_i, C_i]
/// with H_i = H / (4 * 2^i) (0-based scale index i).
struct FeaturePyramid {
    std::vector<std::string> modalities;
    std::vector<std::array<Var, kNumScales>> features;

    const std::array<Var, kNumScales>& at(const std::string& modality) const;
    /// Pyramid restricted to `keep`, in the given order.
    FeaturePyramid subset(const std::vector<std::string>& keep) const;
};

/// Four-stage convolutional backbone shared by every modality. Each stage is a
/// non-overlapping strided convolution followed by pre-norm residual 3x3
/// convolution blocks and a closing layer norm.
class Encoder {
public:
    Encoder(const EncoderConfig& config, ParameterStore& params, RngStream& init);

    const EncoderConfig& config() const { return config_; }

    /// images: [N, H, W, 3] with H and W divisible by 32.
    std::array<Var, kNumScales> forward(const Var& images) const;

private:
    struct Block {
        Var norm_gamma, norm_beta, conv_weight, conv_bias;
    };
    struct Stage {
        Var patch_weight, patch_bias;
        std::vector<Block> blocks;
        Var out_gamma, out_beta;
    };

    EncoderConfig config_;
    std::array<Stage, kNumScales> stages_;
};

/// Stacks the adapted images of `modalities` for a batch of bundles into
/// [M * B, H, W, 3] (modality-major), runs the encoder once and splits the
/// result per modality. With packed == false every modality is encoded by a
/// separate call; both paths give bitwise identical features.
FeaturePyramid extract_features(const Encoder& encoder, const std::vector<const ModalityBundle*>& batch,
                                const std::vector<std::string>& modalities, bool packed = true);

FeaturePyramid extract_features(const Encoder& encoder, const ModalityBundle& bundle,
                                const std::vector<std::string>& modalities, bool packed = true);

}  // namespace sgma
