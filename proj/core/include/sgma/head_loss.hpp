#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sgma/autograd.hpp"
#include "sgma/encoder.hpp"
#include "sgma/parameters.hpp"

namespace sgma {

struct HeadConfig {
    int64_t embed_width = 64;
};

/// All-linear multi-scale decoder: per-scale projection to a common width,
/// bilinear resampling to the finest grid, concatenation, 1x1 fusion, 1x1
/// classifier and bilinear upsampling to the input size.
class SegHead {
public:
    SegHead(const HeadConfig& config, const std::array<int64_t, kNumScales>& channels, int num_classes,
            ParameterStore& params, RngStream& init);

    /// features[i]: [B, H_i, W_i, C_i]; returns logits [B, out_h, out_w, K].
    Var forward(const std::array<Var, kNumScales>& features, int64_t out_h, int64_t out_w) const;

    int num_classes() const { return num_classes_; }

private:
    HeadConfig config_;
    std::array<int64_t, kNumScales> channels_;
    int num_classes_;
    std::array<Var, kNumScales> proj_w_, proj_b_;
    Var fuse_w_, fuse_b_, cls_w_, cls_b_;
};

/// Mean cross-entropy over non-ignored pixels. logits: [B, H, W, K]; labels
/// are row-major over B, H, W.
Var segmentation_loss(const Var& logits, const std::vector<int32_t>& labels, int32_t ignore_index);

struct LossValues {
    double l_sgf = 0.0;
    double l_mas = 0.0;
    double total = 0.0;
    double lambda_sgf = 2.0;
    double lambda_mas = 1.0;
};

double combined_loss(double l_sgf, double l_mas, double lambda_sgf, double lambda_mas);
Var combined_loss(const Var& l_sgf, const Var& l_mas, double lambda_sgf, double lambda_mas);

}  // namespace sgma
