#include "sgma/head_loss.hpp"

#include <cmath>

#include "sgma/error.hpp"
#include "sgma/ops.hpp"

namespace sgma {

SegHead::SegHead(const HeadConfig& config, const std::array<int64_t, kNumScales>& channels, int num_classes,
                 ParameterStore& params, RngStream& init)
    : config_(config), channels_(channels), num_classes_(num_classes) {
    if (num_classes < 2) throw ConfigError("model.K must be at least 2");
    if (config_.embed_width < 1) throw ConfigError("model.head.embed_width must be positive");
    const int64_t e = config_.embed_width;
    for (int i = 0; i < kNumScales; ++i) {
        const int64_t c = channels_[static_cast<size_t>(i)];
        const std::string p = "head.proj" + std::to_string(i);
        proj_w_[static_cast<size_t>(i)] = params.add_normal(p + ".weight", {c, e}, std::sqrt(1.0 / static_cast<double>(c)), init);
        proj_b_[static_cast<size_t>(i)] = params.add_constant(p + ".bias", {e}, 0.0);
    }
    fuse_w_ = params.add_normal("head.fuse.weight", {kNumScales * e, e},
                                std::sqrt(1.0 / static_cast<double>(kNumScales * e)), init);
    fuse_b_ = params.add_constant("head.fuse.bias", {e}, 0.0);
    cls_w_ = params.add_normal("head.cls.weight", {e, num_classes}, std::sqrt(1.0 / static_cast<double>(e)), init);
    cls_b_ = params.add_constant("head.cls.bias", {num_classes}, 0.0);
}

Var SegHead::forward(const std::array<Var, kNumScales>& features, int64_t out_h, int64_t out_w) const {
    for (int i = 0; i < kNumScales; ++i) {
        const Shape& s = features[static_cast<size_t>(i)].shape();
        if (s.size() != 4 || s[3] != channels_[static_cast<size_t>(i)])
            throw ShapeError("seg_head: scale " + std::to_string(i) + " expects " +
                             std::to_string(channels_[static_cast<size_t>(i)]) + " channels, got " + shape_str(s));
    }
    const Shape& s0 = features[0].shape();
    std::vector<Var> parts;
    for (int i = 0; i < kNumScales; ++i) {
        const Var p = ops::linear(features[static_cast<size_t>(i)], proj_w_[static_cast<size_t>(i)],
                                  proj_b_[static_cast<size_t>(i)]);
        parts.push_back(ops::resize_bilinear(p, s0[1], s0[2]));
    }
    Var x = ops::linear(ops::concat(parts, 3), fuse_w_, fuse_b_);
    x = ops::linear(x, cls_w_, cls_b_);
    return ops::resize_bilinear(x, out_h, out_w);
}

Var segmentation_loss(const Var& logits, const std::vector<int32_t>& labels, int32_t ignore_index) {
    return ops::cross_entropy(logits, labels, ignore_index);
}

double combined_loss(double l_sgf, double l_mas, double lambda_sgf, double lambda_mas) {
    return lambda_sgf * l_sgf + lambda_mas * l_mas;
}

Var combined_loss(const Var& l_sgf, const Var& l_mas, double lambda_sgf, double lambda_mas) {
    const Var a = ops::scale(l_sgf, lambda_sgf);
    if (!l_mas.defined() || lambda_mas == 0.0) return a;
    return ops::add(a, ops::scale(l_mas, lambda_mas));
}

}  // namespace sgma
