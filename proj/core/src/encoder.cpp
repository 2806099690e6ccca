#include "sgma/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "sgma/error.hpp"
#include "sgma/ops.hpp"

namespace sgma {

void EncoderConfig::validate() const {
    for (int i = 0; i < kNumScales; ++i) {
        if (stage_channels[static_cast<size_t>(i)] <= 0) throw ConfigError("encoder stage channels must be positive");
        if (i > 0 && stage_channels[static_cast<size_t>(i)] < stage_channels[static_cast<size_t>(i - 1)])
            throw ConfigError("encoder stage channels must be non-decreasing");
    }
    if (blocks_per_stage < 0) throw ConfigError("encoder blocks_per_stage must be non-negative");
}

Tensor adapt_modality(const ModalityImage& image) {
    if (image.channels != 1 && image.channels != 3)
        throw ShapeError("modality '" + image.modality_id + "' has " + std::to_string(image.channels) +
                         " channels; only 1 or 3 are supported");
    Tensor out({image.height, image.width, kEncoderInputChannels});
    const int64_t pixels = image.height * image.width;
    for (int64_t p = 0; p < pixels; ++p)
        for (int c = 0; c < kEncoderInputChannels; ++c)
            out[p * kEncoderInputChannels + c] =
                image.pixels[static_cast<size_t>(image.channels == 1 ? p : p * 3 + c)];
    return out;
}

const std::array<Var, kNumScales>& FeaturePyramid::at(const std::string& modality) const {
    for (size_t i = 0; i < modalities.size(); ++i)
        if (modalities[i] == modality) return features[i];
    throw UsageError("feature pyramid has no modality '" + modality + "'");
}

FeaturePyramid FeaturePyramid::subset(const std::vector<std::string>& keep) const {
    FeaturePyramid out;
    for (const std::string& m : keep) {
        out.modalities.push_back(m);
        out.features.push_back(at(m));
    }
    return out;
}

Encoder::Encoder(const EncoderConfig& config, ParameterStore& params, RngStream& init) : config_(config) {
    config_.validate();
    int64_t cin = kEncoderInputChannels;
    for (int s = 0; s < kNumScales; ++s) {
        const std::string prefix = "encoder.stage" + std::to_string(s);
        const int64_t cout = config_.stage_channels[static_cast<size_t>(s)];
        const int64_t k = kStageStrides[static_cast<size_t>(s)];
        Stage& st = stages_[static_cast<size_t>(s)];
        st.patch_weight = params.add_normal(prefix + ".patch.weight", {k, k, cin, cout},
                                            std::sqrt(2.0 / static_cast<double>(k * k * cin)), init);
        st.patch_bias = params.add_constant(prefix + ".patch.bias", {cout}, 0.0);
        for (int b = 0; b < config_.blocks_per_stage; ++b) {
            const std::string bp = prefix + ".block" + std::to_string(b);
            Block blk;
            blk.norm_gamma = params.add_constant(bp + ".norm.gamma", {cout}, 1.0);
            blk.norm_beta = params.add_constant(bp + ".norm.beta", {cout}, 0.0);
            blk.conv_weight = params.add_normal(bp + ".conv.weight", {3, 3, cout, cout},
                                                0.5 * std::sqrt(1.0 / static_cast<double>(9 * cout)), init);
            blk.conv_bias = params.add_constant(bp + ".conv.bias", {cout}, 0.0);
            st.blocks.push_back(blk);
        }
        st.out_gamma = params.add_constant(prefix + ".out_norm.gamma", {cout}, 1.0);
        st.out_beta = params.add_constant(prefix + ".out_norm.beta", {cout}, 0.0);
        cin = cout;
    }
}

std::array<Var, kNumScales> Encoder::forward(const Var& images) const {
    const Shape& s = images.shape();
    if (s.size() != 4 || s[3] != kEncoderInputChannels)
        throw ShapeError("encoder expects [N, H, W, 3] input, got " + shape_str(s));
    if (s[1] % 32 != 0 || s[2] % 32 != 0)
        throw ShapeError("encoder input " + std::to_string(s[1]) + "x" + std::to_string(s[2]) +
                         " is not divisible by 32");
    std::array<Var, kNumScales> out;
    Var x = images;
    for (int i = 0; i < kNumScales; ++i) {
        const Stage& st = stages_[static_cast<size_t>(i)];
        const int stride = kStageStrides[static_cast<size_t>(i)];
        x = ops::conv2d(x, st.patch_weight, st.patch_bias, stride, 0);
        for (const Block& blk : st.blocks) {
            Var h = ops::layer_norm(x, blk.norm_gamma, blk.norm_beta);
            h = ops::gelu(h);
            h = ops::conv2d(h, blk.conv_weight, blk.conv_bias, 1, 1);
            x = ops::add(x, h);
        }
        x = ops::layer_norm(x, st.out_gamma, st.out_beta);
        out[static_cast<size_t>(i)] = x;
    }
    return out;
}

namespace {

Tensor stack_images(const std::vector<const ModalityBundle*>& batch, const std::string& modality) {
    if (batch.empty()) throw UsageError("extract_features: empty batch");
    const int64_t h = batch[0]->height(), w = batch[0]->width();
    Tensor t({static_cast<int64_t>(batch.size()), h, w, kEncoderInputChannels});
    const int64_t per = h * w * kEncoderInputChannels;
    for (size_t b = 0; b < batch.size(); ++b) {
        if (batch[b]->height() != h || batch[b]->width() != w)
            throw ShapeError("extract_features: batch images differ in size");
        const Tensor a = adapt_modality(batch[b]->image(modality));
        std::copy_n(a.data(), per, t.data() + static_cast<int64_t>(b) * per);
    }
    return t;
}

}  // namespace

FeaturePyramid extract_features(const Encoder& encoder, const std::vector<const ModalityBundle*>& batch,
                                const std::vector<std::string>& modalities, bool packed) {
    if (modalities.empty()) throw UsageError("extract_features: no modalities requested");
    FeaturePyramid pyr;
    pyr.modalities = modalities;
    const auto nb = static_cast<int64_t>(batch.size());
    if (packed) {
        std::vector<Var> per_mod;
        for (const std::string& m : modalities) per_mod.emplace_back(stack_images(batch, m));
        const Var packed_images = per_mod.size() == 1 ? per_mod[0] : ops::concat(per_mod, 0);
        const auto feats = encoder.forward(packed_images);
        for (size_t m = 0; m < modalities.size(); ++m) {
            std::array<Var, kNumScales> f;
            for (int i = 0; i < kNumScales; ++i)
                f[static_cast<size_t>(i)] = modalities.size() == 1
                                                ? feats[static_cast<size_t>(i)]
                                                : ops::slice(feats[static_cast<size_t>(i)], 0,
                                                             static_cast<int64_t>(m) * nb, nb);
            pyr.features.push_back(f);
        }
    } else {
        for (const std::string& m : modalities) pyr.features.push_back(encoder.forward(Var(stack_images(batch, m))));
    }
    return pyr;
}

FeaturePyramid extract_features(const Encoder& encoder, const ModalityBundle& bundle,
                                const std::vector<std::string>& modalities, bool packed) {
    return extract_features(encoder, std::vector<const ModalityBundle*>{&bundle}, modalities, packed);
}

}  // namespace sgma
