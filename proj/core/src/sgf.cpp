#include "sgma/sgf.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sgma/error.hpp"
#include "sgma/ops.hpp"

namespace sgma {

PrototypeNorm parse_prototype_norm(const std::string& s) {
    if (s == "off") return PrototypeNorm::Off;
    if (s == "softmax") return PrototypeNorm::Softmax;
    throw ConfigError("model.prototype_norm must be 'off' or 'softmax', got '" + s + "'");
}

std::string to_string(PrototypeNorm norm) { return norm == PrototypeNorm::Off ? "off" : "softmax"; }

void SgfConfig::validate() const {
    if (num_classes < 2) throw ConfigError("model.K must be at least 2");
    if (sp_heads < 1 || rp_heads < 1) throw ConfigError("attention head counts must be positive");
    if (mp_kernels.empty()) throw ConfigError("model.mp_kernels must not be empty");
    for (int k : mp_kernels)
        if (k < 1 || k % 2 == 0) throw ConfigError("model.mp_kernels entries must be odd and positive");
    for (int64_t c : channels) {
        if (c % sp_heads != 0)
            throw ConfigError("channel count " + std::to_string(c) + " not divisible by sp_heads " +
                              std::to_string(sp_heads));
        if (c % rp_heads != 0)
            throw ConfigError("channel count " + std::to_string(c) + " not divisible by rp_heads " +
                              std::to_string(rp_heads));
    }
}

AttentionParams AttentionParams::create(const std::string& prefix, int64_t channels, ParameterStore& params,
                                        RngStream& rng) {
    const double sd = std::sqrt(1.0 / static_cast<double>(channels));
    AttentionParams p;
    p.wq = params.add_normal(prefix + ".q.weight", {channels, channels}, sd, rng);
    p.bq = params.add_constant(prefix + ".q.bias", {channels}, 0.0);
    p.wk = params.add_normal(prefix + ".k.weight", {channels, channels}, sd, rng);
    p.bk = params.add_constant(prefix + ".k.bias", {channels}, 0.0);
    p.wv = params.add_normal(prefix + ".v.weight", {channels, channels}, sd, rng);
    p.bv = params.add_constant(prefix + ".v.bias", {channels}, 0.0);
    p.wo = params.add_normal(prefix + ".o.weight", {channels, channels}, sd, rng);
    p.bo = params.add_constant(prefix + ".o.bias", {channels}, 0.0);
    return p;
}

namespace {

void check_aligned(const std::vector<Var>& xs, const char* what) {
    if (xs.empty()) throw UsageError(std::string(what) + ": no modalities given");
    for (const Var& x : xs) {
        if (x.shape().size() != 4) throw ShapeError(std::string(what) + ": expected [B, H, W, C], got " + shape_str(x.shape()));
        if (x.shape() != xs[0].shape()) throw ShapeError(std::string(what) + ": modality shapes differ");
    }
}

// [B, H, W, C] per modality -> [B, H*W, M, C].
Var stack_keys(const std::vector<Var>& semantics) {
    const Shape& s = semantics[0].shape();
    const Var st = ops::stack(semantics, 3);
    return ops::reshape(st, {s[0], s[1] * s[2], static_cast<int64_t>(semantics.size()), s[3]});
}

}  // namespace

Var build_prototypes(const std::vector<Var>& compacts, const std::vector<Var>& semantics, PrototypeNorm norm) {
    check_aligned(compacts, "build_prototypes");
    check_aligned(semantics, "build_prototypes");
    if (compacts.size() != semantics.size())
        throw ShapeError("build_prototypes: compact and semantic lists differ in length");
    const Shape& cs = compacts[0].shape();
    const Shape& fs = semantics[0].shape();
    if (cs[0] != fs[0] || cs[1] != fs[1] || cs[2] != fs[2])
        throw ShapeError("build_prototypes: compact " + shape_str(cs) + " vs semantic " + shape_str(fs));
    const int64_t b = cs[0], p = cs[1] * cs[2];
    std::vector<Var> cflat, fflat;
    for (size_t m = 0; m < compacts.size(); ++m) {
        cflat.push_back(ops::reshape(compacts[m], {b, p, cs[3]}));
        fflat.push_back(ops::reshape(semantics[m], {b, p, fs[3]}));
    }
    Var c = cflat.size() == 1 ? cflat[0] : ops::concat(cflat, 1);
    const Var f = fflat.size() == 1 ? fflat[0] : ops::concat(fflat, 1);
    if (norm == PrototypeNorm::Softmax) c = ops::softmax(c, 1);
    return ops::batched_matmul_tn(c, f);
}

SpatialPerceptronOutput spatial_perceptron(const Var& prototypes, const std::vector<Var>& semantics,
                                           const AttentionParams& p, int heads, bool materialize) {
    check_aligned(semantics, "spatial_perceptron");
    const Shape& s = semantics[0].shape();
    const Shape& ps = prototypes.shape();
    if (ps.size() != 3 || ps[0] != s[0] || ps[2] != s[3])
        throw ShapeError("spatial_perceptron: prototypes " + shape_str(ps) + " do not match features " + shape_str(s));
    const int64_t nk = ps[1];
    const Var kv = stack_keys(semantics);
    const Var q = ops::reshape(ops::linear(prototypes, p.wq, p.bq), {s[0], 1, nk, s[3]});
    const Var k = ops::linear(kv, p.wk, p.bk);
    const Var v = ops::linear(kv, p.wv, p.bv);
    SpatialPerceptronOutput out;
    if (materialize) {
        ops::AttentionResult att = ops::pixel_attention(q, k, v, heads, false);
        const Var a = ops::linear(att.output, p.wo, p.bo);  // [B, P, K, C]
        out.activations = ops::reshape(a, {s[0], s[1], s[2], nk, s[3]});
        out.guided = ops::reshape(ops::mean(a, 2), s);
        out.weights = std::move(att.weights);
    } else {
        ops::AttentionResult att = ops::pixel_attention(q, k, v, heads, true);
        out.guided = ops::reshape(ops::linear(att.output, p.wo, p.bo), s);
        out.weights = std::move(att.weights);
    }
    return out;
}

RobustnessPerceptronOutput robustness_perceptron(const Var& guided, const std::vector<Var>& semantics,
                                                 const AttentionParams& p, int heads) {
    check_aligned(semantics, "robustness_perceptron");
    const Shape& s = semantics[0].shape();
    if (guided.shape() != s)
        throw ShapeError("robustness_perceptron: guided feature " + shape_str(guided.shape()) + " vs " + shape_str(s));
    const int64_t b = s[0], h = s[1], w = s[2], c = s[3];
    const auto nm = static_cast<int64_t>(semantics.size());
    const Var kv = stack_keys(semantics);
    const Var q = ops::linear(ops::reshape(guided, {b, h * w, 1, c}), p.wq, p.bq);
    const Var k = ops::linear(kv, p.wk, p.bk);
    const Var v = ops::linear(kv, p.wv, p.bv);
    ops::AttentionResult att = ops::pixel_attention(q, k, v, heads, true);
    RobustnessPerceptronOutput out;
    out.fused = ops::reshape(ops::linear(att.output, p.wo, p.bo), s);
    out.robustness = Tensor({b, nm, h, w});
    const int64_t np = h * w;
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t px = 0; px < np; ++px)
            for (int64_t m = 0; m < nm; ++m)
                out.robustness[(bi * nm + m) * np + px] = att.weights[(bi * np + px) * nm + m];
    return out;
}

SgfScale::SgfScale(const SgfConfig& config, int scale, const std::vector<std::string>& modalities,
                   ParameterStore& params, RngStream& init)
    : config_(config), scale_(scale), channels_(config.channels.at(static_cast<size_t>(scale))) {
    const std::string prefix = "sgf.scale" + std::to_string(scale);
    const int64_t c = channels_;
    for (const std::string& m : modalities) {
        Projector pr;
        for (size_t j = 0; j < config_.mp_kernels.size(); ++j) {
            const int64_t k = config_.mp_kernels[j];
            const std::string dp = prefix + ".mp." + m + ".dw" + std::to_string(j);
            pr.dw_weights.push_back(params.add_normal(dp + ".weight", {k, k, c}, 1.0 / static_cast<double>(k), init));
            pr.dw_biases.push_back(params.add_constant(dp + ".bias", {c}, 0.0));
        }
        pr.pw_weight = params.add_normal(prefix + ".mp." + m + ".pw.weight", {c, c},
                                         std::sqrt(1.0 / static_cast<double>(c)), init);
        pr.pw_bias = params.add_constant(prefix + ".mp." + m + ".pw.bias", {c}, 0.0);
        projectors_.emplace(m, std::move(pr));
    }
    csf_weight_ = params.add_normal(prefix + ".csf.weight", {c, config_.num_classes},
                                    std::sqrt(1.0 / static_cast<double>(c)), init);
    csf_bias_ = params.add_constant(prefix + ".csf.bias", {config_.num_classes}, 0.0);
    sp_ = AttentionParams::create(prefix + ".sp", c, params, init);
    rp_ = AttentionParams::create(prefix + ".rp", c, params, init);
}

Var SgfScale::project_semantic(const Var& feature, const std::string& modality) const {
    auto it = projectors_.find(modality);
    if (it == projectors_.end())
        throw UsageError("no modality projector for '" + modality + "' at scale " + std::to_string(scale_));
    if (feature.shape().size() != 4 || feature.shape()[3] != channels_)
        throw ShapeError("project_semantic: expected " + std::to_string(channels_) + " channels, got " +
                         shape_str(feature.shape()));
    const Projector& pr = it->second;
    Var x = feature;
    for (size_t j = 0; j < pr.dw_weights.size(); ++j) x = ops::depthwise_conv2d(x, pr.dw_weights[j], pr.dw_biases[j]);
    return ops::linear(x, pr.pw_weight, pr.pw_bias);
}

Var SgfScale::filter_class(const Var& semantic) const {
    if (semantic.shape().size() != 4 || semantic.shape()[3] != channels_)
        throw ShapeError("filter_class: expected " + std::to_string(channels_) + " channels, got " +
                         shape_str(semantic.shape()));
    return ops::linear(semantic, csf_weight_, csf_bias_);
}

ScaleFusion SgfScale::fuse(const std::vector<Var>& semantics) const {
    check_aligned(semantics, "fuse");
    ScaleFusion f;
    // One CSF call over the modality-packed batch.
    const Var packed = semantics.size() == 1 ? semantics[0] : ops::concat(semantics, 0);
    const Var compact = filter_class(packed);
    const int64_t nb = semantics[0].shape()[0];
    for (size_t m = 0; m < semantics.size(); ++m)
        f.compacts.push_back(semantics.size() == 1 ? compact
                                                   : ops::slice(compact, 0, static_cast<int64_t>(m) * nb, nb));
    f.prototypes = build_prototypes(f.compacts, semantics, config_.prototype_norm);
    f.spatial = spatial_perceptron(f.prototypes, semantics, sp_, config_.sp_heads, config_.diagnostics);
    RobustnessPerceptronOutput rp = robustness_perceptron(f.spatial.guided, semantics, rp_, config_.rp_heads);
    f.fused = rp.fused;
    f.robustness = std::move(rp.robustness);
    return f;
}

std::array<Var, kNumScales> SgfOutput::fused() const {
    std::array<Var, kNumScales> out;
    for (int i = 0; i < kNumScales; ++i) out[static_cast<size_t>(i)] = scales[static_cast<size_t>(i)].fused;
    return out;
}

Tensor SgfOutput::robustness(int scale, int64_t batch_index) const {
    const Tensor& r = scales.at(static_cast<size_t>(scale)).robustness;
    const int64_t per = r.numel() / r.dim(0);
    Tensor out({r.dim(1), r.dim(2), r.dim(3)});
    std::copy_n(r.data() + batch_index * per, per, out.data());
    return out;
}

SemanticGuidedFusion::SemanticGuidedFusion(const SgfConfig& config, const std::vector<std::string>& modalities,
                                           ParameterStore& params, RngStream& init)
    : config_(config) {
    config_.validate();
    for (int i = 0; i < kNumScales; ++i) scales_.emplace_back(config_, i, modalities, params, init);
}

SgfOutput SemanticGuidedFusion::forward(const FeaturePyramid& pyramid, const std::vector<std::string>& subset) const {
    if (subset.empty()) throw UsageError("sgf_forward: empty modality subset");
    if (std::set<std::string>(subset.begin(), subset.end()).size() != subset.size())
        throw UsageError("sgf_forward: duplicate modality in subset");
    SgfOutput out;
    out.modalities = subset;
    for (int i = 0; i < kNumScales; ++i) {
        const SgfScale& sc = scales_[static_cast<size_t>(i)];
        auto& sem = out.semantics[static_cast<size_t>(i)];
        for (const std::string& m : subset) sem.push_back(sc.project_semantic(pyramid.at(m)[static_cast<size_t>(i)], m));
        out.scales[static_cast<size_t>(i)] = sc.fuse(sem);
    }
    return out;
}

}  // namespace sgma
