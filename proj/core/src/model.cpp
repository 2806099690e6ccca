#include "sgma/model.hpp"

#include <algorithm>
#include <set>

#include "sgma/error.hpp"
#include "sgma/ops.hpp"

namespace sgma {

namespace {

const Config& validated(const Config& c) {
    c.validate();
    return c;
}

}  // namespace

Model::Model(const Config& config)
    : config_(validated(config)),
      init_rng_("init", config_.seed.init),
      encoder_(config_.model.encoder, params_, init_rng_),
      sgf_(config_.train.variant == Variant::A
               ? std::nullopt
               : std::optional<SemanticGuidedFusion>(std::in_place, config_.model.sgf(), config_.model.modalities,
                                                     params_, init_rng_)),
      head_(config_.model.head, config_.model.encoder.stage_channels, config_.model.num_classes, params_,
            init_rng_) {}

const SemanticGuidedFusion& Model::sgf() const {
    if (!sgf_) throw UsageError("variant a has no semantic-guided fusion block");
    return *sgf_;
}

void Model::check_subset(const std::vector<std::string>& subset) const {
    if (subset.empty()) throw UsageError("modality subset must not be empty");
    std::set<std::string> seen;
    for (const std::string& m : subset) {
        if (std::find(modalities().begin(), modalities().end(), m) == modalities().end())
            throw UsageError("model has no modality '" + m + "'");
        if (!seen.insert(m).second) throw UsageError("modality '" + m + "' listed twice");
    }
}

FusionOutput Model::fuse(const FeaturePyramid& pyramid, const std::vector<std::string>& subset) const {
    check_subset(subset);
    FusionOutput out;
    if (sgf_) {
        out.sgf = sgf_->forward(pyramid, subset);
        out.fused = out.sgf->fused();
    } else {
        for (int i = 0; i < kNumScales; ++i) {
            std::vector<Var> xs;
            for (const std::string& m : subset) xs.push_back(pyramid.at(m)[static_cast<size_t>(i)]);
            out.fused[static_cast<size_t>(i)] = xs.size() == 1 ? xs[0] : ops::add_n(xs);
        }
    }
    return out;
}

Var Model::logits(const std::vector<const ModalityBundle*>& batch, const std::vector<std::string>& subset) const {
    check_subset(subset);
    const FeaturePyramid pyr = extract_features(encoder_, batch, subset);
    const FusionOutput f = fuse(pyr, subset);
    return head_.forward(f.fused, batch.at(0)->height(), batch.at(0)->width());
}

std::vector<LabelMap> argmax_labels(const Tensor& logits) {
    if (logits.rank() != 4) throw ShapeError("argmax_labels: expected [B, H, W, K]");
    const int64_t nb = logits.dim(0), h = logits.dim(1), w = logits.dim(2), k = logits.dim(3);
    std::vector<LabelMap> out;
    for (int64_t b = 0; b < nb; ++b) {
        LabelMap m{h, w, std::vector<int32_t>(static_cast<size_t>(h * w))};
        for (int64_t p = 0; p < h * w; ++p) {
            const double* row = logits.data() + (b * h * w + p) * k;
            m.ids[static_cast<size_t>(p)] = static_cast<int32_t>(std::max_element(row, row + k) - row);
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<LabelMap> Model::infer(const std::vector<const ModalityBundle*>& batch,
                                   const std::vector<std::string>& subset) const {
    NoGradGuard guard;
    return argmax_labels(logits(batch, subset).value());
}

LabelMap Model::infer(const ModalityBundle& bundle, const std::vector<std::string>& subset) const {
    return infer(std::vector<const ModalityBundle*>{&bundle}, subset).at(0);
}

}  // namespace sgma
