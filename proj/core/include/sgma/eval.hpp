#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgma/model.hpp"

namespace sgma {

/// All non-empty subsets ordered by size, then by modality position.
std::vector<std::vector<std::string>> enumerate_subsets(const std::vector<std::string>& modalities);
/// Concatenated ids, e.g. {"R","D"} -> "RD"; multi-letter ids are joined with '+'.
std::string subset_name(const std::vector<std::string>& subset);

/// Rows are ground truth, columns are predictions.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<int64_t> counts;

    explicit ConfusionMatrix(int k = 0) : num_classes(k), counts(static_cast<size_t>(k) * static_cast<size_t>(k), 0) {}
    int64_t at(int gt, int pred) const { return counts[static_cast<size_t>(gt * num_classes + pred)]; }
    int64_t& at(int gt, int pred) { return counts[static_cast<size_t>(gt * num_classes + pred)]; }
    int64_t total() const;
    void add(const ConfusionMatrix& other);
};

ConfusionMatrix confusion(const std::vector<int32_t>& pred, const std::vector<int32_t>& gt, int num_classes,
                          int32_t ignore_index);
ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int num_classes, int32_t ignore_index);

/// Per-class IoU / F1; empty for classes absent from both ground truth and prediction.
std::vector<std::optional<double>> class_iou(const ConfusionMatrix& cm);
std::vector<std::optional<double>> class_f1(const ConfusionMatrix& cm);
/// Means over present classes; throw ValidationError when no class is present.
double miou(const ConfusionMatrix& cm);
double f1(const ConfusionMatrix& cm);

struct Aggregate {
    double average = 0.0;
    double top1 = 0.0;
    double last1 = 0.0;
};

Aggregate aggregate(const std::vector<double>& values);

struct SubsetMetrics {
    std::vector<std::string> modalities;
    double miou = 0.0;
    double f1 = 0.0;
    ConfusionMatrix confusion;
};

struct MetricsReport {
    std::vector<std::string> modalities;
    std::vector<std::string> class_names;
    std::vector<SubsetMetrics> subsets;
    Aggregate miou;
    Aggregate f1;

    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
    /// Markdown table: one column per subset plus Average / Top-1 / Last-1, values in percent.
    std::string table() const;
};

/// Runs inference on every subset in `subsets` (all non-empty subsets when empty).
MetricsReport evaluate(const Model& model, const std::vector<ModalityBundle>& bundles, int num_classes,
                       int32_t ignore_index, const std::vector<std::vector<std::string>>& subsets = {},
                       int batch_size = 10);

// --- diagnostics -------------------------------------------------------------

/// Nearest-neighbour downsampling (top-left sample of each cell) to h x w.
std::vector<int32_t> downsample_labels(const LabelMap& labels, int64_t h, int64_t w);

/// Divides a feature map by the standard deviation of all its entries.
Tensor standardize(const Tensor& features);

/// Per-class sum of squared distances to the class mean divided by (n - 1).
/// features: [H, W, C]; labels: H*W ids. Classes with fewer than two pixels are empty.
std::vector<std::optional<double>> intra_class_variance(const Tensor& features, const std::vector<int32_t>& labels,
                                                        int num_classes, int32_t ignore_index);

/// Per-modality mean of robustness maps; maps: [M, H, W] entries from any number of samples.
std::vector<double> robustness_report(const std::vector<Tensor>& maps);

/// Mean silhouette coefficient (Euclidean) of points with integer cluster labels.
double silhouette(const std::vector<std::vector<double>>& points, const std::vector<int>& labels);

struct ComponentCost {
    std::string name;
    int64_t params = 0;
    double flops = 0.0;
};

struct ComplexityReport {
    int64_t height = 0, width = 0;
    int num_modalities = 0, num_classes = 0;
    std::vector<ComponentCost> components;

    const ComponentCost& component(const std::string& name) const;
    double flops(const std::vector<std::string>& names) const;
    int64_t params(const std::vector<std::string>& names) const;
    nlohmann::json to_json() const;
};

/// Component names of the fusion stack: "sgf.mp", "sgf.csf", "sgf.prototypes",
/// "sgf.sp.query", "sgf.sp.kv", "sgf.sp.attention", "sgf.sp.output",
/// "sgf.rp.query", "sgf.rp.kv", "sgf.rp.attention", "sgf.rp.output".
std::vector<std::string> sgf_components();
/// Fusion components whose cost is proportional to the modality count.
std::vector<std::string> sgf_modality_path();
/// Fusion components whose cost is proportional to the class count.
std::vector<std::string> sgf_class_path();

/// Closed-form parameter and FLOP counts (2 FLOPs per multiply-add) for an
/// H x W input with `num_modalities` modalities. Uses config.model for widths.
ComplexityReport complexity_report(const Config& config, int64_t height, int64_t width, int num_modalities);

struct DiagnosticsReport {
    std::vector<std::string> modalities;
    std::vector<std::string> class_names;
    /// [scale][class]; empty when the class never had two pixels.
    std::vector<std::vector<std::optional<double>>> intra_class_variance;
    /// [scale][modality]; empty for variant a.
    std::vector<std::vector<double>> robustness;
    ComplexityReport complexity;
    /// [scale][modality] when requested.
    std::vector<std::vector<double>> silhouette;

    nlohmann::json to_json() const;
};

/// Intra-class variance of the fused features, full-subset robustness scalars,
/// complexity and (optionally) per-modality silhouette on the val bundles.
DiagnosticsReport diagnose(const Model& model, const std::vector<ModalityBundle>& bundles,
                           const std::vector<std::string>& class_names, int32_t ignore_index);

}  // namespace sgma
