#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace sgma {

/// One sensor's image, H x W x channels, row-major with interleaved channels.
struct ModalityImage {
    std::string modality_id;
    int64_t height = 0;
    int64_t width = 0;
    int64_t channels = 0;
    std::vector<double> pixels;

    double at(int64_t y, int64_t x, int64_t c) const { return pixels[static_cast<size_t>((y * width + x) * channels + c)]; }
    /// Throws ValidationError unless H, W >= 32, channels >= 1 and every pixel is finite.
    void validate() const;
};

struct LabelMap {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<int32_t> ids;

    int32_t at(int64_t y, int64_t x) const { return ids[static_cast<size_t>(y * width + x)]; }
};

struct ModalityBundle {
    std::string sample_id;
    std::map<std::string, ModalityImage> images;
    std::optional<LabelMap> labels;

    std::vector<std::string> modality_ids() const;
    const ModalityImage& image(const std::string& modality) const;
    int64_t height() const;
    int64_t width() const;
    /// Shapes agree across images and labels; label ids lie in [0, K) or equal ignore_index.
    void validate(int num_classes, int32_t ignore_index) const;
};

struct ModalityInfo {
    std::string name;
    int channels = 3;
};

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

struct DatasetManifest {
    std::vector<ModalityInfo> modalities;
    std::vector<std::string> class_names;
    int32_t ignore_index = 255;
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    /// Per-modality channel statistics of the train split.
    std::map<std::string, ChannelStats> normalization;
    std::string image_extension = "png";

    int num_classes() const { return static_cast<int>(class_names.size()); }
    std::vector<std::string> modality_names() const;
    const ModalityInfo& modality(const std::string& name) const;
    void validate() const;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Reads `root/<modality>/<id>.<ext>` for every declared modality and
/// `root/labels/<id>.<ext>` for every id, in sorted id order. Pixel values are
/// returned raw (integer intensities scaled to [0, 1]); see normalize().
std::vector<ModalityBundle> load_dataset(const std::filesystem::path& root, const DatasetManifest& manifest,
                                         std::vector<std::string> sample_ids);

struct Dataset {
    DatasetManifest manifest;
    std::vector<ModalityBundle> train;
    std::vector<ModalityBundle> val;
};

/// Loads both splits and applies the manifest's normalization statistics.
/// Statistics are computed from the train split (and stored) when absent.
Dataset load_dataset(const std::filesystem::path& root, DatasetManifest manifest);

/// Per-channel mean/stddev of each declared modality over `bundles`.
std::map<std::string, ChannelStats> compute_channel_stats(const std::vector<ModalityBundle>& bundles,
                                                          const std::vector<ModalityInfo>& modalities);
void normalize(std::vector<ModalityBundle>& bundles, const std::map<std::string, ChannelStats>& stats);

/// Restricts a bundle to `keep` (non-empty, known ids); labels are preserved.
ModalityBundle make_subset(const ModalityBundle& bundle, const std::vector<std::string>& keep);

/// Mirrors every image and the label map left-to-right.
ModalityBundle hflip(const ModalityBundle& bundle);

// --- synthetic data ------------------------------------------------------------

struct SynthModality {
    std::string name;
    int channels = 1;
    /// groups[k] is the rendering group of class k; classes sharing a group
    /// render identically in this modality.
    std::vector<int> groups;
    double noise = 0.1;
};

struct SynthSpec {
    int num_classes = 5;
    std::vector<std::string> class_names;
    int image_size = 64;
    int train_samples = 200;
    int val_samples = 50;
    int min_regions = 4;
    int max_regions = 9;
    /// Per-region brightness offset (uniform in +-region_jitter) for intra-class variation.
    double region_jitter = 0.03;
    std::vector<SynthModality> modalities;
    uint64_t seed = 7;

    /// Three modalities R (RGB), D (1 channel), N (1 channel, fragile), five classes.
    static SynthSpec three_modality_default(uint64_t seed = 7);
    /// Class k is discriminable in modality m when no other class shares its group.
    bool discriminable(size_t modality, int cls) const;
    void validate() const;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

/// Rendered value of `cls` in modality `m` before jitter and noise (one value per channel).
std::vector<double> synth_render_value(const SynthSpec& spec, size_t modality, int cls);

struct SynthDataset {
    std::vector<ModalityBundle> train;
    std::vector<ModalityBundle> val;
};

/// Deterministic in `spec`: Voronoi label maps, per-modality rendering by group, additive Gaussian noise.
SynthDataset generate_synthetic(const SynthSpec& spec);

/// Manifest matching a synthetic spec (sample ids, modalities, class names; no statistics).
DatasetManifest synth_manifest(const SynthSpec& spec, const SynthDataset& data);

/// In-memory synthetic dataset with train-split normalization applied, as
/// load_dataset() would return it after write_dataset().
Dataset synthetic_dataset(const SynthSpec& spec);

/// Writes images as 16-bit PNG (values clamped to [0, 1]) and labels as 8-bit PNG.
void write_dataset(const std::filesystem::path& root, const DatasetManifest& manifest,
                   const std::vector<ModalityBundle>& bundles);

}  // namespace sgma
