#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgma/data.hpp"
#include "sgma/encoder.hpp"
#include "sgma/head_loss.hpp"
#include "sgma/sgf.hpp"

namespace sgma {

/// Ablation variants: (a) additive fusion, (b) semantic-guided fusion,
/// (c) semantic-guided fusion with modality-aware sampling.
enum class Variant { A, B, C };

Variant parse_variant(const std::string& s);
std::string to_string(Variant v);

enum class WarmupMode { Constant, Linear };

struct SeedConfig {
    uint64_t init = 1;
    uint64_t data = 2;
    uint64_t mas = 3;
};

struct DataConfig {
    /// Dataset root holding manifest.json; empty means generate `synthetic` in memory.
    std::string root;
    bool hflip = false;
    int32_t ignore_index = 255;
    SynthSpec synthetic = SynthSpec::three_modality_default();
};

struct ModelConfig {
    std::vector<std::string> modalities{"R", "D", "N"};
    int num_classes = 5;
    int sp_heads = 8;
    int rp_heads = 4;
    std::vector<int> mp_kernels{11, 7, 3};
    PrototypeNorm prototype_norm = PrototypeNorm::Off;
    bool diagnostics = false;
    EncoderConfig encoder;
    HeadConfig head;

    SgfConfig sgf() const;
};

struct LossConfig {
    double lambda_sgf = 2.0;
    double lambda_mas = 1.0;
};

struct MasConfig {
    bool enabled = true;
    double epsilon = 1e-8;
};

struct TrainConfig {
    Variant variant = Variant::C;
    double base_lr = 6e-5;
    double poly_power = 0.9;
    int epochs = 30;
    int warmup_epochs = 3;
    double warmup_factor = 0.1;
    WarmupMode warmup_mode = WarmupMode::Constant;
    double weight_decay = 1e-2;
    double adam_epsilon = 1e-8;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int batch_size = 8;
    /// Validate over all subsets every this many epochs (and after the last one); 0 disables.
    int val_every = 5;
    /// Feed a random non-empty subset to the fusion branch each batch.
    bool subset_dropout = false;
};

struct EvalConfig {
    int batch_size = 10;
    bool silhouette = false;
    int silhouette_cap = 2000;
};

struct Config {
    SeedConfig seed;
    DataConfig data;
    ModelConfig model;
    LossConfig loss;
    MasConfig mas;
    TrainConfig train;
    EvalConfig eval;

    /// Throws ConfigError on inconsistent values.
    void validate() const;

    /// Paper-scale schedule (200 epochs, 10 warmup) and backbone widths.
    static Config paper();
    /// Settings sized for a single CPU core; see configs/desk.json.
    static Config desk();
};

void to_json(nlohmann::json& j, const Config& c);
/// Strict: every key must be known; missing keys keep their defaults.
void from_json(const nlohmann::json& j, Config& c);

/// Applies "dotted.key=value" to a config tree. The value is parsed as JSON
/// when possible and used as a string otherwise. Unknown keys are errors.
void apply_override(nlohmann::json& tree, const std::string& assignment);

/// Reads a JSON config file layered on top of the defaults, then applies overrides.
Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
Config config_with_overrides(const Config& base, const std::vector<std::string>& overrides);

}  // namespace sgma
