#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgma/config.hpp"
#include "sgma/eval.hpp"
#include "sgma/model.hpp"

namespace sgma {

/// Number of optimizer steps spent in warmup.
int64_t warmup_steps(int64_t total_steps, const TrainConfig& cfg);

/// Learning rate for `step` in [0, total_steps]: warmup plateau (or ramp)
/// followed by polynomial decay to zero at total_steps.
double lr_at(int64_t step, int64_t total_steps, const TrainConfig& cfg);

/// Adam with decoupled weight decay. Decay applies to tensors of rank >= 2.
class AdamW {
public:
    AdamW(const ParameterStore& params, const TrainConfig& cfg);

    void step(ParameterStore& params, double lr);

    int64_t steps() const { return t_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }
    void restore(int64_t t, std::vector<Tensor> m, std::vector<Tensor> v);

private:
    double beta1_, beta2_, eps_, weight_decay_;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    nlohmann::json config;
    int64_t epoch = 0;
    int64_t step = 0;
    std::vector<std::pair<std::string, Tensor>> params;
    int64_t adam_t = 0;
    std::vector<Tensor> adam_m, adam_v;
    std::map<std::string, std::string> rng_states;
    /// Average validation mIoU at the time of saving, if validated.
    std::optional<double> metric;

    std::string serialize() const;
    static Checkpoint deserialize(const std::string& bytes);
    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

/// Builds a model from a checkpoint's config and copies its parameters in.
Model model_from_checkpoint(const Checkpoint& ckpt);

struct StepStats {
    LossValues loss;
    double lr = 0.0;
    /// Per scale, the modality index drawn for each batch entry (variant c).
    std::vector<std::vector<int>> mas_choices;
};

/// Owns the model, optimizer and random streams of one training run.
class Trainer {
public:
    explicit Trainer(const Config& config, int64_t steps_per_epoch);

    Model& model() { return model_; }
    const Model& model() const { return model_; }
    const Config& config() const { return config_; }
    int64_t epoch() const { return epoch_; }
    int64_t step() const { return step_; }
    int64_t total_steps() const { return total_steps_; }
    RngStream& data_rng() { return data_rng_; }
    RngStream& mas_rng() { return mas_rng_; }
    AdamW& optimizer() { return optimizer_; }

    /// Forward both branches on `batch` and return the combined loss without
    /// updating anything; gradients are left in the parameters.
    StepStats forward_backward(const std::vector<const ModalityBundle*>& batch, Mode mode = Mode::Train);
    /// One optimizer update on `batch` at the current schedule position.
    StepStats train_step(const std::vector<const ModalityBundle*>& batch, Mode mode = Mode::Train);
    /// Shuffles (and optionally flips) `train` with the data stream and runs one epoch.
    std::vector<StepStats> run_epoch(const std::vector<ModalityBundle>& train);

    Checkpoint checkpoint(std::optional<double> metric = std::nullopt) const;
    /// Restores parameters, optimizer state, streams and counters.
    void restore(const Checkpoint& ckpt);

private:
    Config config_;
    Model model_;
    AdamW optimizer_;
    RngStream data_rng_, mas_rng_;
    int64_t steps_per_epoch_;
    int64_t total_steps_;
    int64_t epoch_ = 0;
    int64_t step_ = 0;
};

int64_t steps_per_epoch(int64_t train_samples, int batch_size);

struct EpochRecord {
    int64_t epoch = 0;
    double lr = 0.0;
    double l_sgf = 0.0, l_mas = 0.0, total = 0.0;
    std::optional<MetricsReport> validation;

    nlohmann::json to_json() const;
};

struct FitResult {
    Checkpoint last;
    Checkpoint best;
    std::vector<EpochRecord> history;
    std::optional<MetricsReport> best_report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full training run. The dataset's modalities and class count must match the
/// config. The best checkpoint is the one with the highest Average val mIoU.
FitResult fit(const Config& config, const Dataset& dataset, const EpochCallback& on_epoch = {});

/// Loads `config.data.root` or generates the synthetic set in memory.
Dataset load_configured_dataset(const Config& config);

}  // namespace sgma
