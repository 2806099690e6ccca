#include "sgma/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sgma/error.hpp"
#include "sgma/ops.hpp"

namespace sgma {

using nlohmann::json;

int64_t warmup_steps(int64_t total_steps, const TrainConfig& cfg) {
    if (cfg.epochs <= 0) return 0;
    return std::llround(static_cast<double>(total_steps) * cfg.warmup_epochs / cfg.epochs);
}

double lr_at(int64_t step, int64_t total_steps, const TrainConfig& cfg) {
    if (step < 0 || step > total_steps)
        throw UsageError("lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
    const int64_t ws = warmup_steps(total_steps, cfg);
    if (step < ws) {
        if (cfg.warmup_mode == WarmupMode::Constant) return cfg.warmup_factor * cfg.base_lr;
        const double frac = static_cast<double>(step) / static_cast<double>(ws);
        return cfg.base_lr * (cfg.warmup_factor + (1.0 - cfg.warmup_factor) * frac);
    }
    if (step >= total_steps) return 0.0;
    const double t = static_cast<double>(step - ws) / static_cast<double>(total_steps - ws);
    return cfg.base_lr * std::pow(1.0 - t, cfg.poly_power);
}

AdamW::AdamW(const ParameterStore& params, const TrainConfig& cfg)
    : beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_epsilon), weight_decay_(cfg.weight_decay) {
    for (const auto& [name, p] : params.entries()) {
        m_.push_back(Tensor::zeros_like(p.value()));
        v_.push_back(Tensor::zeros_like(p.value()));
    }
}

void AdamW::step(ParameterStore& params, double lr) {
    if (params.size() != m_.size()) throw UsageError("AdamW: parameter count changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    size_t i = 0;
    for (const auto& [name, p] : params.entries()) {
        Var var = p;
        Tensor& w = var.mutable_value();
        const Tensor& g = p.grad();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        const double decay = w.rank() >= 2 ? weight_decay_ : 0.0;
        for (int64_t j = 0; j < w.numel(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            const double mhat = m[j] / bc1, vhat = v[j] / bc2;
            w[j] -= lr * (mhat / (std::sqrt(vhat) + eps_) + decay * w[j]);
        }
        ++i;
    }
}

void AdamW::restore(int64_t t, std::vector<Tensor> m, std::vector<Tensor> v) {
    if (m.size() != m_.size() || v.size() != v_.size()) throw ValidationError("optimizer state size mismatch");
    for (size_t i = 0; i < m.size(); ++i)
        if (m[i].shape() != m_[i].shape() || v[i].shape() != v_[i].shape())
            throw ValidationError("optimizer state shape mismatch");
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

// --- checkpoint container ----------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'G', 'M', 'A', 'C', 'K', 'P', 'T'};

class Writer {
public:
    void raw(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void u64(uint64_t x) { raw(&x, sizeof x); }
    void i64(int64_t x) { raw(&x, sizeof x); }
    void f64(double x) { raw(&x, sizeof x); }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    void tensor(const Tensor& t) {
        u64(t.shape().size());
        for (int64_t d : t.shape()) i64(d);
        raw(t.data(), static_cast<size_t>(t.numel()) * sizeof(double));
    }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(const std::string& b) : b_(b) {}
    void raw(void* p, size_t n) {
        if (pos_ + n > b_.size()) throw ValidationError("checkpoint is truncated");
        std::memcpy(p, b_.data() + pos_, n);
        pos_ += n;
    }
    uint64_t u64() {
        uint64_t x;
        raw(&x, sizeof x);
        return x;
    }
    int64_t i64() {
        int64_t x;
        raw(&x, sizeof x);
        return x;
    }
    double f64() {
        double x;
        raw(&x, sizeof x);
        return x;
    }
    std::string str() {
        const uint64_t n = u64();
        if (n > b_.size() - pos_) throw ValidationError("checkpoint is truncated");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    Tensor tensor() {
        const uint64_t rank = u64();
        if (rank > 8) throw ValidationError("checkpoint tensor rank is implausible");
        Shape shape;
        for (uint64_t i = 0; i < rank; ++i) shape.push_back(i64());
        Tensor t(shape);
        raw(t.data(), static_cast<size_t>(t.numel()) * sizeof(double));
        return t;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    const std::string& b_;
    size_t pos_ = 0;
};

}  // namespace

std::string Checkpoint::serialize() const {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u64(kVersion);
    w.str(config.dump());
    w.i64(epoch);
    w.i64(step);
    w.u64(params.size());
    for (const auto& [name, t] : params) {
        w.str(name);
        w.tensor(t);
    }
    w.i64(adam_t);
    w.u64(adam_m.size());
    for (size_t i = 0; i < adam_m.size(); ++i) {
        w.tensor(adam_m[i]);
        w.tensor(adam_v[i]);
    }
    w.u64(rng_states.size());
    for (const auto& [name, state] : rng_states) {
        w.str(name);
        w.str(state);
    }
    w.u64(metric ? 1 : 0);
    w.f64(metric.value_or(0.0));
    return w.take();
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
    Reader r(bytes);
    char magic[8];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw ValidationError("not a checkpoint file (bad magic)");
    const uint64_t version = r.u64();
    if (version != kVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    c.config = json::parse(r.str());
    c.epoch = r.i64();
    c.step = r.i64();
    const uint64_t np = r.u64();
    for (uint64_t i = 0; i < np; ++i) {
        std::string name = r.str();
        c.params.emplace_back(std::move(name), r.tensor());
    }
    c.adam_t = r.i64();
    const uint64_t nm = r.u64();
    for (uint64_t i = 0; i < nm; ++i) {
        c.adam_m.push_back(r.tensor());
        c.adam_v.push_back(r.tensor());
    }
    const uint64_t nr = r.u64();
    for (uint64_t i = 0; i < nr; ++i) {
        std::string name = r.str();
        c.rng_states[name] = r.str();
    }
    const bool has_metric = r.u64() != 0;
    const double metric = r.f64();
    if (has_metric) c.metric = metric;
    if (!r.done()) throw ValidationError("checkpoint has trailing bytes");
    return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write checkpoint " + path.string());
    const std::string bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("checkpoint not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

namespace {

void copy_params(ParameterStore& params, const std::vector<std::pair<std::string, Tensor>>& values) {
    if (values.size() != params.size())
        throw ValidationError("checkpoint holds " + std::to_string(values.size()) + " parameters, model expects " +
                              std::to_string(params.size()));
    size_t i = 0;
    for (const auto& [name, p] : params.entries()) {
        const auto& [cname, t] = values[i++];
        if (cname != name || t.shape() != p.value().shape())
            throw ValidationError("checkpoint parameter '" + cname + "' does not match model parameter '" + name + "'");
        Var v = p;
        v.mutable_value() = t;
    }
}

}  // namespace

Model model_from_checkpoint(const Checkpoint& ckpt) {
    Model m(ckpt.config.get<Config>());
    copy_params(m.params(), ckpt.params);
    return m;
}

// --- trainer -----------------------------------------------------------------

int64_t steps_per_epoch(int64_t train_samples, int batch_size) {
    return (train_samples + batch_size - 1) / batch_size;
}

Trainer::Trainer(const Config& config, int64_t steps_per_epoch)
    : config_(config),
      model_(config_),
      optimizer_(model_.params(), config_.train),
      data_rng_("data", config_.seed.data),
      mas_rng_("mas", config_.seed.mas),
      steps_per_epoch_(steps_per_epoch),
      total_steps_(static_cast<int64_t>(config_.train.epochs) * steps_per_epoch) {}

StepStats Trainer::forward_backward(const std::vector<const ModalityBundle*>& batch, Mode mode) {
    if (mode != Mode::Train) throw UsageError("train_step called in inference mode");
    if (batch.empty()) throw UsageError("train_step: empty batch");
    const Config& cfg = config_;
    std::vector<std::string> subset = model_.modalities();
    if (cfg.train.subset_dropout) {
        const auto subsets = enumerate_subsets(subset);
        subset = subsets[static_cast<size_t>(data_rng_.uniform_int(0, static_cast<int64_t>(subsets.size()) - 1))];
    }
    model_.params().zero_grad();
    const FeaturePyramid pyr = extract_features(model_.encoder(), batch, subset);
    const FusionOutput fo = model_.fuse(pyr, subset);

    StepStats stats;
    const bool use_mas = model_.variant() == Variant::C && cfg.mas.enabled;
    std::array<Var, kNumScales> head_in = fo.fused;
    if (use_mas) {
        for (int i = 0; i < kNumScales; ++i) {
            const auto& sc = fo.sgf->scales[static_cast<size_t>(i)];
            MasScaleOutput mo = mas_forward(model_.sgf().scale(i), fo.sgf->semantics[static_cast<size_t>(i)],
                                            sc.robustness, mas_rng_, mode, cfg.mas.epsilon);
            stats.mas_choices.push_back(mo.choices);
            head_in[static_cast<size_t>(i)] = ops::concat({fo.fused[static_cast<size_t>(i)], mo.fused}, 0);
        }
    }
    const int64_t h = batch[0]->height(), w = batch[0]->width();
    const Var logits = model_.head().forward(head_in, h, w);
    std::vector<int32_t> labels;
    for (const ModalityBundle* b : batch) {
        if (!b->labels) throw UsageError("train_step: sample '" + b->sample_id + "' has no labels");
        labels.insert(labels.end(), b->labels->ids.begin(), b->labels->ids.end());
    }
    const int32_t ignore = cfg.data.ignore_index;
    const auto nb = static_cast<int64_t>(batch.size());
    Var l_sgf, l_mas;
    if (use_mas) {
        l_sgf = segmentation_loss(ops::slice(logits, 0, 0, nb), labels, ignore);
        l_mas = segmentation_loss(ops::slice(logits, 0, nb, nb), labels, ignore);
    } else {
        l_sgf = segmentation_loss(logits, labels, ignore);
    }
    const double lm = use_mas ? cfg.loss.lambda_mas : 0.0;
    const Var total = combined_loss(l_sgf, l_mas, cfg.loss.lambda_sgf, lm);
    stats.loss.l_sgf = l_sgf.value()[0];
    stats.loss.l_mas = use_mas ? l_mas.value()[0] : 0.0;
    stats.loss.total = total.value()[0];
    stats.loss.lambda_sgf = cfg.loss.lambda_sgf;
    stats.loss.lambda_mas = lm;
    if (!std::isfinite(stats.loss.total)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch_ << " step " << step_ << ": l_sgf=" << stats.loss.l_sgf
           << " l_mas=" << stats.loss.l_mas << " (samples " << batch.front()->sample_id << ".."
           << batch.back()->sample_id << ")";
        throw TrainingError(os.str());
    }
    backward(total);
    return stats;
}

StepStats Trainer::train_step(const std::vector<const ModalityBundle*>& batch, Mode mode) {
    if (total_steps_ > 0 && step_ >= total_steps_) throw UsageError("train_step: schedule exhausted");
    StepStats stats = forward_backward(batch, mode);
    stats.lr = lr_at(step_, std::max<int64_t>(total_steps_, step_ + 1), config_.train);
    optimizer_.step(model_.params(), stats.lr);
    ++step_;
    return stats;
}

std::vector<StepStats> Trainer::run_epoch(const std::vector<ModalityBundle>& train) {
    if (train.empty()) throw UsageError("run_epoch: empty training set");
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<size_t>(data_rng_.uniform_int(0, static_cast<int64_t>(i) - 1))]);
    std::vector<StepStats> out;
    const auto bs = static_cast<size_t>(config_.train.batch_size);
    for (size_t start = 0; start < order.size(); start += bs) {
        std::vector<ModalityBundle> flipped;
        flipped.reserve(bs);
        std::vector<const ModalityBundle*> batch;
        for (size_t i = start; i < std::min(order.size(), start + bs); ++i) {
            const ModalityBundle& b = train[order[i]];
            if (config_.data.hflip && data_rng_.uniform() < 0.5) {
                flipped.push_back(hflip(b));
                batch.push_back(&flipped.back());
            } else {
                batch.push_back(&b);
            }
        }
        out.push_back(train_step(batch));
    }
    ++epoch_;
    return out;
}

Checkpoint Trainer::checkpoint(std::optional<double> metric) const {
    Checkpoint c;
    c.config = config_;
    c.epoch = epoch_;
    c.step = step_;
    for (const auto& [name, p] : model_.params().entries()) c.params.emplace_back(name, p.value());
    c.adam_t = optimizer_.steps();
    c.adam_m = optimizer_.first_moments();
    c.adam_v = optimizer_.second_moments();
    c.rng_states["data"] = data_rng_.state();
    c.rng_states["mas"] = mas_rng_.state();
    c.metric = metric;
    return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
    copy_params(model_.params(), ckpt.params);
    optimizer_.restore(ckpt.adam_t, ckpt.adam_m, ckpt.adam_v);
    data_rng_.set_state(ckpt.rng_states.at("data"));
    mas_rng_.set_state(ckpt.rng_states.at("mas"));
    epoch_ = ckpt.epoch;
    step_ = ckpt.step;
}

json EpochRecord::to_json() const {
    json j{{"epoch", epoch}, {"lr", lr}, {"l_sgf", l_sgf}, {"l_mas", l_mas}, {"total", total}};
    if (validation) {
        json per = json::object();
        for (const auto& s : validation->subsets) per[subset_name(s.modalities)] = s.miou;
        j["val_miou"] = per;
        j["val_average_miou"] = validation->miou.average;
        j["val_last1_miou"] = validation->miou.last1;
    }
    return j;
}

FitResult fit(const Config& config, const Dataset& dataset, const EpochCallback& on_epoch) {
    config.validate();
    const DatasetManifest& man = dataset.manifest;
    if (man.modality_names() != config.model.modalities)
        throw ConfigError("dataset modalities do not match model.modalities");
    if (man.num_classes() != config.model.num_classes)
        throw ConfigError("dataset has " + std::to_string(man.num_classes()) + " classes but model.K is " +
                          std::to_string(config.model.num_classes));
    if (man.ignore_index != config.data.ignore_index)
        throw ConfigError("dataset ignore index " + std::to_string(man.ignore_index) + " differs from data.ignore_index");
    if (dataset.train.empty() && config.train.epochs > 0) throw UsageError("fit: empty training split");
    Trainer trainer(config, steps_per_epoch(static_cast<int64_t>(dataset.train.size()), config.train.batch_size));
    FitResult result;
    result.best = trainer.checkpoint();
    std::optional<double> best_metric;
    std::optional<double> last_metric;
    for (int e = 1; e <= config.train.epochs; ++e) {
        const auto steps = trainer.run_epoch(dataset.train);
        EpochRecord rec;
        rec.epoch = e;
        for (const auto& s : steps) {
            rec.l_sgf += s.loss.l_sgf;
            rec.l_mas += s.loss.l_mas;
            rec.total += s.loss.total;
        }
        rec.l_sgf /= static_cast<double>(steps.size());
        rec.l_mas /= static_cast<double>(steps.size());
        rec.total /= static_cast<double>(steps.size());
        rec.lr = steps.back().lr;
        last_metric.reset();
        const int k = config.train.val_every;
        if (!dataset.val.empty() && k > 0 && (e % k == 0 || e == config.train.epochs)) {
            rec.validation = evaluate(trainer.model(), dataset.val, man.num_classes(), man.ignore_index, {},
                                      config.eval.batch_size);
            last_metric = rec.validation->miou.average;
            if (!best_metric || *last_metric > *best_metric) {
                best_metric = last_metric;
                result.best = trainer.checkpoint(last_metric);
                result.best_report = rec.validation;
            }
        }
        if (on_epoch) on_epoch(rec);
        result.history.push_back(std::move(rec));
    }
    result.last = trainer.checkpoint(last_metric);
    if (!best_metric) result.best = result.last;
    return result;
}

Dataset load_configured_dataset(const Config& config) {
    if (config.data.root.empty()) return synthetic_dataset(config.data.synthetic);
    const std::filesystem::path root(config.data.root);
    return load_dataset(root, read_manifest(root / "manifest.json"));
}

}  // namespace sgma
