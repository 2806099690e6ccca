#include "sgma/config.hpp"

#include <fstream>

#include "sgma/error.hpp"

namespace sgma {

using nlohmann::json;

Variant parse_variant(const std::string& s) {
    if (s == "a") return Variant::A;
    if (s == "b") return Variant::B;
    if (s == "c") return Variant::C;
    throw ConfigError("variant must be one of a, b, c; got '" + s + "'");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::A: return "a";
        case Variant::B: return "b";
        case Variant::C: return "c";
    }
    return "?";
}

SgfConfig ModelConfig::sgf() const {
    SgfConfig s;
    s.num_classes = num_classes;
    s.sp_heads = sp_heads;
    s.rp_heads = rp_heads;
    s.mp_kernels = mp_kernels;
    s.channels = encoder.stage_channels;
    s.prototype_norm = prototype_norm;
    s.diagnostics = diagnostics;
    return s;
}

void Config::validate() const {
    if (model.modalities.empty()) throw ConfigError("model.modalities must not be empty");
    if (data.ignore_index >= 0 && data.ignore_index < model.num_classes)
        throw ConfigError("data.ignore_index must lie outside [0, model.K)");
    model.encoder.validate();
    model.sgf().validate();
    if (model.head.embed_width < 1) throw ConfigError("model.head.embed_width must be positive");
    if (!(train.warmup_factor > 0.0 && train.warmup_factor <= 1.0))
        throw ConfigError("train.warmup_factor must lie in (0, 1]");
    if (train.epochs < 0) throw ConfigError("train.epochs must be non-negative");
    if (train.warmup_epochs < 0 || (train.epochs > 0 && train.warmup_epochs >= train.epochs))
        throw ConfigError("train.warmup_epochs must be smaller than train.epochs");
    if (train.batch_size < 1) throw ConfigError("train.batch_size must be positive");
    if (train.base_lr < 0.0) throw ConfigError("train.base_lr must be non-negative");
    if (train.val_every < 0) throw ConfigError("train.val_every must be non-negative");
    if (!(train.beta1 >= 0.0 && train.beta1 < 1.0 && train.beta2 >= 0.0 && train.beta2 < 1.0))
        throw ConfigError("train.beta1/beta2 must lie in [0, 1)");
    if (train.adam_epsilon <= 0.0) throw ConfigError("train.adam_epsilon must be positive");
    if (mas.epsilon <= 0.0) throw ConfigError("mas.epsilon must be positive");
    if (eval.batch_size < 1) throw ConfigError("eval.batch_size must be positive");
    if (eval.silhouette_cap < 2) throw ConfigError("eval.silhouette_cap must be at least 2");
}

Config Config::paper() {
    Config c;
    c.train.epochs = 200;
    c.train.warmup_epochs = 10;
    c.train.val_every = 10;
    return c;
}

Config Config::desk() {
    Config c;
    c.model.encoder.stage_channels = {16, 32, 32, 32};
    c.model.encoder.blocks_per_stage = 1;
    c.model.head.embed_width = 32;
    c.model.prototype_norm = PrototypeNorm::Softmax;
    c.train.base_lr = 2e-3;
    c.train.epochs = 30;
    c.train.warmup_epochs = 3;
    c.train.batch_size = 8;
    c.train.val_every = 5;
    return c;
}

void to_json(json& j, const Config& c) {
    j = json::object();
    j["seed"] = {{"init", c.seed.init}, {"data", c.seed.data}, {"mas", c.seed.mas}};
    j["data"] = {{"root", c.data.root}, {"hflip", c.data.hflip}, {"ignore_index", c.data.ignore_index}, {"synthetic", c.data.synthetic}};
    j["model"] = {{"modalities", c.model.modalities},
                  {"K", c.model.num_classes},
                  {"sp_heads", c.model.sp_heads},
                  {"rp_heads", c.model.rp_heads},
                  {"mp_kernels", c.model.mp_kernels},
                  {"prototype_norm", to_string(c.model.prototype_norm)},
                  {"diagnostics", c.model.diagnostics},
                  {"encoder",
                   {{"stage_channels", c.model.encoder.stage_channels},
                    {"blocks_per_stage", c.model.encoder.blocks_per_stage}}},
                  {"head", {{"embed_width", c.model.head.embed_width}}}};
    j["loss"] = {{"lambda_sgf", c.loss.lambda_sgf}, {"lambda_mas", c.loss.lambda_mas}};
    j["mas"] = {{"enabled", c.mas.enabled}, {"epsilon", c.mas.epsilon}};
    j["train"] = {{"variant", to_string(c.train.variant)},
                  {"base_lr", c.train.base_lr},
                  {"poly_power", c.train.poly_power},
                  {"epochs", c.train.epochs},
                  {"warmup_epochs", c.train.warmup_epochs},
                  {"warmup_factor", c.train.warmup_factor},
                  {"warmup_mode", c.train.warmup_mode == WarmupMode::Constant ? "constant" : "linear"},
                  {"weight_decay", c.train.weight_decay},
                  {"adam_epsilon", c.train.adam_epsilon},
                  {"beta1", c.train.beta1},
                  {"beta2", c.train.beta2},
                  {"batch_size", c.train.batch_size},
                  {"val_every", c.train.val_every},
                  {"subset_dropout", c.train.subset_dropout}};
    j["eval"] = {{"batch_size", c.eval.batch_size},
                 {"silhouette", c.eval.silhouette},
                 {"silhouette_cap", c.eval.silhouette_cap}};
}

namespace {

// Layers `patch` onto `base`; objects merge recursively, everything else replaces.
void merge_strict(json& base, const json& patch, const std::string& path) {
    if (!patch.is_object()) throw ConfigError("config section '" + path + "' must be an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
        json& slot = base[it.key()];
        if (slot.is_object() && key != "data.synthetic")
            merge_strict(slot, it.value(), key);
        else if (key == "data.synthetic") {
            if (!it.value().is_object()) throw ConfigError("config section 'data.synthetic' must be an object");
            for (auto s = it.value().begin(); s != it.value().end(); ++s) {
                if (!slot.contains(s.key())) throw ConfigError("unknown config key '" + key + "." + s.key() + "'");
                slot[s.key()] = s.value();
            }
        } else
            slot = it.value();
    }
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
    try {
        return j.at(section).at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + section + "." + key + "': " + e.what());
    }
}

void decode(const json& j, Config& c) {
    c.seed.init = get<uint64_t>(j, "seed", "init");
    c.seed.data = get<uint64_t>(j, "seed", "data");
    c.seed.mas = get<uint64_t>(j, "seed", "mas");
    c.data.root = get<std::string>(j, "data", "root");
    c.data.hflip = get<bool>(j, "data", "hflip");
    c.data.ignore_index = get<int32_t>(j, "data", "ignore_index");
    try {
        c.data.synthetic = j.at("data").at("synthetic").get<SynthSpec>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config section 'data.synthetic': ") + e.what());
    }
    c.model.modalities = get<std::vector<std::string>>(j, "model", "modalities");
    c.model.num_classes = get<int>(j, "model", "K");
    c.model.sp_heads = get<int>(j, "model", "sp_heads");
    c.model.rp_heads = get<int>(j, "model", "rp_heads");
    c.model.mp_kernels = get<std::vector<int>>(j, "model", "mp_kernels");
    c.model.prototype_norm = parse_prototype_norm(get<std::string>(j, "model", "prototype_norm"));
    c.model.diagnostics = get<bool>(j, "model", "diagnostics");
    const json& enc = j.at("model").at("encoder");
    try {
        const auto ch = enc.at("stage_channels").get<std::vector<int64_t>>();
        if (ch.size() != kNumScales) throw ConfigError("model.encoder.stage_channels must list 4 values");
        std::copy(ch.begin(), ch.end(), c.model.encoder.stage_channels.begin());
        c.model.encoder.blocks_per_stage = enc.at("blocks_per_stage").get<int>();
        c.model.head.embed_width = j.at("model").at("head").at("embed_width").get<int64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config section 'model': ") + e.what());
    }
    c.loss.lambda_sgf = get<double>(j, "loss", "lambda_sgf");
    c.loss.lambda_mas = get<double>(j, "loss", "lambda_mas");
    c.mas.enabled = get<bool>(j, "mas", "enabled");
    c.mas.epsilon = get<double>(j, "mas", "epsilon");
    c.train.variant = parse_variant(get<std::string>(j, "train", "variant"));
    c.train.base_lr = get<double>(j, "train", "base_lr");
    c.train.poly_power = get<double>(j, "train", "poly_power");
    c.train.epochs = get<int>(j, "train", "epochs");
    c.train.warmup_epochs = get<int>(j, "train", "warmup_epochs");
    c.train.warmup_factor = get<double>(j, "train", "warmup_factor");
    const auto wm = get<std::string>(j, "train", "warmup_mode");
    if (wm != "constant" && wm != "linear") throw ConfigError("train.warmup_mode must be 'constant' or 'linear'");
    c.train.warmup_mode = wm == "constant" ? WarmupMode::Constant : WarmupMode::Linear;
    c.train.weight_decay = get<double>(j, "train", "weight_decay");
    c.train.adam_epsilon = get<double>(j, "train", "adam_epsilon");
    c.train.beta1 = get<double>(j, "train", "beta1");
    c.train.beta2 = get<double>(j, "train", "beta2");
    c.train.batch_size = get<int>(j, "train", "batch_size");
    c.train.val_every = get<int>(j, "train", "val_every");
    c.train.subset_dropout = get<bool>(j, "train", "subset_dropout");
    c.eval.batch_size = get<int>(j, "eval", "batch_size");
    c.eval.silhouette = get<bool>(j, "eval", "silhouette");
    c.eval.silhouette_cap = get<int>(j, "eval", "silhouette_cap");
}

}  // namespace

void from_json(const json& j, Config& c) {
    json tree = Config();
    merge_strict(tree, j, "");
    decode(tree, c);
    c.validate();
}

void apply_override(json& tree, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &tree;
    size_t start = 0;
    while (true) {
        const size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (node->is_object()) throw ConfigError("config key '" + key + "' names a section, not a value");
    *node = value;
}

Config config_with_overrides(const Config& base, const std::vector<std::string>& overrides) {
    json tree = base;
    for (const std::string& o : overrides) apply_override(tree, o);
    Config out;
    from_json(tree, out);
    return out;
}

Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    Config c;
    from_json(j, c);
    return config_with_overrides(c, overrides);
}

}  // namespace sgma
