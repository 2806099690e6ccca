#include "sgma/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "sgma/error.hpp"
#include "sgma/image_io.hpp"
#include "sgma/rng.hpp"

namespace sgma {

namespace fs = std::filesystem;
using nlohmann::json;

void ModalityImage::validate() const {
    if (height < 32 || width < 32)
        throw ValidationError("image '" + modality_id + "' is " + std::to_string(height) + "x" + std::to_string(width) +
                              "; both sides must be at least 32");
    if (channels < 1) throw ValidationError("image '" + modality_id + "' has no channels");
    if (static_cast<int64_t>(pixels.size()) != height * width * channels)
        throw ValidationError("image '" + modality_id + "' pixel count does not match its shape");
    for (double v : pixels)
        if (!std::isfinite(v)) throw ValidationError("image '" + modality_id + "' contains non-finite values");
}

std::vector<std::string> ModalityBundle::modality_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, img] : images) ids.push_back(id);
    return ids;
}

const ModalityImage& ModalityBundle::image(const std::string& modality) const {
    auto it = images.find(modality);
    if (it == images.end()) throw UsageError("sample '" + sample_id + "' has no modality '" + modality + "'");
    return it->second;
}

int64_t ModalityBundle::height() const {
    if (images.empty()) throw UsageError("sample '" + sample_id + "' has no images");
    return images.begin()->second.height;
}

int64_t ModalityBundle::width() const {
    if (images.empty()) throw UsageError("sample '" + sample_id + "' has no images");
    return images.begin()->second.width;
}

void ModalityBundle::validate(int num_classes, int32_t ignore_index) const {
    if (images.empty()) throw ValidationError("sample '" + sample_id + "' has no images");
    const int64_t h = height(), w = width();
    for (const auto& [id, img] : images) {
        if (id != img.modality_id) throw ValidationError("sample '" + sample_id + "': key/modality id mismatch");
        img.validate();
        if (img.height != h || img.width != w)
            throw ValidationError("sample '" + sample_id + "': modality '" + id + "' has a different spatial size");
    }
    if (labels) {
        if (labels->height != h || labels->width != w)
            throw ValidationError("sample '" + sample_id + "': label shape does not match image shape");
        if (static_cast<int64_t>(labels->ids.size()) != h * w)
            throw ValidationError("sample '" + sample_id + "': label count does not match its shape");
        for (int32_t v : labels->ids)
            if (v != ignore_index && (v < 0 || v >= num_classes))
                throw ValidationError("sample '" + sample_id + "': label value " + std::to_string(v) +
                                      " outside [0, " + std::to_string(num_classes) + ") and not the ignore index");
    }
}

std::vector<std::string> DatasetManifest::modality_names() const {
    std::vector<std::string> names;
    for (const auto& m : modalities) names.push_back(m.name);
    return names;
}

const ModalityInfo& DatasetManifest::modality(const std::string& name) const {
    for (const auto& m : modalities)
        if (m.name == name) return m;
    throw UsageError("manifest declares no modality '" + name + "'");
}

void DatasetManifest::validate() const {
    if (modalities.empty()) throw ValidationError("manifest declares no modalities");
    if (class_names.size() < 2) throw ValidationError("manifest needs at least 2 classes");
    if (ignore_index >= 0 && ignore_index < num_classes())
        throw ValidationError("ignore_index " + std::to_string(ignore_index) + " collides with a class id");
    std::set<std::string> seen;
    for (const auto& m : modalities) {
        if (m.name.empty() || m.name == "labels") throw ValidationError("invalid modality name '" + m.name + "'");
        if (!seen.insert(m.name).second) throw ValidationError("duplicate modality '" + m.name + "'");
        if (m.channels != 1 && m.channels != 3)
            throw ValidationError("modality '" + m.name + "' declares " + std::to_string(m.channels) + " channels");
    }
}

void to_json(json& j, const DatasetManifest& m) {
    json mods = json::array();
    for (const auto& mod : m.modalities) mods.push_back({{"name", mod.name}, {"channels", mod.channels}});
    json norm = json::object();
    for (const auto& [name, st] : m.normalization) norm[name] = {{"mean", st.mean}, {"std", st.stddev}};
    j = json{{"modalities", mods},
             {"class_names", m.class_names},
             {"ignore_index", m.ignore_index},
             {"splits", {{"train", m.train_ids}, {"val", m.val_ids}}},
             {"normalization", norm},
             {"image_extension", m.image_extension}};
}

void from_json(const json& j, DatasetManifest& m) {
    m = DatasetManifest{};
    for (const auto& mod : j.at("modalities")) m.modalities.push_back({mod.at("name").get<std::string>(), mod.value("channels", 3)});
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.ignore_index = j.value("ignore_index", 255);
    if (j.contains("splits")) {
        m.train_ids = j.at("splits").value("train", std::vector<std::string>{});
        m.val_ids = j.at("splits").value("val", std::vector<std::string>{});
    }
    if (j.contains("normalization"))
        for (const auto& [name, st] : j.at("normalization").items())
            m.normalization[name] = {st.at("mean").get<std::vector<double>>(), st.at("std").get<std::vector<double>>()};
    m.image_extension = j.value("image_extension", std::string("png"));
}

DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open manifest " + path.string());
    DatasetManifest m;
    try {
        json j;
        in >> j;
        m = j.get<DatasetManifest>();
    } catch (const json::exception& e) {
        throw IngestionError("malformed manifest " + path.string() + ": " + e.what());
    }
    m.validate();
    return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write manifest " + path.string());
    out << json(manifest).dump(2) << '\n';
}

std::vector<ModalityBundle> load_dataset(const fs::path& root, const DatasetManifest& manifest,
                                         std::vector<std::string> sample_ids) {
    manifest.validate();
    std::sort(sample_ids.begin(), sample_ids.end());
    const std::string ext = "." + manifest.image_extension;
    std::vector<ModalityBundle> bundles;
    bundles.reserve(sample_ids.size());
    for (const std::string& id : sample_ids) {
        ModalityBundle b;
        b.sample_id = id;
        for (const ModalityInfo& mod : manifest.modalities) {
            const fs::path file = root / mod.name / (id + ext);
            if (!fs::exists(file))
                throw IngestionError("sample '" + id + "' is missing modality '" + mod.name + "' (" + file.string() + ")");
            const Raster r = read_raster(file);
            if (r.channels != mod.channels)
                throw IngestionError("sample '" + id + "' modality '" + mod.name + "' has " + std::to_string(r.channels) +
                                     " channels, manifest declares " + std::to_string(mod.channels));
            ModalityImage img{mod.name, r.height, r.width, r.channels, {}};
            img.pixels.resize(r.samples.size());
            const double scale = 1.0 / r.max_value();
            for (size_t i = 0; i < r.samples.size(); ++i) img.pixels[i] = r.samples[i] * scale;
            if (!b.images.empty() && (img.height != b.height() || img.width != b.width()))
                throw IngestionError("sample '" + id + "' modality '" + mod.name + "' is " + std::to_string(img.height) +
                                     "x" + std::to_string(img.width) + ", other modalities are " +
                                     std::to_string(b.height()) + "x" + std::to_string(b.width()));
            b.images.emplace(mod.name, std::move(img));
        }
        const fs::path label_file = root / "labels" / (id + ext);
        if (!fs::exists(label_file)) throw IngestionError("sample '" + id + "' is missing its label map (" + label_file.string() + ")");
        const Raster lr = read_raster(label_file);
        if (lr.channels != 1) throw IngestionError("label map for '" + id + "' must be single-channel");
        if (lr.height != b.height() || lr.width != b.width())
            throw IngestionError("label map for '" + id + "' does not match the image size");
        LabelMap labels{lr.height, lr.width, {}};
        labels.ids.assign(lr.samples.begin(), lr.samples.end());
        b.labels = std::move(labels);
        b.validate(manifest.num_classes(), manifest.ignore_index);
        bundles.push_back(std::move(b));
    }
    return bundles;
}

Dataset load_dataset(const fs::path& root, DatasetManifest manifest) {
    Dataset ds;
    ds.train = load_dataset(root, manifest, manifest.train_ids);
    ds.val = load_dataset(root, manifest, manifest.val_ids);
    if (manifest.normalization.empty()) manifest.normalization = compute_channel_stats(ds.train, manifest.modalities);
    normalize(ds.train, manifest.normalization);
    normalize(ds.val, manifest.normalization);
    ds.manifest = std::move(manifest);
    return ds;
}

std::map<std::string, ChannelStats> compute_channel_stats(const std::vector<ModalityBundle>& bundles,
                                                          const std::vector<ModalityInfo>& modalities) {
    std::map<std::string, ChannelStats> stats;
    for (const ModalityInfo& mod : modalities) {
        const auto c = static_cast<size_t>(mod.channels);
        std::vector<double> sum(c, 0.0), sq(c, 0.0);
        double count = 0.0;
        for (const ModalityBundle& b : bundles) {
            const ModalityImage& img = b.image(mod.name);
            if (static_cast<size_t>(img.channels) != c)
                throw ValidationError("modality '" + mod.name + "' channel count differs from the manifest");
            for (size_t i = 0; i < img.pixels.size(); ++i) {
                sum[i % c] += img.pixels[i];
                sq[i % c] += img.pixels[i] * img.pixels[i];
            }
            count += static_cast<double>(img.height * img.width);
        }
        ChannelStats st;
        for (size_t ch = 0; ch < c; ++ch) {
            const double mean = count > 0 ? sum[ch] / count : 0.0;
            const double var = count > 0 ? std::max(sq[ch] / count - mean * mean, 0.0) : 0.0;
            st.mean.push_back(mean);
            st.stddev.push_back(var > 1e-12 ? std::sqrt(var) : 1.0);
        }
        stats[mod.name] = std::move(st);
    }
    return stats;
}

void normalize(std::vector<ModalityBundle>& bundles, const std::map<std::string, ChannelStats>& stats) {
    for (ModalityBundle& b : bundles)
        for (auto& [id, img] : b.images) {
            auto it = stats.find(id);
            if (it == stats.end()) throw ValidationError("no normalization statistics for modality '" + id + "'");
            const auto c = static_cast<size_t>(img.channels);
            if (it->second.mean.size() != c || it->second.stddev.size() != c)
                throw ValidationError("normalization statistics for '" + id + "' have the wrong channel count");
            for (size_t i = 0; i < img.pixels.size(); ++i)
                img.pixels[i] = (img.pixels[i] - it->second.mean[i % c]) / it->second.stddev[i % c];
        }
}

ModalityBundle make_subset(const ModalityBundle& bundle, const std::vector<std::string>& keep) {
    if (keep.empty()) throw UsageError("make_subset: the kept modality set must be non-empty");
    ModalityBundle out;
    out.sample_id = bundle.sample_id;
    out.labels = bundle.labels;
    for (const std::string& id : keep) {
        auto it = bundle.images.find(id);
        if (it == bundle.images.end())
            throw UsageError("make_subset: sample '" + bundle.sample_id + "' has no modality '" + id + "'");
        out.images.emplace(id, it->second);
    }
    return out;
}

ModalityBundle hflip(const ModalityBundle& bundle) {
    ModalityBundle out = bundle;
    for (auto& [id, img] : out.images) {
        const auto& src = bundle.images.at(id);
        for (int64_t y = 0; y < img.height; ++y)
            for (int64_t x = 0; x < img.width; ++x)
                for (int64_t c = 0; c < img.channels; ++c)
                    img.pixels[static_cast<size_t>((y * img.width + x) * img.channels + c)] = src.at(y, img.width - 1 - x, c);
    }
    if (out.labels)
        for (int64_t y = 0; y < out.labels->height; ++y)
            for (int64_t x = 0; x < out.labels->width; ++x)
                out.labels->ids[static_cast<size_t>(y * out.labels->width + x)] =
                    bundle.labels->at(y, out.labels->width - 1 - x);
    return out;
}

// --- synthetic -------------------------------------------------------------------

SynthSpec SynthSpec::three_modality_default(uint64_t seed) {
    SynthSpec s;
    s.num_classes = 5;
    s.class_names = {"impervious", "building", "low_vegetation", "tree", "car"};
    s.seed = seed;
    // R confuses low vegetation and tree; D confuses impervious and low vegetation;
    // N only separates the two vegetation classes and is noisy.
    s.modalities = {
        {"R", 3, {0, 1, 2, 2, 3}, 0.08},
        {"D", 1, {0, 1, 0, 2, 3}, 0.12},
        {"N", 1, {0, 0, 1, 2, 0}, 0.25},
    };
    return s;
}

bool SynthSpec::discriminable(size_t modality, int cls) const {
    const auto& groups = modalities.at(modality).groups;
    const int g = groups.at(static_cast<size_t>(cls));
    return std::count(groups.begin(), groups.end(), g) == 1;
}

void SynthSpec::validate() const {
    if (modalities.size() < 2) throw SpecError("synthetic spec needs at least 2 modalities");
    if (num_classes < 2) throw SpecError("synthetic spec needs at least 2 classes");
    if (!class_names.empty() && static_cast<int>(class_names.size()) != num_classes)
        throw SpecError("class_names size does not match num_classes");
    if (image_size < 32 || image_size % 32 != 0) throw SpecError("image_size must be a positive multiple of 32");
    if (train_samples < 1 || val_samples < 0) throw SpecError("invalid split sizes");
    if (min_regions < 1 || max_regions < min_regions) throw SpecError("invalid region count range");
    if (region_jitter < 0.0) throw SpecError("region_jitter must be non-negative");
    std::set<std::string> names;
    for (const auto& m : modalities) {
        if (!names.insert(m.name).second) throw SpecError("duplicate modality '" + m.name + "'");
        if (m.channels != 1 && m.channels != 3) throw SpecError("modality '" + m.name + "' must have 1 or 3 channels");
        if (static_cast<int>(m.groups.size()) != num_classes)
            throw SpecError("modality '" + m.name + "' separability profile must list one group per class");
        if (m.noise < 0.0) throw SpecError("modality '" + m.name + "' has negative noise");
        for (int g : m.groups)
            if (g < 0) throw SpecError("modality '" + m.name + "' has a negative group id");
    }
    for (int k = 0; k < num_classes; ++k) {
        bool any = false;
        for (size_t m = 0; m < modalities.size(); ++m) any = any || discriminable(m, k);
        if (!any) throw SpecError("class " + std::to_string(k) + " is discriminable by no modality");
    }
    // At least one modality must be fragile: noisier than the rest or separating at most half the classes.
    double min_noise = modalities[0].noise, max_noise = modalities[0].noise;
    size_t fewest = static_cast<size_t>(num_classes);
    for (size_t m = 0; m < modalities.size(); ++m) {
        min_noise = std::min(min_noise, modalities[m].noise);
        max_noise = std::max(max_noise, modalities[m].noise);
        size_t n = 0;
        for (int k = 0; k < num_classes; ++k) n += discriminable(m, k) ? 1 : 0;
        fewest = std::min(fewest, n);
    }
    if (!(max_noise > min_noise) && fewest * 2 > static_cast<size_t>(num_classes))
        throw SpecError("synthetic spec has no fragile modality");
}

void to_json(json& j, const SynthSpec& s) {
    json mods = json::array();
    for (const auto& m : s.modalities)
        mods.push_back({{"name", m.name}, {"channels", m.channels}, {"groups", m.groups}, {"noise", m.noise}});
    j = json{{"num_classes", s.num_classes}, {"class_names", s.class_names}, {"image_size", s.image_size},
             {"train_samples", s.train_samples}, {"val_samples", s.val_samples}, {"min_regions", s.min_regions},
             {"max_regions", s.max_regions}, {"region_jitter", s.region_jitter}, {"modalities", mods},
             {"seed", s.seed}};
}

void from_json(const json& j, SynthSpec& s) {
    const SynthSpec d = SynthSpec::three_modality_default();
    s.num_classes = j.value("num_classes", d.num_classes);
    s.class_names = j.value("class_names", d.class_names);
    s.image_size = j.value("image_size", d.image_size);
    s.train_samples = j.value("train_samples", d.train_samples);
    s.val_samples = j.value("val_samples", d.val_samples);
    s.min_regions = j.value("min_regions", d.min_regions);
    s.max_regions = j.value("max_regions", d.max_regions);
    s.region_jitter = j.value("region_jitter", d.region_jitter);
    s.seed = j.value("seed", d.seed);
    s.modalities.clear();
    if (j.contains("modalities")) {
        for (const auto& m : j.at("modalities"))
            s.modalities.push_back({m.at("name").get<std::string>(), m.value("channels", 1),
                                    m.at("groups").get<std::vector<int>>(), m.value("noise", 0.1)});
    } else {
        s.modalities = d.modalities;
    }
}

std::vector<double> synth_render_value(const SynthSpec& spec, size_t modality, int cls) {
    const SynthModality& mod = spec.modalities.at(modality);
    const int num_groups = *std::max_element(mod.groups.begin(), mod.groups.end()) + 1;
    // Evenly spaced levels in [0.2, 0.8]; each channel uses its own seeded permutation.
    RngStream rng("synth.palette." + mod.name, spec.seed);
    std::vector<double> value;
    const int g = mod.groups.at(static_cast<size_t>(cls));
    for (int c = 0; c < mod.channels; ++c) {
        std::vector<int> perm(static_cast<size_t>(num_groups));
        std::iota(perm.begin(), perm.end(), 0);
        for (size_t i = perm.size(); i > 1; --i)
            std::swap(perm[i - 1], perm[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
        const double level = num_groups == 1 ? 0.5 : 0.2 + 0.6 * perm[static_cast<size_t>(g)] / (num_groups - 1);
        value.push_back(level);
    }
    return value;
}

namespace {

ModalityBundle synth_sample(const SynthSpec& spec, const std::vector<std::vector<std::vector<double>>>& palette,
                            RngStream& rng, const std::string& id) {
    const int64_t n = spec.image_size;
    const int regions = static_cast<int>(rng.uniform_int(spec.min_regions, spec.max_regions));
    std::vector<double> sx(static_cast<size_t>(regions)), sy(static_cast<size_t>(regions));
    std::vector<int> cls(static_cast<size_t>(regions));
    for (int r = 0; r < regions; ++r) {
        sx[static_cast<size_t>(r)] = rng.uniform() * static_cast<double>(n);
        sy[static_cast<size_t>(r)] = rng.uniform() * static_cast<double>(n);
        cls[static_cast<size_t>(r)] = static_cast<int>(rng.uniform_int(0, spec.num_classes - 1));
    }
    std::vector<int> region_of(static_cast<size_t>(n * n));
    LabelMap labels{n, n, std::vector<int32_t>(static_cast<size_t>(n * n))};
    for (int64_t y = 0; y < n; ++y)
        for (int64_t x = 0; x < n; ++x) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int r = 0; r < regions; ++r) {
                const double dx = static_cast<double>(x) + 0.5 - sx[static_cast<size_t>(r)];
                const double dy = static_cast<double>(y) + 0.5 - sy[static_cast<size_t>(r)];
                const double d = dx * dx + dy * dy;
                if (d < best_d) {
                    best_d = d;
                    best = r;
                }
            }
            region_of[static_cast<size_t>(y * n + x)] = best;
            labels.ids[static_cast<size_t>(y * n + x)] = cls[static_cast<size_t>(best)];
        }

    ModalityBundle b;
    b.sample_id = id;
    for (size_t m = 0; m < spec.modalities.size(); ++m) {
        const SynthModality& mod = spec.modalities[m];
        std::vector<double> jitter(static_cast<size_t>(regions * mod.channels));
        for (double& j : jitter) j = (2.0 * rng.uniform() - 1.0) * spec.region_jitter;
        ModalityImage img{mod.name, n, n, mod.channels, std::vector<double>(static_cast<size_t>(n * n * mod.channels))};
        for (int64_t p = 0; p < n * n; ++p) {
            const int r = region_of[static_cast<size_t>(p)];
            const auto& base = palette[m][static_cast<size_t>(cls[static_cast<size_t>(r)])];
            for (int c = 0; c < mod.channels; ++c) {
                const double noise = mod.noise > 0.0 ? rng.normal(0.0, mod.noise) : 0.0;
                img.pixels[static_cast<size_t>(p * mod.channels + c)] =
                    base[static_cast<size_t>(c)] + jitter[static_cast<size_t>(r * mod.channels + c)] + noise;
            }
        }
        b.images.emplace(mod.name, std::move(img));
    }
    b.labels = std::move(labels);
    return b;
}

}  // namespace

SynthDataset generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    std::vector<std::vector<std::vector<double>>> palette(spec.modalities.size());
    for (size_t m = 0; m < spec.modalities.size(); ++m)
        for (int k = 0; k < spec.num_classes; ++k) palette[m].push_back(synth_render_value(spec, m, k));
    RngStream rng("synth.data", spec.seed);
    SynthDataset out;
    char id[32];
    for (int i = 0; i < spec.train_samples; ++i) {
        std::snprintf(id, sizeof(id), "train_%04d", i);
        out.train.push_back(synth_sample(spec, palette, rng, id));
    }
    for (int i = 0; i < spec.val_samples; ++i) {
        std::snprintf(id, sizeof(id), "val_%04d", i);
        out.val.push_back(synth_sample(spec, palette, rng, id));
    }
    return out;
}

DatasetManifest synth_manifest(const SynthSpec& spec, const SynthDataset& data) {
    DatasetManifest m;
    for (const auto& mod : spec.modalities) m.modalities.push_back({mod.name, mod.channels});
    m.class_names = spec.class_names;
    if (m.class_names.empty())
        for (int k = 0; k < spec.num_classes; ++k) m.class_names.push_back("class" + std::to_string(k));
    for (const auto& b : data.train) m.train_ids.push_back(b.sample_id);
    for (const auto& b : data.val) m.val_ids.push_back(b.sample_id);
    return m;
}

Dataset synthetic_dataset(const SynthSpec& spec) {
    SynthDataset data = generate_synthetic(spec);
    Dataset ds;
    ds.manifest = synth_manifest(spec, data);
    ds.manifest.normalization = compute_channel_stats(data.train, ds.manifest.modalities);
    ds.train = std::move(data.train);
    ds.val = std::move(data.val);
    normalize(ds.train, ds.manifest.normalization);
    normalize(ds.val, ds.manifest.normalization);
    return ds;
}

void write_dataset(const fs::path& root, const DatasetManifest& manifest, const std::vector<ModalityBundle>& bundles) {
    const std::string ext = "." + manifest.image_extension;
    for (const auto& mod : manifest.modalities) fs::create_directories(root / mod.name);
    fs::create_directories(root / "labels");
    for (const ModalityBundle& b : bundles) {
        for (const auto& mod : manifest.modalities) {
            const ModalityImage& img = b.image(mod.name);
            Raster r{img.height, img.width, static_cast<int>(img.channels), 16, {}};
            r.samples.resize(img.pixels.size());
            for (size_t i = 0; i < img.pixels.size(); ++i)
                r.samples[i] = static_cast<uint16_t>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 65535.0));
            write_raster(root / mod.name / (b.sample_id + ext), r);
        }
        if (!b.labels) throw UsageError("write_dataset: sample '" + b.sample_id + "' has no labels");
        Raster lr{b.labels->height, b.labels->width, 1, 8, {}};
        for (int32_t v : b.labels->ids) {
            if (v < 0 || v > 255) throw ValidationError("label value does not fit in 8 bits");
            lr.samples.push_back(static_cast<uint16_t>(v));
        }
        write_raster(root / "labels" / (b.sample_id + ext), lr);
    }
}

}  // namespace sgma
