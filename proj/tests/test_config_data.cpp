#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sgma/config.hpp"
#include "sgma/data.hpp"
#include "sgma/error.hpp"
#include "sgma/image_io.hpp"
#include "support.hpp"

namespace sgma {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("sgma_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

TEST(Config, JsonRoundTrip) {
    for (const Config& c : {Config(), Config::desk(), Config::paper(), test::tiny_config(Variant::B)}) {
        const json j = c;
        EXPECT_EQ(json(j.get<Config>()), j);
    }
}

TEST(Config, OverridesApplyInOrder) {
    const Config c = config_with_overrides(
        Config::desk(), {"train.epochs=12", "train.variant=a", "model.prototype_norm=off", "train.epochs=7",
                         "data.synthetic.seed=99", "model.encoder.stage_channels=[8,8,16,16]"});
    EXPECT_EQ(c.train.epochs, 7);
    EXPECT_EQ(c.train.variant, Variant::A);
    EXPECT_EQ(c.model.prototype_norm, PrototypeNorm::Off);
    EXPECT_EQ(c.data.synthetic.seed, 99u);
    EXPECT_EQ(c.model.encoder.stage_channels[2], 16);
}

TEST(Config, UnknownKeysAreNamed) {
    try {
        config_with_overrides(Config::desk(), {"train.epocs=3"});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("train.epocs"), std::string::npos);
    }
    EXPECT_THROW(config_with_overrides(Config::desk(), {"train"}), ConfigError);
    EXPECT_THROW(config_with_overrides(Config::desk(), {"train={}"}), ConfigError);
    json j = Config::desk();
    j["model"]["extra"] = 1;
    try {
        j.get<Config>();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("model.extra"), std::string::npos);
    }
}

TEST(Config, ValidationCatchesBadValues) {
    EXPECT_THROW(config_with_overrides(Config::desk(), {"train.variant=d"}), ConfigError);
    EXPECT_THROW(config_with_overrides(Config::desk(), {"train.warmup_mode=cosine"}), ConfigError);
    Config c = Config::desk();
    c.data.ignore_index = 2;
    EXPECT_THROW(c.validate(), ConfigError);
    c = Config::desk();
    c.model.encoder.stage_channels = {32, 16, 32, 32};
    EXPECT_THROW(c.validate(), ConfigError);
    c = Config::desk();
    c.train.warmup_epochs = 40;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, FileLayersOnDefaults) {
    TempDir dir("config");
    const fs::path p = dir.path / "c.json";
    std::ofstream(p) << R"({"train": {"epochs": 4}, "model": {"K": 5}})";
    const Config c = load_config(p, {"train.batch_size=3"});
    EXPECT_EQ(c.train.epochs, 4);
    EXPECT_EQ(c.train.batch_size, 3);
    EXPECT_EQ(c.train.base_lr, Config().train.base_lr);
    EXPECT_THROW(load_config(dir.path / "missing.json"), ConfigError);
    std::ofstream(p) << "{not json";
    EXPECT_THROW(load_config(p), ConfigError);
}

TEST(Synthetic, DeterministicAndSeedSensitive) {
    SynthSpec s = test::tiny_config().data.synthetic;
    const SynthDataset a = generate_synthetic(s), b = generate_synthetic(s);
    EXPECT_EQ(a.train[0].image("R").pixels, b.train[0].image("R").pixels);
    EXPECT_EQ(a.val[1].labels->ids, b.val[1].labels->ids);
    s.seed += 1;
    const SynthDataset c = generate_synthetic(s);
    EXPECT_NE(a.train[0].labels->ids, c.train[0].labels->ids);
    EXPECT_EQ(a.train.size(), 4u);
    EXPECT_EQ(a.val.size(), 2u);
    for (const auto& bundle : a.train) EXPECT_NO_THROW(bundle.validate(3, 255));
}

TEST(Synthetic, ClassesRenderByGroup) {
    const SynthSpec s = SynthSpec::three_modality_default();
    EXPECT_EQ(synth_render_value(s, 2, 0), synth_render_value(s, 2, 1));
    EXPECT_NE(synth_render_value(s, 0, 2), synth_render_value(s, 0, 0));
    for (int k = 0; k < s.num_classes; ++k) {
        bool any = false;
        for (size_t m = 0; m < s.modalities.size(); ++m) any = any || s.discriminable(m, k);
        EXPECT_TRUE(any) << k;
    }
    SynthSpec bad = s;
    bad.image_size = 48;
    EXPECT_THROW(bad.validate(), SpecError);
}

TEST(Dataset, WriteThenLoadRoundTrip) {
    TempDir dir("dataset");
    const SynthSpec s = test::tiny_config().data.synthetic;
    const SynthDataset data = generate_synthetic(s);
    DatasetManifest man = synth_manifest(s, data);
    write_dataset(dir.path, man, data.train);
    write_dataset(dir.path, man, data.val);
    write_manifest(dir.path / "manifest.json", man);
    const DatasetManifest back = read_manifest(dir.path / "manifest.json");
    EXPECT_EQ(json(back), json(man));
    const auto raw = load_dataset(dir.path, back, back.train_ids);
    ASSERT_EQ(raw.size(), data.train.size());
    const auto& want = data.train[0].image("R").pixels;
    const auto& got = raw[0].image("R").pixels;
    ASSERT_EQ(got.size(), want.size());
    for (size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], std::clamp(want[i], 0.0, 1.0), 0.5 / 65535 + 1e-12);
    EXPECT_EQ(raw[0].labels->ids, data.train[0].labels->ids);
    const Dataset ds = load_dataset(dir.path, back);
    EXPECT_EQ(ds.manifest.normalization.size(), 3u);
}

TEST(Dataset, LoaderErrorsNameTheProblem) {
    TempDir dir("badset");
    const SynthSpec s = test::tiny_config().data.synthetic;
    const SynthDataset data = generate_synthetic(s);
    const DatasetManifest man = synth_manifest(s, data);
    write_dataset(dir.path, man, data.train);
    EXPECT_THROW(read_manifest(dir.path / "manifest.json"), IngestionError);
    fs::remove(dir.path / "D" / (man.train_ids[0] + ".png"));
    try {
        load_dataset(dir.path, man, man.train_ids);
        FAIL();
    } catch (const IngestionError& e) {
        EXPECT_NE(std::string(e.what()).find("missing modality 'D'"), std::string::npos);
    }
    write_dataset(dir.path, man, data.train);
    // Wrong channel count for R.
    Raster r{32, 32, 1, 8, std::vector<uint16_t>(32 * 32, 0)};
    write_raster(dir.path / "R" / (man.train_ids[1] + ".png"), r);
    EXPECT_THROW(load_dataset(dir.path, man, man.train_ids), IngestionError);
    write_dataset(dir.path, man, data.train);
    fs::remove(dir.path / "labels" / (man.train_ids[2] + ".png"));
    EXPECT_THROW(load_dataset(dir.path, man, man.train_ids), IngestionError);
    std::ofstream(dir.path / "manifest.json") << "{\"modalities\": 3}";
    EXPECT_THROW(read_manifest(dir.path / "manifest.json"), IngestionError);
}

TEST(Dataset, ManifestValidation) {
    DatasetManifest m;
    m.modalities = {{"R", 3}, {"R", 1}};
    m.class_names = {"a", "b"};
    EXPECT_THROW(m.validate(), ValidationError);
    m.modalities = {{"R", 3}};
    m.ignore_index = 1;
    EXPECT_THROW(m.validate(), ValidationError);
}

TEST(Bundles, SubsetFlipAndValidation) {
    const SynthDataset data = generate_synthetic(test::tiny_config().data.synthetic);
    const ModalityBundle& b = data.train[0];
    const ModalityBundle s = make_subset(b, {"N", "R"});
    EXPECT_EQ(s.modality_ids().size(), 2u);
    EXPECT_TRUE(s.labels.has_value());
    EXPECT_THROW(make_subset(b, {}), UsageError);
    EXPECT_THROW(make_subset(b, {"T"}), UsageError);
    const ModalityBundle f = hflip(hflip(b));
    EXPECT_EQ(f.image("R").pixels, b.image("R").pixels);
    EXPECT_EQ(hflip(b).labels->at(0, 0), b.labels->at(0, 31));
    ModalityBundle bad = b;
    bad.labels->ids[5] = 7;
    EXPECT_THROW(bad.validate(3, 255), ValidationError);
    bad = b;
    bad.images.at("D").pixels[0] = std::nan("");
    EXPECT_THROW(bad.validate(3, 255), ValidationError);
}

TEST(Normalization, TrainStatsGiveZeroMeanUnitStd) {
    const SynthDataset data = generate_synthetic(test::tiny_config().data.synthetic);
    const DatasetManifest man = synth_manifest(test::tiny_config().data.synthetic, data);
    auto train = data.train;
    const auto stats = compute_channel_stats(train, man.modalities);
    normalize(train, stats);
    const auto after = compute_channel_stats(train, man.modalities);
    for (const auto& [name, st] : after)
        for (size_t c = 0; c < st.mean.size(); ++c) {
            EXPECT_NEAR(st.mean[c], 0.0, 1e-9) << name;
            EXPECT_NEAR(st.stddev[c], 1.0, 1e-9) << name;
        }
}

}  // namespace
}  // namespace sgma
