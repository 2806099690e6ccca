#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "plot.hpp"
#include "sgma/config.hpp"
#include "sgma/data.hpp"
#include "sgma/error.hpp"
#include "sgma/eval.hpp"
#include "sgma/train.hpp"

namespace sgma::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::string config;
    std::string out;
    std::vector<std::string> overrides;
    std::optional<uint64_t> seed;
    std::string variant;
    std::string subset;
    std::string checkpoint;
    std::string metrics;
    std::string diagnostics;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IngestionError("cannot write " + path.string());
    f << text;
    if (!f) throw IngestionError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IngestionError("cannot open " + path.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw IngestionError(path.string() + " is not valid JSON: " + e.what());
    }
}

fs::path prepare_out(const Options& o) {
    const fs::path out(o.out);
    fs::create_directories(out);
    return out;
}

/// Config file, then --override in order, then --seed and --variant.
Config effective_config(const Options& o, bool seed_is_data) {
    if (!fs::exists(o.config)) throw ConfigError("config file not found: " + o.config);
    std::vector<std::string> overrides = o.overrides;
    if (o.seed) {
        const std::string v = std::to_string(*o.seed);
        if (seed_is_data) {
            overrides.push_back("data.synthetic.seed=" + v);
        } else {
            for (const char* k : {"seed.init", "seed.data", "seed.mas"}) overrides.push_back(std::string(k) + "=" + v);
        }
    }
    if (!o.variant.empty()) overrides.push_back("train.variant=\"" + o.variant + "\"");
    Config c = load_config(o.config, overrides);
    c.validate();
    return c;
}

void write_config(const fs::path& out, const Config& c) {
    write_text(out / "effective_config.json", json(c).dump(2) + "\n");
}

std::vector<std::string> split_subset(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    if (out.empty()) throw UsageError("--subset is empty");
    return out;
}

/// Model from the checkpoint, with evaluation settings taken from the command's config.
Model load_model(const Options& o, const Config& cfg) {
    if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
    Checkpoint ckpt = Checkpoint::load(o.checkpoint);
    ckpt.config["eval"] = json(cfg)["eval"];
    return model_from_checkpoint(ckpt);
}

void check_compatible(const Model& model, const Dataset& ds) {
    const auto names = ds.manifest.modality_names();
    for (const std::string& m : model.modalities())
        if (std::find(names.begin(), names.end(), m) == names.end())
            throw ValidationError("dataset has no modality '" + m + "' required by the checkpoint");
    if (ds.manifest.num_classes() != model.config().model.num_classes)
        throw ValidationError("dataset has " + std::to_string(ds.manifest.num_classes()) +
                              " classes, checkpoint expects " + std::to_string(model.config().model.num_classes));
}

int synth_data(const Options& o, std::ostream& out) {
    const Config cfg = effective_config(o, true);
    const fs::path dir = prepare_out(o);
    const SynthSpec& spec = cfg.data.synthetic;
    SynthDataset data = generate_synthetic(spec);
    DatasetManifest manifest = synth_manifest(spec, data);
    manifest.ignore_index = cfg.data.ignore_index;
    manifest.normalization = compute_channel_stats(data.train, manifest.modalities);
    write_dataset(dir, manifest, data.train);
    write_dataset(dir, manifest, data.val);
    write_manifest(dir / "manifest.json", manifest);
    write_config(dir, cfg);
    out << "wrote " << data.train.size() << " train and " << data.val.size() << " val samples to " << dir.string()
        << "\n";
    return 0;
}

int train(const Options& o, std::ostream& out) {
    const Config cfg = effective_config(o, false);
    const fs::path dir = prepare_out(o);
    write_config(dir, cfg);
    const Dataset ds = load_configured_dataset(cfg);
    std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
    if (!log) throw IngestionError("cannot write " + (dir / "train_log.jsonl").string());
    FitResult r = fit(cfg, ds, [&](const EpochRecord& e) {
        const json j = e.to_json();
        log << j.dump() << "\n" << std::flush;
        out << "epoch " << e.epoch << " loss " << e.total;
        if (e.validation) out << " val_average_miou " << e.validation->miou.average;
        out << "\n";
    });
    r.last.save(dir / "last.ckpt");
    r.best.save(dir / "best.ckpt");
    if (r.best_report) {
        write_text(dir / "val_metrics.json", r.best_report->to_json().dump(2) + "\n");
        write_text(dir / "val_metrics.md", r.best_report->table());
        out << r.best_report->table();
    }
    return 0;
}

int eval(const Options& o, std::ostream& out) {
    const Config cfg = effective_config(o, false);
    const Model model = load_model(o, cfg);
    const Dataset ds = load_configured_dataset(cfg);
    check_compatible(model, ds);
    std::vector<std::vector<std::string>> subsets;
    if (!o.subset.empty()) subsets.push_back(split_subset(o.subset));
    MetricsReport report = evaluate(model, ds.val, model.config().model.num_classes, ds.manifest.ignore_index,
                                    subsets, cfg.eval.batch_size);
    report.class_names = ds.manifest.class_names;
    const fs::path dir = prepare_out(o);
    write_config(dir, cfg);
    write_text(dir / "metrics.json", report.to_json().dump(2) + "\n");
    write_text(dir / "metrics.md", report.table());
    out << report.table();
    return 0;
}

int diagnose_cmd(const Options& o, std::ostream& out) {
    const Config cfg = effective_config(o, false);
    const Model model = load_model(o, cfg);
    const Dataset ds = load_configured_dataset(cfg);
    check_compatible(model, ds);
    const DiagnosticsReport report = diagnose(model, ds.val, ds.manifest.class_names, ds.manifest.ignore_index);
    const fs::path dir = prepare_out(o);
    write_config(dir, cfg);
    write_text(dir / "diagnostics.json", report.to_json().dump(2) + "\n");
    out << "wrote " << (dir / "diagnostics.json").string() << "\n";
    return 0;
}

int plot_cmd(const Options& o, std::ostream& out) {
    if (o.metrics.empty() && o.diagnostics.empty()) throw UsageError("plot needs --metrics and/or --diagnostics");
    const fs::path dir = prepare_out(o);
    std::vector<std::pair<std::string, std::string>> files;
    if (!o.metrics.empty()) files.push_back(plot::metrics_figure(read_json(o.metrics)));
    if (!o.diagnostics.empty()) {
        auto figs = plot::diagnostics_figures(read_json(o.diagnostics));
        files.insert(files.end(), figs.begin(), figs.end());
    }
    for (const auto& [name, svg] : files) {
        write_text(dir / name, svg);
        out << "wrote " << (dir / name).string() << "\n";
    }
    return 0;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Incomplete multimodal semantic segmentation: training, evaluation and diagnostics"};
    app.require_subcommand(1, 1);
    Options o;

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", o.config, "JSON config file");
        if (needs_config) c->required();
        sub->add_option("--out", o.out, "output directory")->required();
    };
    auto run_opts = [&](CLI::App* sub) {
        sub->add_option("--override", o.overrides, "dotted.key=value, repeatable")->take_all();
        sub->add_option("--seed", o.seed, "seed for the init, data and mas streams");
    };

    auto* synth = app.add_subcommand("synth-data", "write the synthetic dataset and manifest");
    common(synth, true);
    run_opts(synth);
    synth->get_option("--seed")->description("synthetic data seed");

    auto* tr = app.add_subcommand("train", "train and write checkpoints and a JSON-lines log");
    common(tr, true);
    run_opts(tr);
    tr->add_option("--variant", o.variant, "a, b or c")->check(CLI::IsMember({"a", "b", "c"}));

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on every modality subset");
    common(ev, true);
    run_opts(ev);
    ev->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
    ev->add_option("--subset", o.subset, "comma-separated modalities, e.g. R,D");

    auto* dg = app.add_subcommand("diagnose", "feature variance, robustness and complexity report");
    common(dg, true);
    run_opts(dg);
    dg->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();

    auto* pl = app.add_subcommand("plot", "render SVG figures from report files");
    common(pl, false);
    pl->add_option("--metrics", o.metrics, "metrics.json from eval");
    pl->add_option("--diagnostics", o.diagnostics, "diagnostics.json from diagnose");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        if (synth->parsed()) return synth_data(o, out);
        if (tr->parsed()) return train(o, out);
        if (ev->parsed()) return eval(o, out);
        if (dg->parsed()) return diagnose_cmd(o, out);
        return plot_cmd(o, out);
    } catch (const std::exception& e) {
        err << "error: " << one_line(e.what()) << "\n";
        return 1;
    }
}

}  // namespace sgma::cli
