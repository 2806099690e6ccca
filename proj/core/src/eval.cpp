#include "sgma/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "sgma/error.hpp"

namespace sgma {

using nlohmann::json;

std::vector<std::vector<std::string>> enumerate_subsets(const std::vector<std::string>& modalities) {
    if (modalities.empty()) throw UsageError("enumerate_subsets: empty modality list");
    const size_t n = modalities.size();
    if (n > 20) throw UsageError("enumerate_subsets: too many modalities");
    std::vector<std::vector<size_t>> index_sets;
    for (uint32_t mask = 1; mask < (1u << n); ++mask) {
        std::vector<size_t> idx;
        for (size_t i = 0; i < n; ++i)
            if (mask & (1u << i)) idx.push_back(i);
        index_sets.push_back(idx);
    }
    std::stable_sort(index_sets.begin(), index_sets.end(), [](const auto& a, const auto& b) {
        if (a.size() != b.size()) return a.size() < b.size();
        return a < b;
    });
    std::vector<std::vector<std::string>> out;
    for (const auto& idx : index_sets) {
        std::vector<std::string> s;
        for (size_t i : idx) s.push_back(modalities[i]);
        out.push_back(s);
    }
    return out;
}

std::string subset_name(const std::vector<std::string>& subset) {
    const bool short_ids = std::all_of(subset.begin(), subset.end(), [](const std::string& s) { return s.size() == 1; });
    std::string out;
    for (size_t i = 0; i < subset.size(); ++i) {
        if (i > 0 && !short_ids) out += "+";
        out += subset[i];
    }
    return out;
}

int64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), int64_t{0}); }

void ConfusionMatrix::add(const ConfusionMatrix& other) {
    if (other.num_classes != num_classes) throw ShapeError("confusion matrices differ in class count");
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

ConfusionMatrix confusion(const std::vector<int32_t>& pred, const std::vector<int32_t>& gt, int num_classes,
                          int32_t ignore_index) {
    if (pred.size() != gt.size())
        throw ShapeError("confusion: prediction has " + std::to_string(pred.size()) + " pixels, ground truth " +
                         std::to_string(gt.size()));
    ConfusionMatrix cm(num_classes);
    for (size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] == ignore_index) continue;
        if (gt[i] < 0 || gt[i] >= num_classes || pred[i] < 0 || pred[i] >= num_classes)
            throw ValidationError("confusion: class id out of range");
        ++cm.at(gt[i], pred[i]);
    }
    return cm;
}

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int num_classes, int32_t ignore_index) {
    if (pred.height != gt.height || pred.width != gt.width) throw ShapeError("confusion: label map sizes differ");
    return confusion(pred.ids, gt.ids, num_classes, ignore_index);
}

namespace {

struct ClassCounts {
    int64_t tp, fp, fn;
};

ClassCounts class_counts(const ConfusionMatrix& cm, int k) {
    ClassCounts c{cm.at(k, k), 0, 0};
    for (int j = 0; j < cm.num_classes; ++j) {
        if (j == k) continue;
        c.fp += cm.at(j, k);
        c.fn += cm.at(k, j);
    }
    return c;
}

double mean_present(const std::vector<std::optional<double>>& xs, const char* what) {
    double sum = 0.0;
    int n = 0;
    for (const auto& x : xs)
        if (x) {
            sum += *x;
            ++n;
        }
    if (n == 0) throw ValidationError(std::string(what) + ": no class present in prediction or ground truth");
    return sum / n;
}

}  // namespace

std::vector<std::optional<double>> class_iou(const ConfusionMatrix& cm) {
    std::vector<std::optional<double>> out;
    for (int k = 0; k < cm.num_classes; ++k) {
        const ClassCounts c = class_counts(cm, k);
        const int64_t denom = c.tp + c.fp + c.fn;
        out.push_back(denom == 0 ? std::nullopt
                                 : std::optional<double>(static_cast<double>(c.tp) / static_cast<double>(denom)));
    }
    return out;
}

std::vector<std::optional<double>> class_f1(const ConfusionMatrix& cm) {
    std::vector<std::optional<double>> out;
    for (int k = 0; k < cm.num_classes; ++k) {
        const ClassCounts c = class_counts(cm, k);
        const int64_t denom = 2 * c.tp + c.fp + c.fn;
        out.push_back(denom == 0 ? std::nullopt
                                 : std::optional<double>(2.0 * static_cast<double>(c.tp) / static_cast<double>(denom)));
    }
    return out;
}

double miou(const ConfusionMatrix& cm) { return mean_present(class_iou(cm), "miou"); }
double f1(const ConfusionMatrix& cm) { return mean_present(class_f1(cm), "f1"); }

Aggregate aggregate(const std::vector<double>& values) {
    if (values.empty()) throw UsageError("aggregate: empty list");
    Aggregate a;
    a.average = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    a.top1 = *std::max_element(values.begin(), values.end());
    a.last1 = *std::min_element(values.begin(), values.end());
    return a;
}

json MetricsReport::to_json() const {
    json subs = json::array();
    for (const SubsetMetrics& s : subsets) {
        json cm = json::array();
        for (int g = 0; g < s.confusion.num_classes; ++g) {
            json row = json::array();
            for (int p = 0; p < s.confusion.num_classes; ++p) row.push_back(s.confusion.at(g, p));
            cm.push_back(row);
        }
        subs.push_back({{"subset", subset_name(s.modalities)},
                        {"modalities", s.modalities},
                        {"miou", s.miou},
                        {"f1", s.f1},
                        {"confusion", cm}});
    }
    auto agg = [](const Aggregate& a) { return json{{"average", a.average}, {"top1", a.top1}, {"last1", a.last1}}; };
    return json{{"modalities", modalities},
                {"class_names", class_names},
                {"subsets", subs},
                {"aggregates", {{"miou", agg(miou)}, {"f1", agg(f1)}}}};
}

MetricsReport MetricsReport::from_json(const json& j) {
    MetricsReport r;
    r.modalities = j.at("modalities").get<std::vector<std::string>>();
    r.class_names = j.value("class_names", std::vector<std::string>{});
    for (const json& s : j.at("subsets")) {
        SubsetMetrics m;
        m.modalities = s.at("modalities").get<std::vector<std::string>>();
        m.miou = s.at("miou").get<double>();
        m.f1 = s.at("f1").get<double>();
        if (s.contains("confusion")) {
            const auto rows = s.at("confusion").get<std::vector<std::vector<int64_t>>>();
            m.confusion = ConfusionMatrix(static_cast<int>(rows.size()));
            for (size_t g = 0; g < rows.size(); ++g)
                for (size_t p = 0; p < rows[g].size(); ++p)
                    m.confusion.at(static_cast<int>(g), static_cast<int>(p)) = rows[g][p];
        }
        r.subsets.push_back(std::move(m));
    }
    auto agg = [](const json& a) {
        return Aggregate{a.at("average").get<double>(), a.at("top1").get<double>(), a.at("last1").get<double>()};
    };
    r.miou = agg(j.at("aggregates").at("miou"));
    r.f1 = agg(j.at("aggregates").at("f1"));
    return r;
}

std::string MetricsReport::table() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "| Metric |";
    for (const auto& s : subsets) os << ' ' << subset_name(s.modalities) << " |";
    os << " Average | Top-1 | Last-1 |\n|---|";
    for (size_t i = 0; i < subsets.size() + 3; ++i) os << "---|";
    os << '\n';
    auto row = [&](const char* name, auto get, const Aggregate& a) {
        os << "| " << name << " |";
        for (const auto& s : subsets) os << ' ' << 100.0 * get(s) << " |";
        os << ' ' << 100.0 * a.average << " | " << 100.0 * a.top1 << " | " << 100.0 * a.last1 << " |\n";
    };
    row("mIoU", [](const SubsetMetrics& s) { return s.miou; }, miou);
    row("F1", [](const SubsetMetrics& s) { return s.f1; }, f1);
    return os.str();
}

MetricsReport evaluate(const Model& model, const std::vector<ModalityBundle>& bundles, int num_classes,
                       int32_t ignore_index, const std::vector<std::vector<std::string>>& subsets, int batch_size) {
    if (bundles.empty()) throw UsageError("evaluate: no samples");
    if (batch_size < 1) throw UsageError("evaluate: batch size must be positive");
    MetricsReport report;
    report.modalities = model.modalities();
    const auto subs = subsets.empty() ? enumerate_subsets(model.modalities()) : subsets;
    std::vector<double> mious, f1s;
    for (const auto& subset : subs) {
        SubsetMetrics sm;
        sm.modalities = subset;
        sm.confusion = ConfusionMatrix(num_classes);
        for (size_t start = 0; start < bundles.size(); start += static_cast<size_t>(batch_size)) {
            std::vector<const ModalityBundle*> batch;
            for (size_t i = start; i < std::min(bundles.size(), start + static_cast<size_t>(batch_size)); ++i)
                batch.push_back(&bundles[i]);
            const auto preds = model.infer(batch, subset);
            for (size_t b = 0; b < batch.size(); ++b) {
                if (!batch[b]->labels) throw UsageError("evaluate: sample '" + batch[b]->sample_id + "' has no labels");
                sm.confusion.add(confusion(preds[b], *batch[b]->labels, num_classes, ignore_index));
            }
        }
        sm.miou = miou(sm.confusion);
        sm.f1 = f1(sm.confusion);
        mious.push_back(sm.miou);
        f1s.push_back(sm.f1);
        report.subsets.push_back(std::move(sm));
    }
    report.miou = aggregate(mious);
    report.f1 = aggregate(f1s);
    return report;
}

std::vector<int32_t> downsample_labels(const LabelMap& labels, int64_t h, int64_t w) {
    if (h <= 0 || w <= 0 || labels.height % h != 0 || labels.width % w != 0)
        throw ShapeError("downsample_labels: target size must divide the label size");
    const int64_t sy = labels.height / h, sx = labels.width / w;
    std::vector<int32_t> out(static_cast<size_t>(h * w));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) out[static_cast<size_t>(y * w + x)] = labels.at(y * sy, x * sx);
    return out;
}

Tensor standardize(const Tensor& features) {
    const int64_t n = features.numel();
    if (n < 2) return features;
    double mean = 0.0;
    for (int64_t i = 0; i < n; ++i) mean += features[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t i = 0; i < n; ++i) var += (features[i] - mean) * (features[i] - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    Tensor out = features;
    if (sd > 0.0) out.scale_(1.0 / sd);
    return out;
}

std::vector<std::optional<double>> intra_class_variance(const Tensor& features, const std::vector<int32_t>& labels,
                                                        int num_classes, int32_t ignore_index) {
    if (features.rank() != 3) throw ShapeError("intra_class_variance: features must be [H, W, C]");
    const int64_t np = features.dim(0) * features.dim(1), c = features.dim(2);
    if (static_cast<int64_t>(labels.size()) != np) throw ShapeError("intra_class_variance: label count mismatch");
    std::vector<std::vector<double>> mean(static_cast<size_t>(num_classes), std::vector<double>(static_cast<size_t>(c), 0.0));
    std::vector<int64_t> count(static_cast<size_t>(num_classes), 0);
    for (int64_t p = 0; p < np; ++p) {
        const int32_t k = labels[static_cast<size_t>(p)];
        if (k == ignore_index || k < 0 || k >= num_classes) continue;
        ++count[static_cast<size_t>(k)];
        for (int64_t j = 0; j < c; ++j) mean[static_cast<size_t>(k)][static_cast<size_t>(j)] += features[p * c + j];
    }
    for (int k = 0; k < num_classes; ++k)
        if (count[static_cast<size_t>(k)] > 0)
            for (double& v : mean[static_cast<size_t>(k)]) v /= static_cast<double>(count[static_cast<size_t>(k)]);
    std::vector<double> ss(static_cast<size_t>(num_classes), 0.0);
    for (int64_t p = 0; p < np; ++p) {
        const int32_t k = labels[static_cast<size_t>(p)];
        if (k == ignore_index || k < 0 || k >= num_classes) continue;
        for (int64_t j = 0; j < c; ++j) {
            const double d = features[p * c + j] - mean[static_cast<size_t>(k)][static_cast<size_t>(j)];
            ss[static_cast<size_t>(k)] += d * d;
        }
    }
    std::vector<std::optional<double>> out;
    for (int k = 0; k < num_classes; ++k) {
        const int64_t n = count[static_cast<size_t>(k)];
        out.push_back(n < 2 ? std::nullopt : std::optional<double>(ss[static_cast<size_t>(k)] / static_cast<double>(n - 1)));
    }
    return out;
}

std::vector<double> robustness_report(const std::vector<Tensor>& maps) {
    if (maps.empty()) throw UsageError("robustness_report: no maps");
    const int64_t nm = maps[0].dim(0);
    std::vector<double> sum(static_cast<size_t>(nm), 0.0);
    double pixels = 0.0;
    for (const Tensor& r : maps) {
        if (r.rank() != 3 || r.dim(0) != nm) throw ShapeError("robustness_report: maps must be [M, H, W] with equal M");
        const int64_t np = r.dim(1) * r.dim(2);
        for (int64_t m = 0; m < nm; ++m)
            for (int64_t p = 0; p < np; ++p) sum[static_cast<size_t>(m)] += r[m * np + p];
        pixels += static_cast<double>(np);
    }
    for (double& s : sum) s /= pixels;
    return sum;
}

double silhouette(const std::vector<std::vector<double>>& points, const std::vector<int>& labels) {
    if (points.size() != labels.size()) throw ShapeError("silhouette: point/label count mismatch");
    const size_t n = points.size();
    auto dist = [&](size_t a, size_t b) {
        double s = 0.0;
        for (size_t j = 0; j < points[a].size(); ++j) s += (points[a][j] - points[b][j]) * (points[a][j] - points[b][j]);
        return std::sqrt(s);
    };
    std::vector<int> ids(labels);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 2) throw ValidationError("silhouette: need at least two clusters");
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        std::vector<double> sum(ids.size(), 0.0);
        std::vector<int64_t> cnt(ids.size(), 0);
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto c = static_cast<size_t>(std::lower_bound(ids.begin(), ids.end(), labels[j]) - ids.begin());
            sum[c] += dist(i, j);
            ++cnt[c];
        }
        const auto own = static_cast<size_t>(std::lower_bound(ids.begin(), ids.end(), labels[i]) - ids.begin());
        if (cnt[own] == 0) continue;  // singleton cluster scores 0
        const double a = sum[own] / static_cast<double>(cnt[own]);
        double b = std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < ids.size(); ++c)
            if (c != own && cnt[c] > 0) b = std::min(b, sum[c] / static_cast<double>(cnt[c]));
        const double d = std::max(a, b);
        total += d > 0.0 ? (b - a) / d : 0.0;
    }
    return total / static_cast<double>(n);
}

const ComponentCost& ComplexityReport::component(const std::string& name) const {
    for (const auto& c : components)
        if (c.name == name) return c;
    throw UsageError("complexity report has no component '" + name + "'");
}

double ComplexityReport::flops(const std::vector<std::string>& names) const {
    double s = 0.0;
    for (const auto& n : names) s += component(n).flops;
    return s;
}

int64_t ComplexityReport::params(const std::vector<std::string>& names) const {
    int64_t s = 0;
    for (const auto& n : names) s += component(n).params;
    return s;
}

json ComplexityReport::to_json() const {
    json comps = json::array();
    for (const auto& c : components) comps.push_back({{"name", c.name}, {"params", c.params}, {"flops", c.flops}});
    const auto sgf = sgf_components();
    return json{{"height", height},
                {"width", width},
                {"num_modalities", num_modalities},
                {"num_classes", num_classes},
                {"components", comps},
                {"totals",
                 {{"encoder", {{"params", component("encoder").params}, {"flops", component("encoder").flops}}},
                  {"sgf", {{"params", params(sgf)}, {"flops", flops(sgf)}}},
                  {"mas", {{"params", component("mas").params}, {"flops", component("mas").flops}}},
                  {"head", {{"params", component("head").params}, {"flops", component("head").flops}}}}}};
}

std::vector<std::string> sgf_components() {
    return {"sgf.mp",       "sgf.csf",      "sgf.prototypes", "sgf.sp.query",     "sgf.sp.kv",    "sgf.sp.attention",
            "sgf.sp.output", "sgf.rp.query", "sgf.rp.kv",      "sgf.rp.attention", "sgf.rp.output"};
}

std::vector<std::string> sgf_modality_path() {
    return {"sgf.mp", "sgf.csf", "sgf.prototypes", "sgf.sp.kv", "sgf.sp.attention", "sgf.rp.kv", "sgf.rp.attention"};
}

std::vector<std::string> sgf_class_path() { return {"sgf.csf", "sgf.prototypes", "sgf.sp.query", "sgf.sp.attention"}; }

ComplexityReport complexity_report(const Config& config, int64_t height, int64_t width, int num_modalities) {
    if (height % 32 != 0 || width % 32 != 0) throw ShapeError("complexity_report: input size must be divisible by 32");
    if (num_modalities < 1) throw UsageError("complexity_report: need at least one modality");
    const ModelConfig& mc = config.model;
    const double m = num_modalities;
    const double k = mc.num_classes;
    const int64_t ki = mc.num_classes;
    ComplexityReport r;
    r.height = height;
    r.width = width;
    r.num_modalities = num_modalities;
    r.num_classes = mc.num_classes;
    for (const auto& n : sgf_components()) r.components.push_back({n, 0, 0.0});
    ComponentCost enc{"encoder", 0, 0.0}, head{"head", 0, 0.0}, mas{"mas", 0, 0.0};
    auto add = [&](const std::string& name, int64_t p, double f) {
        for (auto& c : r.components)
            if (c.name == name) {
                c.params += p;
                c.flops += f;
            }
    };
    const int64_t e = mc.head.embed_width;
    int64_t cin = kEncoderInputChannels, h = height, w = width;
    for (int i = 0; i < kNumScales; ++i) {
        const int64_t c = mc.encoder.stage_channels[static_cast<size_t>(i)];
        const int64_t s = kStageStrides[static_cast<size_t>(i)];
        h /= s;
        w /= s;
        const double p = static_cast<double>(h * w);
        const double cd = static_cast<double>(c);
        // encoder stage, applied once per modality
        enc.params += s * s * cin * c + c + mc.encoder.blocks_per_stage * (9 * c * c + c + 2 * c) + 2 * c;
        enc.flops += m * (2.0 * static_cast<double>(s * s * cin) * cd * p +
                          mc.encoder.blocks_per_stage * 2.0 * 9.0 * cd * cd * p);
        cin = c;
        // fusion block
        int64_t mp_params = c * c + c;
        double mp_flops = 2.0 * cd * cd * p;
        for (int kk : mc.mp_kernels) {
            mp_params += kk * kk * c + c;
            mp_flops += 2.0 * kk * kk * cd * p;
        }
        add("sgf.mp", num_modalities * mp_params, m * mp_flops);
        const double csf = 2.0 * cd * k * p, proto = 2.0 * k * cd * p;
        const double sp_q = 2.0 * k * cd * cd, sp_attn = 4.0 * k * cd * p, sp_out = 2.0 * cd * cd * p;
        const double rp_q = 2.0 * cd * cd * p, rp_attn = 4.0 * cd * p, rp_out = 2.0 * cd * cd * p;
        const double kv = 4.0 * cd * cd * p;
        add("sgf.csf", c * ki + ki, m * csf);
        add("sgf.prototypes", 0, m * proto);
        add("sgf.sp.query", c * c + c, sp_q);
        add("sgf.sp.kv", 2 * (c * c + c), m * kv);
        add("sgf.sp.attention", 0, m * sp_attn);
        add("sgf.sp.output", c * c + c, sp_out);
        add("sgf.rp.query", c * c + c, rp_q);
        add("sgf.rp.kv", 2 * (c * c + c), m * kv);
        add("sgf.rp.attention", 0, m * rp_attn);
        add("sgf.rp.output", c * c + c, rp_out);
        // singleton chain reusing the fusion parameters
        mas.flops += csf + proto + sp_q + sp_attn + sp_out + rp_q + rp_attn + rp_out + 2.0 * kv;
        // head projection at this scale
        head.params += c * e + e;
        head.flops += 2.0 * cd * static_cast<double>(e) * p;
    }
    const double p0 = static_cast<double>((height / 4) * (width / 4));
    head.params += kNumScales * e * e + e + e * ki + ki;
    head.flops += 2.0 * kNumScales * static_cast<double>(e * e) * p0 + 2.0 * static_cast<double>(e) * k * p0;
    r.components.push_back(enc);
    r.components.push_back(mas);
    r.components.push_back(head);
    return r;
}

json DiagnosticsReport::to_json() const {
    json icv = json::array();
    for (const auto& scale : intra_class_variance) {
        json row = json::object();
        for (size_t k = 0; k < scale.size(); ++k) {
            const std::string name = k < class_names.size() ? class_names[k] : "class" + std::to_string(k);
            if (scale[k]) row[name] = *scale[k];
        }
        icv.push_back(row);
    }
    auto per_modality = [&](const std::vector<std::vector<double>>& xs) {
        json out = json::array();
        for (const auto& scale : xs) {
            json row = json::object();
            for (size_t m = 0; m < scale.size() && m < modalities.size(); ++m) row[modalities[m]] = scale[m];
            out.push_back(row);
        }
        return out;
    };
    json j{{"modalities", modalities},
           {"class_names", class_names},
           {"intra_class_variance",
            {{"estimator", "sum of squared distances to the class mean over (n - 1), per sample, features divided "
                           "by their global standard deviation; averaged over samples containing the class"},
             {"scales", icv}}},
           {"robustness", per_modality(robustness)},
           {"complexity", complexity.to_json()}};
    if (!silhouette.empty()) j["silhouette"] = per_modality(silhouette);
    return j;
}

DiagnosticsReport diagnose(const Model& model, const std::vector<ModalityBundle>& bundles,
                           const std::vector<std::string>& class_names, int32_t ignore_index) {
    if (bundles.empty()) throw UsageError("diagnose: no samples");
    NoGradGuard guard;
    const Config& cfg = model.config();
    const int nk = cfg.model.num_classes;
    const auto& mods = model.modalities();
    const size_t nm = mods.size();
    DiagnosticsReport rep;
    rep.modalities = mods;
    rep.class_names = class_names;
    std::vector<std::vector<double>> icv_sum(kNumScales, std::vector<double>(static_cast<size_t>(nk), 0.0));
    std::vector<std::vector<int>> icv_n(kNumScales, std::vector<int>(static_cast<size_t>(nk), 0));
    std::vector<std::vector<Tensor>> rmaps(kNumScales);
    // silhouette points per [scale][modality]
    std::vector<std::vector<std::vector<std::vector<double>>>> pts(
        kNumScales, std::vector<std::vector<std::vector<double>>>(nm));
    std::vector<std::vector<std::vector<int>>> pts_lab(kNumScales, std::vector<std::vector<int>>(nm));

    const auto bs = static_cast<size_t>(cfg.eval.batch_size);
    for (size_t start = 0; start < bundles.size(); start += bs) {
        std::vector<const ModalityBundle*> batch;
        for (size_t i = start; i < std::min(bundles.size(), start + bs); ++i) batch.push_back(&bundles[i]);
        const FeaturePyramid pyr = extract_features(model.encoder(), batch, mods);
        const FusionOutput fo = model.fuse(pyr, mods);
        for (int s = 0; s < kNumScales; ++s) {
            const Tensor& f = fo.fused[static_cast<size_t>(s)].value();
            const int64_t h = f.dim(1), w = f.dim(2), c = f.dim(3), per = h * w * c;
            for (size_t b = 0; b < batch.size(); ++b) {
                if (!batch[b]->labels) throw UsageError("diagnose: sample '" + batch[b]->sample_id + "' has no labels");
                const auto lab = downsample_labels(*batch[b]->labels, h, w);
                Tensor fb({h, w, c});
                std::copy_n(f.data() + static_cast<int64_t>(b) * per, per, fb.data());
                const auto v = intra_class_variance(standardize(fb), lab, nk, ignore_index);
                for (int k = 0; k < nk; ++k)
                    if (v[static_cast<size_t>(k)]) {
                        icv_sum[static_cast<size_t>(s)][static_cast<size_t>(k)] += *v[static_cast<size_t>(k)];
                        ++icv_n[static_cast<size_t>(s)][static_cast<size_t>(k)];
                    }
                if (fo.sgf) rmaps[static_cast<size_t>(s)].push_back(fo.sgf->robustness(s, static_cast<int64_t>(b)));
                if (cfg.eval.silhouette) {
                    for (size_t m = 0; m < nm; ++m) {
                        const Tensor& src = fo.sgf ? fo.sgf->semantics[static_cast<size_t>(s)][m].value()
                                                   : pyr.features[m][static_cast<size_t>(s)].value();
                        std::vector<std::vector<double>> sum(static_cast<size_t>(nk), std::vector<double>(static_cast<size_t>(c), 0.0));
                        std::vector<int64_t> cnt(static_cast<size_t>(nk), 0);
                        for (int64_t p = 0; p < h * w; ++p) {
                            const int32_t k = lab[static_cast<size_t>(p)];
                            if (k < 0 || k >= nk) continue;
                            ++cnt[static_cast<size_t>(k)];
                            for (int64_t j = 0; j < c; ++j)
                                sum[static_cast<size_t>(k)][static_cast<size_t>(j)] +=
                                    src[static_cast<int64_t>(b) * per + p * c + j];
                        }
                        for (int k = 0; k < nk; ++k) {
                            if (cnt[static_cast<size_t>(k)] == 0) continue;
                            for (double& x : sum[static_cast<size_t>(k)]) x /= static_cast<double>(cnt[static_cast<size_t>(k)]);
                            pts[static_cast<size_t>(s)][m].push_back(sum[static_cast<size_t>(k)]);
                            pts_lab[static_cast<size_t>(s)][m].push_back(k);
                        }
                    }
                }
            }
        }
    }
    for (int s = 0; s < kNumScales; ++s) {
        std::vector<std::optional<double>> row;
        for (int k = 0; k < nk; ++k) {
            const int n = icv_n[static_cast<size_t>(s)][static_cast<size_t>(k)];
            row.push_back(n == 0 ? std::nullopt : std::optional<double>(icv_sum[static_cast<size_t>(s)][static_cast<size_t>(k)] / n));
        }
        rep.intra_class_variance.push_back(row);
        if (!rmaps[static_cast<size_t>(s)].empty()) rep.robustness.push_back(robustness_report(rmaps[static_cast<size_t>(s)]));
    }
    rep.complexity = complexity_report(cfg, bundles[0].height(), bundles[0].width(), static_cast<int>(nm));
    if (cfg.eval.silhouette) {
        RngStream rng("silhouette", cfg.seed.data);
        for (int s = 0; s < kNumScales; ++s) {
            std::vector<double> row;
            for (size_t m = 0; m < nm; ++m) {
                auto& P = pts[static_cast<size_t>(s)][m];
                auto& L = pts_lab[static_cast<size_t>(s)][m];
                const auto cap = static_cast<size_t>(cfg.eval.silhouette_cap);
                if (P.size() > cap) {
                    std::vector<size_t> idx(P.size());
                    std::iota(idx.begin(), idx.end(), size_t{0});
                    for (size_t i = 0; i < cap; ++i)
                        std::swap(idx[i], idx[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i), static_cast<int64_t>(idx.size()) - 1))]);
                    idx.resize(cap);
                    std::sort(idx.begin(), idx.end());
                    std::vector<std::vector<double>> p2;
                    std::vector<int> l2;
                    for (size_t i : idx) {
                        p2.push_back(P[i]);
                        l2.push_back(L[i]);
                    }
                    P = std::move(p2);
                    L = std::move(l2);
                }
                row.push_back(silhouette(P, L));
            }
            rep.silhouette.push_back(row);
        }
    }
    return rep;
}

}  // namespace sgma
