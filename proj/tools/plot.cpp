#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "sgma/error.hpp"

namespace sgma::plot {

namespace {

const char* const kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};

std::string fmt(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string header(int w, int h, const std::string& title) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
           std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) +
           "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           "<text x=\"" + std::to_string(w / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
           escape(title) + "</text>\n";
}

std::string text(double x, double y, const std::string& s, const char* anchor = "middle") {
    return "<text x=\"" + fmt(x, 1) + "\" y=\"" + fmt(y, 1) + "\" text-anchor=\"" + anchor + "\">" + escape(s) +
           "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2, const char* stroke = "#999") {
    return "<line x1=\"" + fmt(x1, 1) + "\" y1=\"" + fmt(y1, 1) + "\" x2=\"" + fmt(x2, 1) + "\" y2=\"" + fmt(y2, 1) +
           "\" stroke=\"" + stroke + "\"/>\n";
}

}  // namespace

std::string bar_chart(const std::string& title, const std::vector<std::pair<std::string, double>>& bars,
                      bool unit_axis) {
    const int bar_w = 60, gap = 30, left = 50, top = 40, plot_h = 200;
    const int w = left + static_cast<int>(bars.size()) * (bar_w + gap) + gap;
    const int h = top + plot_h + 40;
    double vmax = unit_axis ? 1.0 : 0.0;
    for (const auto& b : bars) vmax = std::max(vmax, b.second);
    if (vmax <= 0.0) vmax = 1.0;
    std::string s = header(w, h, title);
    const double base = top + plot_h;
    s += line(left, base, w - gap / 2.0, base, "#333");
    s += line(left, top, left, base, "#333");
    for (int t = 0; t <= 4; ++t) {
        const double v = vmax * t / 4.0, y = base - plot_h * t / 4.0;
        s += line(left - 4, y, left, y, "#333");
        s += text(left - 6, y + 4, fmt(v), "end");
    }
    for (size_t i = 0; i < bars.size(); ++i) {
        const double x = left + gap + static_cast<double>(i) * (bar_w + gap);
        const double bh = plot_h * std::clamp(bars[i].second / vmax, 0.0, 1.0);
        s += "<rect x=\"" + fmt(x, 1) + "\" y=\"" + fmt(base - bh, 1) + "\" width=\"" + std::to_string(bar_w) +
             "\" height=\"" + fmt(bh, 1) + "\" fill=\"" + kPalette[i % std::size(kPalette)] + "\"/>\n";
        s += text(x + bar_w / 2.0, base - bh - 4, fmt(bars[i].second, 3));
        s += text(x + bar_w / 2.0, base + 16, bars[i].first);
    }
    return s + "</svg>\n";
}

std::string radar_chart(const std::string& title, const std::vector<std::string>& axes,
                        const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    const int w = 420, h = 420;
    const double cx = w / 2.0, cy = h / 2.0 + 10, radius = 140;
    double vmax = 0.0;
    for (const auto& sr : series)
        for (double v : sr.second) vmax = std::max(vmax, v);
    if (vmax <= 0.0) vmax = 1.0;
    const size_t n = axes.size();
    auto point = [&](size_t i, double frac) {
        const double a = -std::numbers::pi / 2 + 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
        return std::pair<double, double>{cx + frac * radius * std::cos(a), cy + frac * radius * std::sin(a)};
    };
    std::string s = header(w, h, title);
    for (int ring = 1; ring <= 4; ++ring) {
        std::string pts;
        for (size_t i = 0; i < n; ++i) {
            auto [x, y] = point(i, ring / 4.0);
            pts += fmt(x, 1) + "," + fmt(y, 1) + " ";
        }
        s += "<polygon points=\"" + pts + "\" fill=\"none\" stroke=\"#ddd\"/>\n";
    }
    for (size_t i = 0; i < n; ++i) {
        auto [x, y] = point(i, 1.0);
        s += line(cx, cy, x, y, "#ccc");
        auto [lx, ly] = point(i, 1.15);
        s += text(lx, ly + 4, axes[i]);
    }
    s += text(cx + 4, cy - radius - 4, "max " + fmt(vmax, 3), "start");
    for (size_t k = 0; k < series.size(); ++k) {
        const char* color = kPalette[k % std::size(kPalette)];
        std::string pts;
        for (size_t i = 0; i < n; ++i) {
            const double v = i < series[k].second.size() ? series[k].second[i] : 0.0;
            auto [x, y] = point(i, std::clamp(v / vmax, 0.0, 1.0));
            pts += fmt(x, 1) + "," + fmt(y, 1) + " ";
        }
        s += std::string("<polygon points=\"") + pts + "\" fill=\"" + color + "\" fill-opacity=\"0.15\" stroke=\"" +
             color + "\" stroke-width=\"2\"/>\n";
        const double ly = 40 + 16.0 * static_cast<double>(k);
        s += std::string("<rect x=\"10\" y=\"") + fmt(ly - 10, 1) + "\" width=\"12\" height=\"12\" fill=\"" + color +
             "\"/>\n";
        s += text(28, ly, series[k].first, "start");
    }
    return s + "</svg>\n";
}

std::string table(const std::string& title, const std::vector<std::vector<std::string>>& rows) {
    if (rows.empty()) throw UsageError("table: no rows");
    size_t cols = 0;
    for (const auto& r : rows) cols = std::max(cols, r.size());
    const int cell_w = 72, cell_h = 24, left = 10, top = 40;
    const int w = left * 2 + static_cast<int>(cols) * cell_w;
    const int h = top + static_cast<int>(rows.size()) * cell_h + 10;
    std::string s = header(w, h, title);
    for (size_t r = 0; r < rows.size(); ++r) {
        const double y = top + static_cast<double>(r) * cell_h;
        if (r == 0)
            s += "<rect x=\"" + std::to_string(left) + "\" y=\"" + fmt(y, 1) + "\" width=\"" +
                 std::to_string(w - 2 * left) + "\" height=\"" + std::to_string(cell_h) + "\" fill=\"#eee\"/>\n";
        for (size_t c = 0; c < rows[r].size(); ++c)
            s += text(left + (static_cast<double>(c) + 0.5) * cell_w, y + 16, rows[r][c]);
        s += line(left, y + cell_h, w - left, y + cell_h, "#bbb");
    }
    return s + "</svg>\n";
}

std::vector<std::pair<std::string, std::string>> diagnostics_figures(const nlohmann::json& report) {
    std::vector<std::pair<std::string, std::string>> out;
    const auto modalities = report.at("modalities").get<std::vector<std::string>>();
    const auto& robustness = report.at("robustness");
    for (size_t i = 0; i < robustness.size(); ++i) {
        std::vector<std::pair<std::string, double>> bars;
        for (const std::string& m : modalities)
            if (robustness[i].contains(m)) bars.emplace_back(m, robustness[i][m].get<double>());
        out.emplace_back("robustness_scale" + std::to_string(i) + ".svg",
                         bar_chart("Mean robustness, scale " + std::to_string(i), bars, true));
    }
    const auto classes = report.at("class_names").get<std::vector<std::string>>();
    std::vector<std::pair<std::string, std::vector<double>>> series;
    const auto& scales = report.at("intra_class_variance").at("scales");
    for (size_t i = 0; i < scales.size(); ++i) {
        std::vector<double> values;
        for (const std::string& c : classes) values.push_back(scales[i].value(c, 0.0));
        series.emplace_back("scale " + std::to_string(i), values);
    }
    out.emplace_back("intra_class_variance.svg", radar_chart("Intra-class variance", classes, series));
    return out;
}

std::pair<std::string, std::string> metrics_figure(const nlohmann::json& report) {
    std::vector<std::vector<std::string>> rows{{"Metric"}};
    std::vector<std::string> miou{"mIoU"}, f1{"F1"};
    for (const auto& s : report.at("subsets")) {
        rows[0].push_back(s.at("subset").get<std::string>());
        miou.push_back(fmt(100.0 * s.at("miou").get<double>()));
        f1.push_back(fmt(100.0 * s.at("f1").get<double>()));
    }
    const auto& agg = report.at("aggregates");
    for (const char* key : {"average", "top1", "last1"}) {
        miou.push_back(fmt(100.0 * agg.at("miou").at(key).get<double>()));
        f1.push_back(fmt(100.0 * agg.at("f1").at(key).get<double>()));
    }
    rows[0].insert(rows[0].end(), {"Average", "Top-1", "Last-1"});
    rows.push_back(miou);
    rows.push_back(f1);
    return {"metrics_table.svg", table("Per-subset metrics (%)", rows)};
}

}  // namespace sgma::plot
