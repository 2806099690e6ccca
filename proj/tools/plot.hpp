#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace sgma::plot {

/// Vertical bars with value labels; values are drawn on a fixed [0, 1] axis when `unit_axis`.
std::string bar_chart(const std::string& title, const std::vector<std::pair<std::string, double>>& bars,
                      bool unit_axis);

/// One polygon per series over shared axes; axis ranges are scaled to the largest value.
std::string radar_chart(const std::string& title, const std::vector<std::string>& axes,
                        const std::vector<std::pair<std::string, std::vector<double>>>& series);

/// Grid of text cells; the first row is the header.
std::string table(const std::string& title, const std::vector<std::vector<std::string>>& rows);

/// Files written for a diagnostics report: robustness_scale<i>.svg and intra_class_variance.svg.
std::vector<std::pair<std::string, std::string>> diagnostics_figures(const nlohmann::json& report);

/// metrics_table.svg for a metrics report.
std::pair<std::string, std::string> metrics_figure(const nlohmann::json& report);

}  // namespace sgma::plot
