#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "erpgan/metrics.hpp"
#include "erpgan/train.hpp"

namespace erpgan::report {

/// "subject,condition,auc,snr"
std::string metrics_csv(const metrics::MetricsReport& report);
/// "pair,t,df,p,stars"
std::string stats_csv(const metrics::MetricsReport& report);

/// Target grand averages at `channel`: per-subject target averages, then the
/// mean over subjects. Rows "time_ms,standing,walking,reconstructed", one per sample.
std::string grand_average_csv(const std::vector<train::SubjectEpochs>& data,
                              const std::vector<train::FoldResult>& folds, const std::string& channel = "Pz");

/// First `count` reconstructed epochs at `channel` across folds, next to
/// their walking inputs: "time_ms,<subject>_<trial>_walking,<subject>_<trial>_reconstructed,...".
std::string gallery_csv(const std::vector<train::SubjectEpochs>& data, const std::vector<train::FoldResult>& folds,
                        std::size_t count = 8, const std::string& channel = "Pz");

/// Writes metrics.csv, stats.csv, grand_average.csv, gallery.csv and
/// loss_curves_<subject>.csv into `dir`.
void emit_report(const metrics::MetricsReport& report, const std::vector<train::SubjectEpochs>& data,
                 const std::vector<train::FoldResult>& folds, const std::filesystem::path& dir);

/// Reads the CSVs of a bundle and writes grand_average.svg, gallery.svg and
/// metrics.svg next to them.
void render_plots(const std::filesystem::path& dir);

struct Series {
  std::string name;
  std::vector<double> y;
};

/// Line plot over shared x values with a dashed marker at x = `marker` (if finite).
std::string line_plot_svg(const std::string& title, const std::vector<double>& x, const std::vector<Series>& series,
                          double marker, const std::string& x_label, const std::string& y_label);

/// Grouped bar chart: one group per label, one bar per series entry.
std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& groups,
                          const std::vector<Series>& series, const std::vector<double>& errors);

}  // namespace erpgan::report
