#include "cdupatch/report.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "cdupatch/errors.hpp"
#include "cdupatch/png_io.hpp"
#include "cdupatch/raster_plot.hpp"

namespace fs = std::filesystem;

namespace cdupatch {
namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::string format_report_table(const std::vector<ReportEntry>& entries) {
  std::string out = std::string(kReportHeader) + "\n";
  char buf[256];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, ",%s,%.4f,%d,%d,%.6f\n", to_string(e.report.modality).c_str(), e.report.threshold,
                  e.report.n_clean, e.report.n_patch, e.report.asr);
    out += e.variant + buf;
  }
  return out;
}

EmittedFiles emit_report(const std::vector<ReportEntry>& entries, const fs::path& out_dir, const std::string& stem,
                         const std::string& config_hash) {
  if (entries.empty()) throw ParameterError("no report entries to emit");
  ensure_dir(out_dir);
  EmittedFiles files;
  const std::string base = stem + "_" + config_hash;
  files.tables.push_back(out_dir / (base + ".csv"));
  write_text(files.tables.back(), format_report_table(entries));

  std::set<double> thresholds;
  for (const auto& e : entries) thresholds.insert(e.report.threshold);
  if (thresholds.size() > 1) {
    const std::array<std::pair<EvalModality, plot::Color>, 3> styles{{{EvalModality::kVisible, {0.1, 0.3, 0.9}},
                                                                      {EvalModality::kInfrared, {0.9, 0.2, 0.1}},
                                                                      {EvalModality::kFused, {0.1, 0.1, 0.1}}}};
    std::vector<plot::Series> series;
    double y_lo = 0.0;
    for (const auto& [m, color] : styles) {
      plot::Series s;
      s.color = color;
      for (const auto& e : entries) {
        if (e.report.modality != m) continue;
        s.x.push_back(e.report.threshold);
        s.y.push_back(e.report.asr);
        y_lo = std::min(y_lo, e.report.asr);
      }
      if (!s.x.empty()) series.push_back(std::move(s));
    }
    files.plots.push_back(out_dir / (base + "_curve.png"));
    write_png(plot::line_chart(series, *thresholds.begin(), *thresholds.rbegin(), y_lo, 1.0), files.plots.back());
  }
  return files;
}

EmittedFiles emit_transfer_report(const TransferMatrix& matrix, double threshold, const fs::path& out_dir,
                                  const std::string& config_hash) {
  if (matrix.victims.empty()) throw ParameterError("empty transfer matrix");
  std::vector<ReportEntry> entries;
  for (std::size_t r = 0; r < matrix.victims.size(); ++r)
    for (std::size_t c = 0; c < matrix.victims.size(); ++c)
      for (const auto& rep : matrix.reports.at(r).at(c))
        entries.push_back({matrix.victims[r] + "->" + matrix.victims[c], rep});
  for (auto& e : entries) e.report.threshold = threshold;
  EmittedFiles files = emit_report(entries, out_dir, "transfer", config_hash);
  files.plots.push_back(out_dir / ("transfer_" + config_hash + "_heatmap.png"));
  write_png(plot::heatmap(matrix.asr, 0.0, 1.0), files.plots.back());
  return files;
}

std::vector<ReportEntry> entries_from_sweep(const std::string& variant, const SweepResult& sweep) {
  std::vector<ReportEntry> entries;
  for (const auto& per_threshold : sweep.reports)
    for (const auto& rep : per_threshold) entries.push_back({variant, rep});
  return entries;
}

}  // namespace cdupatch
