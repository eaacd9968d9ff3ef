#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cdupatch/eval_harness.hpp"

namespace cdupatch {

struct ReportEntry {
  std::string variant;
  AsrReport report;
};

inline constexpr const char* kReportHeader = "variant,modality,threshold,n_clean,n_patch,asr";

/// CSV text for entries, header first, fixed number formatting.
std::string format_report_table(const std::vector<ReportEntry>& entries);

struct EmittedFiles {
  std::vector<std::filesystem::path> tables;
  std::vector<std::filesystem::path> plots;
};

/// Writes <stem>_<hash>.csv and, when entries span more than one threshold, an
/// ASR-vs-threshold curve <stem>_<hash>_curve.png. Throws ParameterError (writing nothing)
/// for empty entries and IoError on filesystem failures.
EmittedFiles emit_report(const std::vector<ReportEntry>& entries, const std::filesystem::path& out_dir,
                         const std::string& stem, const std::string& config_hash);

/// Writes the transfer matrix as CSV (variant = "source->victim") and a heatmap PNG.
EmittedFiles emit_transfer_report(const TransferMatrix& matrix, double threshold,
                                  const std::filesystem::path& out_dir, const std::string& config_hash);

std::vector<ReportEntry> entries_from_sweep(const std::string& variant, const SweepResult& sweep);

}  // namespace cdupatch
