#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cdupatch/errors.hpp"
#include "cdupatch/png_io.hpp"
#include "cdupatch/report.hpp"
#include "test_support.hpp"

namespace cdupatch {
namespace {

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string bytes_of(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

SweepResult fake_sweep() {
  SweepResult s;
  s.thresholds = kDefaultThresholds;
  for (std::size_t i = 0; i < s.thresholds.size(); ++i) {
    const double t = s.thresholds[i];
    const int nc = 20 - int(i), np = 10 - 2 * int(i);
    s.reports.push_back({{nc, np, attack_success_rate(nc, np), t, EvalModality::kVisible},
                         {nc, np + 1, attack_success_rate(nc, np + 1), t, EvalModality::kInfrared},
                         {nc, np + 2, attack_success_rate(nc, np + 2), t, EvalModality::kFused}});
  }
  return s;
}

TEST(FormatReport, HeaderAndFixedFormatting) {
  const std::vector<ReportEntry> e{{"full", {10, 3, 0.7, 0.5, EvalModality::kInfrared}}};
  EXPECT_EQ(format_report_table(e),
            "variant,modality,threshold,n_clean,n_patch,asr\nfull,infrared,0.5000,10,3,0.700000\n");
}

TEST(EmitReport, SweepGivesFiveRowsPerModalityAndOneCurve) {
  testing::TempDir dir("report");
  const auto entries = entries_from_sweep("full", fake_sweep());
  ASSERT_EQ(entries.size(), 15u);
  const auto files = emit_report(entries, dir.path(), "sweep", "abc123");
  ASSERT_EQ(files.tables.size(), 1u);
  ASSERT_EQ(files.plots.size(), 1u);
  EXPECT_NE(files.tables[0].filename().string().find("abc123"), std::string::npos);
  EXPECT_NE(files.plots[0].filename().string().find("abc123"), std::string::npos);

  const auto lines = lines_of(files.tables[0]);
  ASSERT_EQ(lines.size(), 16u);
  EXPECT_EQ(lines[0], kReportHeader);
  for (const char* m : {"visible,", "infrared,", "fused,"}) {
    int rows = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) rows += lines[i].find(m) != std::string::npos;
    EXPECT_EQ(rows, 5) << m;
  }
  const Image curve = read_png(files.plots[0]);
  EXPECT_GT(curve.width, 100);
}

TEST(EmitReport, RerunWritesIdenticalBytes) {
  testing::TempDir dir("report_rerun");
  const auto entries = entries_from_sweep("full", fake_sweep());
  const auto a = emit_report(entries, dir.path(), "sweep", "h");
  const std::string first = bytes_of(a.tables[0]), first_plot = bytes_of(a.plots[0]);
  const auto b = emit_report(entries, dir.path(), "sweep", "h");
  EXPECT_EQ(bytes_of(b.tables[0]), first);
  EXPECT_EQ(bytes_of(b.plots[0]), first_plot);
}

TEST(EmitReport, SingleThresholdHasNoCurve) {
  testing::TempDir dir("report_single");
  const std::vector<ReportEntry> e{{"full", {10, 3, 0.7, 0.5, EvalModality::kFused}}};
  const auto files = emit_report(e, dir.path(), "asr", "h");
  EXPECT_EQ(files.tables.size(), 1u);
  EXPECT_TRUE(files.plots.empty());
}

TEST(EmitReport, EmptyEntriesWriteNothing) {
  testing::TempDir dir("report_empty");
  EXPECT_THROW(emit_report({}, dir.path() / "out", "sweep", "h"), ParameterError);
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "out"));
}

TEST(EmitReport, UnwritableDirectoryIsIoError) {
  testing::TempDir dir("report_io");
  std::ofstream(dir.path() / "blocker") << "x";
  const std::vector<ReportEntry> e{{"full", {10, 3, 0.7, 0.5, EvalModality::kFused}}};
  EXPECT_THROW(emit_report(e, dir.path() / "blocker" / "sub", "asr", "h"), IoError);
}

TEST(EmitTransferReport, TableAndHeatmap) {
  testing::TempDir dir("transfer");
  TransferMatrix m;
  m.victims = {"a", "b"};
  m.asr = {{0.8, 0.3}, {0.2, 0.9}};
  for (int r = 0; r < 2; ++r) {
    m.reports.emplace_back();
    for (int c = 0; c < 2; ++c) {
      const int np = int(std::lround(10 * (1 - m.asr[r][c])));
      m.reports[r].push_back({{10, np, m.asr[r][c], 0.5, EvalModality::kVisible},
                              {10, np, m.asr[r][c], 0.5, EvalModality::kInfrared},
                              {10, np, m.asr[r][c], 0.5, EvalModality::kFused}});
    }
  }
  const auto files = emit_transfer_report(m, 0.5, dir.path(), "h");
  ASSERT_EQ(files.tables.size(), 1u);
  ASSERT_EQ(files.plots.size(), 1u);
  const auto lines = lines_of(files.tables[0]);
  EXPECT_EQ(lines[0], kReportHeader);
  EXPECT_EQ(lines.size(), 1u + 4 * 3);
  bool found = false;
  for (const auto& l : lines) found |= l.rfind("a->b,fused,", 0) == 0;
  EXPECT_TRUE(found);
}

}  // namespace
}  // namespace cdupatch
