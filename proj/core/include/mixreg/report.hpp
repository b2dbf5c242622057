#pragma once

#include <string>
#include <vector>

#include "mixreg/experiment.hpp"

namespace mixreg {

inline constexpr const char* kRunsHeader = "technique,p,seed,dev_score,deviation_sq,source_acc,secs_per_step";
inline constexpr const char* kSummaryHeader = "technique,p,mean,std,max,degenerate_count";

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);
double parse_double(const std::string& text);

/// Writes runs.csv, summary.csv, curves.csv and meta.csv into `dir`, creating
/// it if needed. Wall-clock columns are written as 0 unless `with_timing`, so
/// repeated sweeps produce identical bytes.
void write_report(const SweepResult& result, const std::string& dir, bool with_timing = false);

std::string runs_csv(const std::vector<RunRecord>& records, bool with_timing);
std::string summary_csv(const std::vector<SummaryRow>& rows);

/// Parses runs.csv text. Only the CSV columns are filled in.
std::vector<RunRecord> parse_runs_csv(const std::string& text);
std::vector<RunRecord> read_runs_csv(const std::string& path);

/// Rebuilds summary.csv in `dir` from runs.csv and meta.csv; returns its text.
std::string report(const std::string& dir);

}  // namespace mixreg
