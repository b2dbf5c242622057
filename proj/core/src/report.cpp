#include "mixreg/report.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mixreg/errors.hpp"

namespace mixreg {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  if (text == "nan") return std::nan("");
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  double x = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError("not a number: '" + text + "'");
  }
  return x;
}

std::string runs_csv(const std::vector<RunRecord>& records, bool with_timing) {
  std::string out = std::string(kRunsHeader) + "\n";
  for (const RunRecord& r : records) {
    out += technique_name(r.technique);
    out += ',' + format_double(r.p) + ',' + std::to_string(r.seed) + ',' + format_double(r.dev_score) + ',' +
           format_double(r.deviation_sq) + ',' + format_double(r.source_accuracy) + ',' +
           format_double(with_timing ? r.secs_per_step : 0.0) + '\n';
  }
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = std::string(kSummaryHeader) + "\n";
  for (const SummaryRow& s : rows) {
    out += technique_name(s.technique);
    out += ',' + format_double(s.p) + ',' + format_double(s.mean) + ',' + format_double(s.std) + ',' +
           format_double(s.max) + ',' + std::to_string(s.degenerate_count) + '\n';
  }
  return out;
}

void write_report(const SweepResult& result, const std::string& dir, bool with_timing) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  const fs::path root(dir);
  write_text(root / "runs.csv", runs_csv(result.records, with_timing));
  write_text(root / "summary.csv", summary_csv(result.summary));

  std::string curves = "technique,p,seed,epoch,train_loss,val_accuracy\n";
  for (const RunRecord& r : result.records) {
    for (std::size_t e = 0; e < r.epochs.size(); ++e) {
      curves += std::string(technique_name(r.technique)) + ',' + format_double(r.p) + ',' + std::to_string(r.seed) +
                ',' + std::to_string(e + 1) + ',' + format_double(r.epochs[e].train_loss) + ',' +
                format_double(r.epochs[e].val_accuracy) + '\n';
    }
  }
  write_text(root / "curves.csv", curves);

  bool traced = false;
  for (const RunRecord& r : result.records) traced = traced || !r.deviation_trace.empty();
  if (traced) {
    std::string trace = "technique,p,seed,step,distance\n";
    for (const RunRecord& r : result.records) {
      for (std::size_t k = 0; k < r.deviation_trace.size(); ++k) {
        trace += std::string(technique_name(r.technique)) + ',' + format_double(r.p) + ',' + std::to_string(r.seed) +
                 ',' + std::to_string(k + 1) + ',' + format_double(r.deviation_trace[k]) + '\n';
      }
    }
    write_text(root / "trace.csv", trace);
  }

  write_text(root / "meta.csv", "key,value\nchance_threshold," + format_double(result.chance_threshold) +
                                    "\npretrain_accuracy," + format_double(result.pretrain_accuracy) + "\n");
}

std::vector<RunRecord> parse_runs_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kRunsHeader) throw FormatError("runs.csv header mismatch");
  std::vector<RunRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_fields(lines[i]);
    if (f.size() != 7) throw FormatError("runs.csv line " + std::to_string(i + 1) + ": expected 7 fields");
    RunRecord r;
    r.technique = parse_technique(f[0]);
    r.p = parse_double(f[1]);
    try {
      r.seed = std::stoull(f[2]);
    } catch (const std::exception&) {
      throw FormatError("runs.csv line " + std::to_string(i + 1) + ": bad seed");
    }
    r.dev_score = parse_double(f[3]);
    r.deviation_sq = parse_double(f[4]);
    r.source_accuracy = parse_double(f[5]);
    r.secs_per_step = parse_double(f[6]);
    r.failed = !std::isfinite(r.dev_score);
    records.push_back(r);
  }
  return records;
}

std::vector<RunRecord> read_runs_csv(const std::string& path) { return parse_runs_csv(read_text(path)); }

std::string report(const std::string& dir) {
  const fs::path root(dir);
  const auto records = read_runs_csv((root / "runs.csv").string());
  double threshold = std::nan("");
  for (const auto& line : lines_of(read_text(root / "meta.csv"))) {
    const auto f = split_fields(line);
    if (f.size() == 2 && f[0] == "chance_threshold") threshold = parse_double(f[1]);
  }
  if (std::isnan(threshold)) throw FormatError("meta.csv has no chance_threshold");
  const std::string text = summary_csv(summarize(records, threshold));
  write_text(root / "summary.csv", text);
  return text;
}

}  // namespace mixreg
