#include "covseg/metrics/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace covseg::metrics {

namespace {

std::uint64_t count_positive(const Mask& m) {
  return static_cast<std::uint64_t>(std::count_if(m.values().begin(), m.values().end(),
                                                  [](std::uint8_t v) { return v != 0; }));
}

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

nlohmann::json stats_json(const SummaryStats& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}};
}

SummaryStats stats_from(const nlohmann::json& j) {
  return {j.at("mean").get<double>(), j.at("std").get<double>(), j.at("min").get<double>(),
          j.at("max").get<double>()};
}

std::string format_table(const std::vector<MetricsReport>& reports, const char* metric,
                         SummaryStats MetricsReport::*field, bool note_tolerance) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %-14s %-16s %-14s %-14s\n", "Dataset", "CT scans (n)",
                metric, metric, metric);
  os << line;
  std::snprintf(line, sizeof line, "%-14s %-14s %-16s %-14s %-14s\n", "", "", "Mean and std.",
                "Lowest", "Highest");
  os << line;
  for (const auto& r : reports) {
    const SummaryStats& s = r.*field;
    char ms[64];
    std::snprintf(ms, sizeof ms, "%.3f \xC2\xB1 %.3f", s.mean, s.std);
    std::snprintf(line, sizeof line, "%-14s %-14zu %-17s %-14.3f %-14.3f\n",
                  r.dataset_name.c_str(), r.n_scans, ms, s.min, s.max);
    os << line;
  }
  if (note_tolerance && !reports.empty()) {
    std::snprintf(line, sizeof line, "NSD tolerance: %g mm\n", reports.front().nsd_tolerance_mm);
    os << line;
  }
  return os.str();
}

}  // namespace

PatientScore score_patient(const std::string& study_id, const Mask& pred, const Mask& gt,
                           const Spacing3& spacing, double tolerance_mm) {
  PatientScore s;
  s.study_id = study_id;
  s.dice = volumetric_dice(pred, gt);
  s.nsd = normalized_surface_dice(pred, gt, spacing, tolerance_mm);
  s.gt_positive_voxels = count_positive(gt);
  s.pred_positive_voxels = count_positive(pred);
  return s;
}

SummaryStats summarize(const std::vector<double>& values) {
  if (values.empty()) throw UsageError("summary of an empty score list");
  SummaryStats s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(values.size()));
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

MetricsReport macro_average(std::vector<PatientScore> rows, std::string dataset_name,
                            double nsd_tolerance_mm) {
  if (rows.empty()) throw UsageError("macro_average: no patient scores");
  MetricsReport r;
  r.dataset_name = std::move(dataset_name);
  r.n_scans = rows.size();
  std::vector<double> d, n;
  for (const auto& row : rows) {
    d.push_back(row.dice);
    n.push_back(row.nsd);
  }
  r.dice = summarize(d);
  r.nsd = summarize(n);
  r.rows = std::move(rows);
  r.nsd_tolerance_mm = nsd_tolerance_mm;
  return r;
}

void write_scores_csv(const std::vector<PatientScore>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << "study_id,dice,nsd,gt_voxels,pred_voxels\n";
  for (const auto& r : rows) {
    out << csv_field(r.study_id) << ',' << exact(r.dice) << ',' << exact(r.nsd) << ','
        << r.gt_positive_voxels << ',' << r.pred_positive_voxels << '\n';
  }
  if (!out) throw InputError("failed writing " + path);
}

std::vector<PatientScore> read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) ||
      split_csv_line(line) != std::vector<std::string>{"study_id", "dice", "nsd", "gt_voxels", "pred_voxels"}) {
    throw DataError(path + ": unexpected CSV header");
  }
  std::vector<PatientScore> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw DataError(path + ": malformed row '" + line + "'");
    try {
      rows.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stoull(f[3]), std::stoull(f[4])});
    } catch (const std::logic_error&) {
      throw DataError(path + ": malformed row '" + line + "'");
    }
  }
  return rows;
}

nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& p : r.rows) {
    rows.push_back({{"study_id", p.study_id},
                    {"dice", p.dice},
                    {"nsd", p.nsd},
                    {"gt_voxels", p.gt_positive_voxels},
                    {"pred_voxels", p.pred_positive_voxels}});
  }
  return {{"dataset", r.dataset_name},  {"n_scans", r.n_scans},
          {"nsd_tolerance_mm", r.nsd_tolerance_mm},
          {"dice", stats_json(r.dice)}, {"nsd", stats_json(r.nsd)},
          {"rows", rows}};
}

MetricsReport report_from_json(const nlohmann::json& j) {
  try {
    MetricsReport r;
    r.dataset_name = j.at("dataset").get<std::string>();
    r.n_scans = j.at("n_scans").get<std::size_t>();
    r.nsd_tolerance_mm = j.at("nsd_tolerance_mm").get<double>();
    r.dice = stats_from(j.at("dice"));
    r.nsd = stats_from(j.at("nsd"));
    for (const auto& p : j.at("rows")) {
      r.rows.push_back({p.at("study_id").get<std::string>(), p.at("dice").get<double>(),
                        p.at("nsd").get<double>(), p.at("gt_voxels").get<std::uint64_t>(),
                        p.at("pred_voxels").get<std::uint64_t>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metrics report: ") + e.what());
  }
}

void write_report_json(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << report_to_json(report).dump(2) << '\n';
}

MetricsReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return report_from_json(j);
}

std::string format_dice_table(const std::vector<MetricsReport>& reports) {
  return format_table(reports, "Dice score", &MetricsReport::dice, false);
}

std::string format_nsd_table(const std::vector<MetricsReport>& reports) {
  return format_table(reports, "NSD", &MetricsReport::nsd, true);
}

}  // namespace covseg::metrics
