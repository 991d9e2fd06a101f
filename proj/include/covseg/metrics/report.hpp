#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covseg/metrics/metrics.hpp"
#include "json.hpp"

namespace covseg::metrics {

struct PatientScore {
  std::string study_id;
  double dice = 0.0;
  double nsd = 0.0;
  std::uint64_t gt_positive_voxels = 0;
  std::uint64_t pred_positive_voxels = 0;
};

PatientScore score_patient(const std::string& study_id, const Mask& pred, const Mask& gt,
                           const Spacing3& spacing, double tolerance_mm = kDefaultNsdToleranceMm);

struct SummaryStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
};

SummaryStats summarize(const std::vector<double>& values);

struct MetricsReport {
  std::string dataset_name;
  std::size_t n_scans = 0;
  SummaryStats dice;
  SummaryStats nsd;
  std::vector<PatientScore> rows;
  double nsd_tolerance_mm = kDefaultNsdToleranceMm;
};

MetricsReport macro_average(std::vector<PatientScore> rows, std::string dataset_name = "",
                            double nsd_tolerance_mm = kDefaultNsdToleranceMm);

// study_id,dice,nsd,gt_voxels,pred_voxels with round-trip precision.
void write_scores_csv(const std::vector<PatientScore>& rows, const std::string& path);
std::vector<PatientScore> read_scores_csv(const std::string& path);

nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);
void write_report_json(const MetricsReport& report, const std::string& path);
MetricsReport read_report_json(const std::string& path);

// Plain-text tables: one row per dataset with n, mean +- std, lowest, highest.
std::string format_dice_table(const std::vector<MetricsReport>& reports);
std::string format_nsd_table(const std::vector<MetricsReport>& reports);

}  // namespace covseg::metrics
