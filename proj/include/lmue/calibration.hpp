#pragma once

// Maps a raw uncertainty to a confidence in [0, 1]: the mean quality of the
// calibration examples that fall into the same uncertainty bin.

#include <filesystem>
#include <string>
#include <vector>

namespace lmue {

struct CalibrationTable {
  std::string estimator_name;
  std::vector<double> bin_edges;       // B + 1 edges, outer ones are -inf / +inf
  std::vector<double> bin_confidence;  // B values
  std::vector<long> bin_counts;        // B values, all >= 1
  std::vector<std::string> warnings;   // fit-time notes, not persisted

  std::size_t bins() const { return bin_confidence.size(); }
};

/// Quantile (equal-count) bins over the scores. Bins left empty by tied
/// scores are merged into a neighbour and a warning is recorded.
CalibrationTable fit_bins(const std::vector<double>& ue_scores, const std::vector<double>& qualities,
                          int num_bins = 10, const std::string& estimator_name = "");

/// Confidence of the half-open bin [lo, hi) containing ue.
double normalize(const CalibrationTable& table, double ue);

std::string calibration_to_json(const CalibrationTable& table);
CalibrationTable calibration_from_json(const std::string& text);

void save_calibration(const CalibrationTable& table, const std::filesystem::path& path);
CalibrationTable load_calibration(const std::filesystem::path& path);

}  // namespace lmue
