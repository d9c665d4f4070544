#include "lmue/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lmue/errors.hpp"

namespace lmue {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr long kSmallBin = 5;

std::vector<long> count_bins(const std::vector<double>& edges, const std::vector<double>& sorted) {
  std::vector<long> counts(edges.size() - 1, 0);
  for (double s : sorted) {
    auto it = std::upper_bound(edges.begin(), edges.end(), s);
    auto b = static_cast<std::size_t>(it - edges.begin()) - 1;
    ++counts[std::min(b, counts.size() - 1)];
  }
  return counts;
}

nlohmann::ordered_json edge_to_json(double e) {
  if (e == -kInf) return "-inf";
  if (e == kInf) return "inf";
  return e;
}

double edge_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j == "-inf") return -kInf;
    if (j == "inf") return kInf;
    raise(ErrorKind::Parse, "calibration edge must be a number, \"-inf\" or \"inf\"");
  }
  return j.get<double>();
}

}  // namespace

CalibrationTable fit_bins(const std::vector<double>& ue_scores, const std::vector<double>& qualities,
                          int num_bins, const std::string& estimator_name) {
  if (ue_scores.size() != qualities.size()) {
    raise(ErrorKind::Input, "calibration scores and qualities differ in length");
  }
  if (num_bins < 1) raise(ErrorKind::Input, "number of bins must be at least 1");
  const std::size_t n = ue_scores.size();
  if (n < static_cast<std::size_t>(num_bins)) {
    raise(ErrorKind::Input, "calibration needs at least as many examples as bins");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(ue_scores[i])) raise(ErrorKind::Input, "calibration score is not finite");
    if (!(qualities[i] >= 0.0 && qualities[i] <= 1.0)) {
      raise(ErrorKind::Input, "calibration quality outside [0, 1]");
    }
  }

  CalibrationTable table;
  table.estimator_name = estimator_name;
  std::vector<double> sorted = ue_scores;
  std::sort(sorted.begin(), sorted.end());

  std::vector<double> edges = {-kInf};
  for (int b = 1; b < num_bins; ++b) {
    const double e = sorted[static_cast<std::size_t>(b) * n / static_cast<std::size_t>(num_bins)];
    if (e > edges.back()) edges.push_back(e);
  }
  edges.push_back(kInf);

  auto counts = count_bins(edges, sorted);
  for (std::size_t b = 0; b < counts.size();) {
    if (counts[b] > 0 || counts.size() == 1) {
      ++b;
      continue;
    }
    // Drop the edge shared with a neighbour; never a sentinel.
    edges.erase(edges.begin() + static_cast<long>(b + 1 < counts.size() ? b + 1 : b));
    counts = count_bins(edges, sorted);
    b = 0;
  }

  const std::size_t bins = edges.size() - 1;
  if (bins < static_cast<std::size_t>(num_bins)) {
    std::ostringstream w;
    w << "tied scores: " << num_bins << " bins requested, " << bins << " kept";
    table.warnings.push_back(w.str());
  }

  std::vector<double> sums(bins, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), ue_scores[i]) -
                                      edges.begin()) - 1;
    sums[std::min(b, bins - 1)] += qualities[i];
  }
  table.bin_edges = edges;
  table.bin_counts = counts;
  for (std::size_t b = 0; b < bins; ++b) {
    table.bin_confidence.push_back(sums[b] / static_cast<double>(counts[b]));
    if (counts[b] < kSmallBin) {
      table.warnings.push_back("bin " + std::to_string(b) + " holds only " + std::to_string(counts[b]) +
                               " examples; confidence may be unreliable");
    }
  }
  return table;
}

double normalize(const CalibrationTable& table, double ue) {
  if (table.bin_confidence.empty()) raise(ErrorKind::Input, "calibration table is empty");
  const auto& e = table.bin_edges;
  auto it = std::upper_bound(e.begin(), e.end(), ue);
  std::size_t b = it == e.begin() ? 0 : static_cast<std::size_t>(it - e.begin()) - 1;
  return table.bin_confidence[std::min(b, table.bins() - 1)];
}

std::string calibration_to_json(const CalibrationTable& table) {
  nlohmann::ordered_json j;
  j["estimator"] = table.estimator_name;
  auto edges = nlohmann::ordered_json::array();
  for (double e : table.bin_edges) edges.push_back(edge_to_json(e));
  j["bin_edges"] = edges;
  j["bin_confidence"] = table.bin_confidence;
  j["bin_counts"] = table.bin_counts;
  return j.dump(2) + "\n";
}

CalibrationTable calibration_from_json(const std::string& text) {
  CalibrationTable t;
  try {
    const auto j = nlohmann::json::parse(text);
    t.estimator_name = j.at("estimator").get<std::string>();
    for (const auto& e : j.at("bin_edges")) t.bin_edges.push_back(edge_from_json(e));
    t.bin_confidence = j.at("bin_confidence").get<std::vector<double>>();
    t.bin_counts = j.at("bin_counts").get<std::vector<long>>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Parse, std::string("calibration table: ") + e.what());
  }
  if (t.bin_edges.size() != t.bin_confidence.size() + 1 || t.bin_counts.size() != t.bin_confidence.size() ||
      t.bin_confidence.empty()) {
    raise(ErrorKind::Validation, "calibration table: edge, confidence and count lengths disagree");
  }
  for (std::size_t i = 1; i < t.bin_edges.size(); ++i) {
    if (!(t.bin_edges[i] > t.bin_edges[i - 1])) {
      raise(ErrorKind::Validation, "calibration table: edges must be strictly increasing");
    }
  }
  for (double c : t.bin_confidence) {
    if (!(c >= 0.0 && c <= 1.0)) raise(ErrorKind::Validation, "calibration table: confidence outside [0, 1]");
  }
  return t;
}

void save_calibration(const CalibrationTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::Io, "cannot write " + path.string());
  out << calibration_to_json(table);
  if (!out) raise(ErrorKind::Io, "write failed: " + path.string());
}

CalibrationTable load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return calibration_from_json(buf.str());
  } catch (const Error& e) {
    raise(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace lmue
