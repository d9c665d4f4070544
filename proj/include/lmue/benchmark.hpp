#pragma once

// Selective-generation evaluation: prediction-rejection curves, the
// prediction rejection ratio (PRR), quality scoring, and benchmark reports.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lmue/records.hpp"
#include "lmue/registry.hpp"
#include "lmue/textmetrics.hpp"

namespace lmue {

// Rejection curve on the exact grid a = j/N, j = 0..N. Items are rejected in
// order of decreasing uncertainty; items with tied uncertainty each carry the
// mean quality of their tied block, which equals the expectation over random
// tie-breaking. The a = 1 point repeats the a = (N-1)/N value and is left out
// of the area.
struct PRCurve {
  std::vector<double> rejection_rates;
  std::vector<double> mean_quality;
  double auc_vs_random = 0.0;  // trapezoid area of (curve - overall mean)
};

PRCurve pr_curve(const std::vector<double>& quality, const std::vector<double>& uncertainty);

/// Area of the uncertainty curve over the area of the oracle curve (oracle
/// rejects lowest quality first). Throws Input on length mismatch or N < 2,
/// and when every quality is equal (oracle area zero).
double prr(const std::vector<double>& quality, const std::vector<double>& uncertainty);

enum class QualityMetric { RougeL, Rouge1, Bleu, External };

const char* to_string(QualityMetric m);
QualityMetric quality_metric_from_string(const std::string& name);

// Scores (candidate, reference) pairs for the External metric.
using ExternalQualityScorer =
    std::function<std::vector<double>(const std::vector<std::pair<std::string, std::string>>&)>;

struct QualityResult {
  std::vector<std::optional<double>> scores;  // aligned with dataset records
  std::vector<std::string> errors;            // one entry per failed record
};

QualityResult quality_scores(const Dataset& dataset, QualityMetric metric,
                             const ExternalQualityScorer& external = {});

struct BootstrapOptions {
  int resamples = 1000;
  std::uint64_t seed = 1;
};

/// Standard deviation of PRR over bootstrap resamples of the items.
/// Resamples with constant quality are skipped.
double bootstrap_prr_stderr(const std::vector<double>& quality, const std::vector<double>& uncertainty,
                            const BootstrapOptions& options);

/// Seeded choice of `count` indices out of n, returned ascending. count < 0
/// or count >= n keeps everything.
std::vector<std::size_t> subsample_indices(std::size_t n, long count, std::uint64_t seed);

struct ReportCell {
  std::string dataset;
  std::string metric;
  bool available = false;
  double prr_mean = 0.0;
  double prr_stderr = 0.0;
  std::size_t records_used = 0;
  std::string note;  // why a cell is unavailable
};

struct ReportRow {
  std::string estimator;
  bool available = false;      // false when the estimator had no usable record
  std::vector<ReportCell> cells;
  std::vector<std::string> skipped;  // "record_id: reason"
};

struct BenchmarkReport {
  std::vector<std::string> columns;  // "dataset/metric"
  std::vector<ReportRow> rows;
  std::vector<std::pair<std::string, std::string>> metadata;
};

struct BenchmarkOptions {
  std::vector<std::uint64_t> seeds = {1};
  int bootstrap_resamples = 1000;
  bool ignore_exceptions = false;
  long subsample = -1;   // records per seed; -1 keeps all
  int threads = 0;       // 0 = hardware concurrency
  ExternalQualityScorer external_quality;
};

struct NamedDataset {
  std::string name;
  Dataset dataset;
};

/// Evaluates every estimator on every record and reports PRR per
/// (dataset, metric). Records whose inputs are unavailable are skipped and
/// listed. Other estimator or quality failures abort with an error naming the
/// record unless ignore_exceptions is set.
BenchmarkReport run_benchmark(const std::vector<NamedDataset>& datasets,
                              const std::vector<std::string>& estimators,
                              const std::vector<QualityMetric>& metrics,
                              const EstimatorRegistry& registry, const EstimatorContext& ctx,
                              const BenchmarkOptions& options);

/// Machine-readable report (JSON text, stable key order and formatting).
std::string report_to_json(const BenchmarkReport& report);
/// Aligned-text table with "mean±stderr" cells.
std::string report_to_text(const BenchmarkReport& report);

}  // namespace lmue
