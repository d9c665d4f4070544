#pragma once

// Glue between files on disk and the library: density fitting from embedding
// files, the YAML benchmark configuration, score tables over record files, and
// calibration fitting. The CLI is a thin layer over these functions.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lmue/benchmark.hpp"
#include "lmue/calibration.hpp"
#include "lmue/density.hpp"
#include "lmue/registry.hpp"

namespace lmue {

struct DensityFitOptions {
  std::filesystem::path train;
  std::optional<std::filesystem::path> background;
  // Records with embeddings and greedy tokens used to build HUQ calibration
  // lists; HUQ is left out when absent.
  std::optional<std::filesystem::path> huq_records;
  long subsample_train = -1;
  long subsample_background = -1;
  int rde_dim = 0;  // 0: min(dim - 1, 10), capped by the MCD subset size
  std::uint64_t seed = 1;
  HuqConfig huq;    // alpha and component estimators
};

DensityModel fit_density_model(const DensityFitOptions& options);

/// NLI provider client wrapped as a cache for estimator contexts.
std::shared_ptr<NliCache> make_nli_cache(const std::string& url, const std::string& api_key,
                                         std::size_t batch_size = 64, int max_parallel = 4);

struct BenchDatasetSpec {
  std::string name;
  std::filesystem::path path;
};

struct BenchConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::filesystem::path save_path = "bench_out";
  std::vector<BenchDatasetSpec> datasets;
  std::vector<std::string> quality_metrics = {"rougeL"};
  std::vector<std::string> estimators;  // empty: chosen by the use_* toggles
  std::vector<std::string> disabled_estimators;
  bool use_density_based_ue = true;
  bool use_seq_ue = true;
  bool use_tok_ue = true;
  std::optional<std::filesystem::path> train_dataset;
  std::optional<std::filesystem::path> background_train_dataset;
  std::optional<std::filesystem::path> huq_calibration_dataset;
  long subsample_train_dataset = -1;
  long subsample_background_train_dataset = -1;
  long subsample_eval_dataset = -1;
  int rde_dim = 0;
  double huq_alpha = 0.5;
  bool ignore_exceptions = false;
  int batch_size = 1;          // accepted for compatibility; records are scored one at a time
  int deberta_batch_size = 64; // pairs per NLI request
  int threads = 0;
  std::string nli_url;
  std::string external_quality_url;
  std::vector<std::uint64_t> seed = {1};
  int bootstrap_resamples = 1000;
};

/// Parses the YAML config. Unknown keys raise Usage naming the key.
BenchConfig load_bench_config(const std::filesystem::path& path);
BenchConfig parse_bench_config(const std::string& yaml_text, const std::filesystem::path& base_dir);

/// Estimators a config selects, in registry order.
std::vector<std::string> selected_estimators(const BenchConfig& config, const EstimatorRegistry& registry);

struct BenchOutput {
  BenchmarkReport report;
  std::string json;
  std::string text;
};

/// Loads data, fits density artifacts, runs the benchmark.
BenchOutput run_bench(const BenchConfig& config, const std::string& api_key = "");

/// Writes report.json and report.txt under the config's save_path.
void write_bench_output(const BenchConfig& config, const BenchOutput& output);

struct ScoreTable {
  std::vector<std::string> estimators;
  std::vector<std::string> record_ids;
  std::vector<std::vector<std::optional<double>>> values;  // [record][estimator]
  std::vector<std::string> notes;                          // skipped cells
};

/// Scores every record with every estimator. Missing inputs leave the cell
/// empty; any other failure raises with the record id.
ScoreTable estimate_table(const Dataset& dataset, const std::vector<std::string>& estimators,
                          const EstimatorRegistry& registry, const EstimatorContext& ctx);

/// Tab-separated table; empty cells read "unavailable".
std::string score_table_to_tsv(const ScoreTable& table);

/// Fits a calibration table from an estimator's scores and a quality metric
/// over records with references.
CalibrationTable calibrate_records(const Dataset& dataset, const std::string& estimator,
                                   QualityMetric metric, int num_bins, const EstimatorRegistry& registry,
                                   const EstimatorContext& ctx);

}  // namespace lmue
