#pragma once

// Generation-record data model: one prompt/output pair with everything an
// uncertainty estimator may consume. Log-probabilities are natural logs.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace lmue {

using TokenId = std::int64_t;

struct Alternative {
  TokenId token_id = 0;
  double logprob = 0.0;

  bool operator==(const Alternative&) const = default;
};

struct TokenStep {
  TokenId token_id = 0;
  std::string token_text;
  double logprob = 0.0;                         // log P(y_l | y_<l, x)
  std::vector<Alternative> alternatives;        // top-k, descending
  std::optional<double> unconditional_logprob;  // log P(y_l | y_<l), no input

  bool operator==(const TokenStep&) const = default;
};

struct SampledOutput {
  std::string text;
  std::vector<TokenStep> tokens;
  double total_logprob = 0.0;
  int length = 1;

  bool operator==(const SampledOutput&) const = default;
};

// One categorical distribution per greedy output step, as (token_id, p).
using StepDistribution = std::vector<std::pair<TokenId, double>>;

struct EnsembleTrace {
  std::string model_id;
  std::vector<StepDistribution> steps;

  bool operator==(const EnsembleTrace&) const = default;
};

struct GenerationRecord {
  std::string id;
  std::string input_text;
  std::string output_text;
  std::vector<TokenStep> output_tokens;
  std::vector<SampledOutput> samples;
  std::vector<EnsembleTrace> ensemble_traces;
  std::optional<std::vector<double>> embedding;
  std::optional<std::string> reference_text;
  std::optional<double> p_true;

  bool operator==(const GenerationRecord&) const = default;
};

struct Dataset {
  std::vector<GenerationRecord> records;
  std::map<std::string, std::string> metadata;

  bool operator==(const Dataset&) const = default;
};

struct Violation {
  std::string record_id;
  std::string field;
  std::string message;
};

using ValidationReport = std::vector<Violation>;

/// Checks every record invariant; an empty report means the record is valid.
ValidationReport validate_record(const GenerationRecord& record);

/// Sum of greedy step log-probabilities, log P(y | x).
double greedy_logprob(const GenerationRecord& record);

// Wire conversion for the line-delimited record format. from_json applies
// ingestion normalization to ensemble step distributions.
nlohmann::json record_to_json(const GenerationRecord& record);
GenerationRecord record_from_json(const nlohmann::json& j);

/// Parses one record line. Throws Parse on malformed input.
GenerationRecord parse_record_line(const std::string& line);
std::string serialize_record_line(const GenerationRecord& record);

/// Reads a record file in file order. Throws Io, Parse (with line number) or
/// Validation (with record id and field). Duplicate ids are rejected.
Dataset load_dataset(const std::filesystem::path& path);

/// Loads and concatenates several record files, checking id uniqueness across
/// all of them.
Dataset load_datasets(const std::vector<std::filesystem::path>& paths);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// Embedding files: one JSON value per line, either a bare array of numbers
/// or an object with an "embedding" array (record lines qualify).
std::vector<std::vector<double>> load_embeddings(const std::filesystem::path& path);

}  // namespace lmue
