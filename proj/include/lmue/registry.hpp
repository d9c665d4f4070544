#pragma once

// Named estimators with their taxonomy, cost tags, and required inputs. Every
// estimator in the library is reachable through exactly one entry.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "lmue/density.hpp"
#include "lmue/info.hpp"
#include "lmue/meaning.hpp"
#include "lmue/records.hpp"

namespace lmue {

// Inputs an estimator may need. Record-level inputs come from the generation
// record; the rest are artifacts or providers held by the context.
enum class Capability {
  TokenLogprobs,
  TokenAlternatives,
  UnconditionalLogprobs,
  Samples,
  SampleLogprobs,
  Nli,
  Ensemble,
  Embedding,
  DensityFit,
  BackgroundFit,
  RdeFit,
  HuqCalibration,
  PTrue,
  Reference,
};

const char* to_string(Capability c);

using NliScorer = std::function<PairwiseScores(const std::vector<std::string>& texts)>;

// Memoizes pairwise NLI scores per record (id and sample texts); safe for
// concurrent use.
class NliCache {
 public:
  explicit NliCache(NliScorer scorer) : scorer_(std::move(scorer)) {}

  PairwiseScores scores(const GenerationRecord& record);

 private:
  NliScorer scorer_;
  std::mutex mu_;
  std::map<std::string, PairwiseScores> cache_;
};

struct EstimatorContext {
  InfoConfig info;
  double eig_threshold = 0.9;
  bool ensemble_average = false;  // average instead of sum over steps
  std::shared_ptr<const DensityModel> density;
  std::shared_ptr<NliCache> nli;
};

struct EstimatorEntry {
  std::string name;
  std::string category;      // Information-based, Meaning diversity, ...
  std::string box;           // White-box or Black-box
  std::string method;        // method family shown in listings
  std::string compute;       // Low / Medium / High
  std::string memory;
  bool needs_training_data = false;
  bool diagnostic = false;   // planted benchmark baselines, hidden from the service
  std::vector<Capability> requires_inputs;
  std::function<double(const GenerationRecord&, const EstimatorContext&)> compute_fn;
};

class EstimatorRegistry {
 public:
  /// Every built-in estimator, including diagnostic baselines.
  static const EstimatorRegistry& builtin();

  /// Copy without the named entries.
  EstimatorRegistry without(const std::set<std::string>& disabled) const;
  /// Copy without diagnostic entries.
  EstimatorRegistry public_entries() const;

  const EstimatorEntry* find(const std::string& name) const;
  const std::vector<EstimatorEntry>& entries() const { return entries_; }
  std::vector<std::string> names() const;

  /// Throws Usage listing the valid names if `name` is unknown.
  const EstimatorEntry& at(const std::string& name) const;

 private:
  std::vector<EstimatorEntry> entries_;
};

/// Runs the estimator. Missing record inputs raise UnavailableInput; missing
/// context artifacts or providers raise Capability.
double evaluate(const EstimatorEntry& entry, const GenerationRecord& record,
                const EstimatorContext& ctx);

}  // namespace lmue
