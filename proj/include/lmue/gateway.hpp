#pragma once

// Clients that turn remote models into generation records: an
// OpenAI-compatible chat client (greedy answer with token logprobs, sampled
// answers), the p(True) self-check, the unconditional scoring pass used by
// PMI, and an NLI scoring provider. No estimator performs network IO; every
// remote value enters through here.

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "lmue/benchmark.hpp"
#include "lmue/meaning.hpp"
#include "lmue/records.hpp"

namespace lmue {

struct ModelEndpoint {
  std::string base_url;  // e.g. http://127.0.0.1:8080/v1
  std::string api_key;   // never logged
  std::string model_name;
  std::chrono::milliseconds timeout{60000};
  int max_parallel = 4;
};

struct GenerationParams {
  int max_new_tokens = 256;
  double temperature = 1.0;  // sampling temperature; the greedy pass uses 0
  double top_p = 1.0;
  int num_samples = 0;
  int logprobs_k = 5;
  std::uint64_t seed = 0;     // sample k is requested with seed + k
  bool require_logprobs = true;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds base_delay{250};
  std::chrono::milliseconds max_delay{8000};
};

// Bounds the number of in-flight requests of one endpoint.
class RequestLimiter {
 public:
  explicit RequestLimiter(int slots) : free_(slots < 1 ? 1 : slots) {}
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int free_;
};

class EndpointClient {
 public:
  explicit EndpointClient(ModelEndpoint endpoint, RetryPolicy retry = {});

  /// POSTs JSON to base_url + path. Retries connection failures and 5xx with
  /// exponential backoff; 401/403 raise Auth, other 4xx raise TransportError
  /// at once.
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;

  const ModelEndpoint& endpoint() const { return endpoint_; }

  /// Replaces every occurrence of the api key with "***".
  std::string scrub(std::string text) const;

 private:
  ModelEndpoint endpoint_;
  RetryPolicy retry_;
  std::string origin_;
  std::string prefix_;
  std::shared_ptr<RequestLimiter> limiter_;
};

/// Greedy completion with per-token logprobs and top-k alternatives, plus
/// params.num_samples sampled completions. The record is validated before it
/// is returned.
GenerationRecord generate_record(const EndpointClient& client, const GenerationParams& params,
                                 const std::string& input_text, const std::string& id = "turn");

// Affirmative and negative token spellings whose masses are aggregated.
struct PTrueTokens {
  std::vector<std::string> affirmative = {"True", " True", "true", " true", "TRUE"};
  std::vector<std::string> negative = {"False", " False", "false", " false", "FALSE"};
};

/// The self-check prompt sent by p_true_flow.
std::string p_true_prompt(const std::string& input_text, const std::string& answer_text);

/// mass(True) / (mass(True) + mass(False)) over the top-k alternatives of the
/// first answer token. Raises Indeterminate when neither option appears.
double p_true_flow(const EndpointClient& client, const std::string& input_text,
                   const std::string& answer_text, const PTrueTokens& tokens = {});

/// Scores the record's output tokens with no input context through the
/// completions endpoint (echo, zero new tokens) and returns a copy with
/// unconditional_logprob filled. The input record is never modified.
GenerationRecord unconditional_pass(const EndpointClient& client, const GenerationRecord& record,
                                    const std::string& context = "");

/// K x K entailment and contradiction matrices from an NLI provider speaking
/// {pairs: [[premise, hypothesis]]} -> {scores: [{entail, contra, neutral}]}.
/// The endpoint base_url is the full provider URL.
PairwiseScores nli_pairwise(const EndpointClient& provider, const std::vector<std::string>& texts,
                            std::size_t batch_size = 64);

/// External quality metric over {pairs: [[candidate, reference]]} ->
/// {scores: [q]}.
ExternalQualityScorer external_quality_scorer(std::shared_ptr<const EndpointClient> client);

}  // namespace lmue
