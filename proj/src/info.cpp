#include "lmue/info.hpp"

#include <cmath>

#include "lmue/errors.hpp"

namespace lmue {

namespace {

void require_tokens(const GenerationRecord& r, const char* estimator) {
  if (r.output_tokens.empty()) {
    raise(ErrorKind::UnavailableInput,
          std::string(estimator) + ": record '" + r.id + "' has no output token logprobs");
  }
}

void require_alternatives(const GenerationRecord& r, const char* estimator) {
  for (const auto& s : r.output_tokens) {
    if (s.alternatives.empty()) {
      raise(ErrorKind::UnavailableInput,
            std::string(estimator) + ": record '" + r.id + "' has a step without alternatives");
    }
  }
}

void require_unconditional(const GenerationRecord& r, const char* estimator) {
  for (const auto& s : r.output_tokens) {
    if (!s.unconditional_logprob) {
      raise(ErrorKind::UnavailableInput, std::string(estimator) + ": record '" + r.id +
                                             "' lacks unconditional logprobs");
    }
  }
}

double length(const GenerationRecord& r) { return static_cast<double>(r.output_tokens.size()); }

}  // namespace

void check(const InfoConfig& cfg) {
  if (!(cfg.cpmi_tau > 0.0)) raise(ErrorKind::Input, "cpmi_tau must be > 0");
  if (!(cfg.cpmi_lambda >= 0.0)) raise(ErrorKind::Input, "cpmi_lambda must be >= 0");
}

double step_entropy(const TokenStep& step, Truncation mode) {
  double mass = 0.0;
  for (const auto& a : step.alternatives) mass += std::exp(a.logprob);
  if (mass <= 0.0) return 0.0;

  double h = 0.0;
  if (mode == Truncation::Renormalize) {
    for (const auto& a : step.alternatives) {
      const double q = std::exp(a.logprob) / mass;
      if (q > 0.0) h -= q * std::log(q);
    }
  } else {
    for (const auto& a : step.alternatives) {
      const double p = std::exp(a.logprob);
      if (p > 0.0) h -= p * a.logprob;
    }
    const double rest = 1.0 - mass;
    if (rest > 0.0) h -= rest * std::log(rest);
  }
  return h;
}

double msp(const GenerationRecord& record) {
  require_tokens(record, "msp");
  return 1.0 - std::exp(greedy_logprob(record));
}

double perplexity(const GenerationRecord& record) {
  require_tokens(record, "perplexity");
  return std::exp(-greedy_logprob(record) / length(record));
}

double mean_token_entropy(const GenerationRecord& record, const InfoConfig& cfg) {
  require_tokens(record, "mean_token_entropy");
  require_alternatives(record, "mean_token_entropy");
  double sum = 0.0;
  for (const auto& s : record.output_tokens) sum += step_entropy(s, cfg.truncation_mode);
  return sum / length(record);
}

double mc_sequence_entropy(const GenerationRecord& record, bool normalized) {
  if (record.samples.empty()) {
    raise(ErrorKind::UnavailableInput,
          "mc_sequence_entropy: record '" + record.id + "' has no samples");
  }
  double sum = 0.0;
  for (const auto& s : record.samples) {
    sum += normalized ? s.total_logprob / static_cast<double>(s.length) : s.total_logprob;
  }
  return -sum / static_cast<double>(record.samples.size());
}

double pmi(const GenerationRecord& record) {
  require_tokens(record, "pmi");
  require_unconditional(record, "pmi");
  double sum = 0.0;
  for (const auto& s : record.output_tokens) sum += *s.unconditional_logprob - s.logprob;
  return sum / length(record);
}

double cpmi(const GenerationRecord& record, const InfoConfig& cfg) {
  require_tokens(record, "cpmi");
  require_unconditional(record, "cpmi");
  require_alternatives(record, "cpmi");
  double nll = 0.0;
  double marginal = 0.0;
  for (const auto& s : record.output_tokens) {
    nll -= s.logprob;
    if (step_entropy(s, cfg.truncation_mode) >= cfg.cpmi_tau) marginal += *s.unconditional_logprob;
  }
  const double n = length(record);
  return nll / n + cfg.cpmi_lambda * marginal / n;
}

double p_true_uncertainty(const GenerationRecord& record) {
  if (!record.p_true) {
    raise(ErrorKind::UnavailableInput, "p_true: record '" + record.id + "' has no p_true");
  }
  return 1.0 - *record.p_true;
}

}  // namespace lmue
