#include "lmue/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "lmue/errors.hpp"

namespace lmue {

const char* to_string(TokenMeasure m) {
  switch (m) {
    case TokenMeasure::TotalEntropy: return "total_entropy";
    case TokenMeasure::DataUncertainty: return "data_uncertainty";
    case TokenMeasure::MutualInformation: return "mi";
    case TokenMeasure::Epkl: return "epkl";
    case TokenMeasure::Rmi: return "rmi";
  }
  return "?";
}

namespace {

void floor_and_normalize(std::vector<double>& p) {
  double sum = 0.0;
  for (double& v : p) {
    v = std::max(v, kEpsilonFloor);
    sum += v;
  }
  for (double& v : p) v /= sum;
}

void require_members(const GenerationRecord& r, const char* estimator) {
  if (r.ensemble_traces.size() < 2) {
    raise(ErrorKind::UnavailableInput, std::string(estimator) + ": record '" + r.id +
                                           "' needs at least 2 ensemble traces");
  }
  if (r.output_tokens.empty()) {
    raise(ErrorKind::UnavailableInput,
          std::string(estimator) + ": record '" + r.id + "' has no greedy output tokens");
  }
  for (const auto& t : r.ensemble_traces) {
    if (t.steps.size() != r.output_tokens.size()) {
      raise(ErrorKind::Alignment, std::string(estimator) + ": trace '" + t.model_id +
                                      "' is not aligned with the greedy output of '" + r.id + "'");
    }
  }
}

// log P(y | x, member) with each step probability floored.
double member_log_prob(const GenerationRecord& r, const EnsembleTrace& trace) {
  double lp = 0.0;
  for (std::size_t l = 0; l < trace.steps.size(); ++l) {
    const TokenId target = r.output_tokens[l].token_id;
    double p = 0.0;
    for (const auto& [tok, prob] : trace.steps[l]) {
      if (tok == target) p += prob;
    }
    lp += std::log(std::max(p, kEpsilonFloor));
  }
  return lp;
}

}  // namespace

StepDistributionSet align_step(const std::vector<StepDistribution>& members) {
  std::map<TokenId, std::size_t> index;
  for (const auto& d : members) {
    for (const auto& [tok, p] : d) index.emplace(tok, 0);
  }
  StepDistributionSet out;
  for (auto& [tok, i] : index) {
    i = out.support.size();
    out.support.push_back(tok);
  }
  for (const auto& d : members) {
    std::vector<double> p(out.support.size(), 0.0);
    for (const auto& [tok, prob] : d) p[index.at(tok)] += prob;
    floor_and_normalize(p);
    out.per_model.push_back(std::move(p));
  }
  return out;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return kl;
}

TokenMeasures token_measures(const StepDistributionSet& step) {
  const std::size_t m = step.per_model.size();
  if (m < 2) raise(ErrorKind::UnavailableInput, "token measures need at least 2 members");
  const std::size_t n = step.support.size();
  for (const auto& p : step.per_model) {
    if (p.size() != n) raise(ErrorKind::Alignment, "member distribution does not match the support");
  }

  std::vector<double> mean(n, 0.0);
  double data = 0.0;
  for (const auto& p : step.per_model) {
    for (std::size_t i = 0; i < n; ++i) mean[i] += p[i];
    data += entropy(p);
  }
  for (double& v : mean) v /= static_cast<double>(m);

  double kl_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      kl_sum += kl_divergence(step.per_model[i], step.per_model[j]) +
                kl_divergence(step.per_model[j], step.per_model[i]);
    }
  }

  TokenMeasures out;
  out.total_entropy = entropy(mean);
  out.data_uncertainty = data / static_cast<double>(m);
  out.mi = out.total_entropy - out.data_uncertainty;
  out.epkl = kl_sum / static_cast<double>(m * (m - 1));
  out.rmi = out.epkl - out.mi;
  return out;
}

double seq_msp_ensemble(const GenerationRecord& record) {
  require_members(record, "ensemble_seq_msp");
  const double len = static_cast<double>(record.output_tokens.size());
  double sum = 0.0;
  for (const auto& t : record.ensemble_traces) sum += std::exp(member_log_prob(record, t) / len);
  return 1.0 - sum / static_cast<double>(record.ensemble_traces.size());
}

double seq_rmi(const GenerationRecord& record) {
  require_members(record, "ensemble_seq_rmi");
  std::vector<double> logs;
  logs.reserve(record.ensemble_traces.size());
  for (const auto& t : record.ensemble_traces) logs.push_back(member_log_prob(record, t));
  const double m = static_cast<double>(logs.size());
  const double peak = *std::max_element(logs.begin(), logs.end());
  double acc = 0.0;
  for (double l : logs) acc += std::exp(l - peak);
  const double log_mean = peak + std::log(acc / m);
  double out = 0.0;
  for (double l : logs) out += log_mean - l;
  return out / m;
}

double aggregate_token_measure(const GenerationRecord& record, TokenMeasure measure, bool average) {
  require_members(record, "ensemble token measure");
  const std::size_t steps = record.output_tokens.size();
  double sum = 0.0;
  std::vector<StepDistribution> members(record.ensemble_traces.size());
  for (std::size_t l = 0; l < steps; ++l) {
    for (std::size_t i = 0; i < members.size(); ++i) members[i] = record.ensemble_traces[i].steps[l];
    const TokenMeasures tm = token_measures(align_step(members));
    switch (measure) {
      case TokenMeasure::TotalEntropy: sum += tm.total_entropy; break;
      case TokenMeasure::DataUncertainty: sum += tm.data_uncertainty; break;
      case TokenMeasure::MutualInformation: sum += tm.mi; break;
      case TokenMeasure::Epkl: sum += tm.epkl; break;
      case TokenMeasure::Rmi: sum += tm.rmi; break;
    }
  }
  return average ? sum / static_cast<double>(steps) : sum;
}

}  // namespace lmue
