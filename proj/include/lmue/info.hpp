#pragma once

// Information-based white-box estimators over a single model's token and
// sequence probabilities. All scores are oriented "higher = more uncertain".

#include "lmue/records.hpp"

namespace lmue {

// How to compute entropy from the top-k alternatives stored per step.
//  Renormalize:     divide alternative masses by their sum.
//  RemainderBucket: add one pseudo-outcome carrying the missing mass 1 - sum.
enum class Truncation { Renormalize, RemainderBucket };

struct InfoConfig {
  double cpmi_tau = 2.0;     // entropy threshold in nats
  double cpmi_lambda = 1.0;
  Truncation truncation_mode = Truncation::Renormalize;
};

/// Validates tau > 0 and lambda >= 0; throws Input.
void check(const InfoConfig& cfg);

/// Entropy (nats) of one step's alternative distribution.
double step_entropy(const TokenStep& step, Truncation mode);

/// 1 - P(y|x).
double msp(const GenerationRecord& record);

/// exp(-(1/L) log P(y|x)): the exponentiated average negative log-probability,
/// so a less likely output scores higher.
double perplexity(const GenerationRecord& record);

double mean_token_entropy(const GenerationRecord& record, const InfoConfig& cfg);

/// -(1/K) sum_k log P(y_k|x); with `normalized`, each log P is divided by the
/// sample length first.
double mc_sequence_entropy(const GenerationRecord& record, bool normalized);

/// (1/L) sum_l [log P(y_l|y_<l) - log P(y_l|y_<l, x)].
double pmi(const GenerationRecord& record);

/// -(1/L) sum_l log P(y_l|y_<l,x) + (lambda/L) sum_{l: H_l >= tau} log P(y_l|y_<l).
double cpmi(const GenerationRecord& record, const InfoConfig& cfg);

/// 1 - p_true.
double p_true_uncertainty(const GenerationRecord& record);

}  // namespace lmue
