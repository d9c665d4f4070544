#pragma once

// Ensemble uncertainty over M aligned member traces. Every member
// distribution is floored at kEpsilonFloor and renormalized on a shared
// support before use, so every KL term is finite.

#include <vector>

#include "lmue/records.hpp"

namespace lmue {

inline constexpr double kEpsilonFloor = 1e-12;

struct StepDistributionSet {
  std::vector<TokenId> support;
  std::vector<std::vector<double>> per_model;  // [member][support index]
};

struct TokenMeasures {
  double total_entropy = 0.0;     // H(mean of members)
  double data_uncertainty = 0.0;  // mean member entropy
  double mi = 0.0;                // total - data
  double epkl = 0.0;              // mean KL over ordered member pairs
  double rmi = 0.0;               // epkl - mi
};

enum class TokenMeasure { TotalEntropy, DataUncertainty, MutualInformation, Epkl, Rmi };

const char* to_string(TokenMeasure m);

/// Aligns the members' distributions at one step onto the union support.
StepDistributionSet align_step(const std::vector<StepDistribution>& members);

/// Throws Alignment if member vectors differ in length from the support.
TokenMeasures token_measures(const StepDistributionSet& step);

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);
double entropy(const std::vector<double>& p);

/// 1 - (1/M) sum_i Pbar_i, Pbar_i the length-normalized probability of the
/// greedy output under member i.
double seq_msp_ensemble(const GenerationRecord& record);

/// (1/M) sum_i log(P(y|x) / P(y|x, member i)), P(y|x) the member mean.
double seq_rmi(const GenerationRecord& record);

/// Sum over steps of the chosen token measure; `average` divides by L.
double aggregate_token_measure(const GenerationRecord& record, TokenMeasure measure,
                               bool average = false);

}  // namespace lmue
