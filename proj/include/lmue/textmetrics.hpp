#pragma once

// Sentence-level overlap metrics used both as generation quality scores and
// as lexical similarity kernels between sampled responses.
//
// Tokenization: ASCII-lowercase, delete punctuation characters, split on
// whitespace. Every metric returns a value in [0,1]; overlap metrics return 0
// when either side is empty, jaccard(empty, empty) is 1.
//
// BLEU is sentence BLEU over 1..4-grams with uniform weights:
//   BLEU = BP * exp(1/4 * sum_n log p_n)
//   p_1  = clipped unigram matches / candidate unigrams
//   p_n  = (clipped n-gram matches + 1) / (candidate n-grams + 1),  n >= 2
//   BP   = 1 if c > r else exp(1 - r/c)
// so a candidate with no unigram match scores exactly 0.

#include <string>
#include <string_view>
#include <vector>

namespace lmue {

struct TokenizedText {
  std::vector<std::string> tokens;

  bool empty() const { return tokens.empty(); }
  std::size_t size() const { return tokens.size(); }
};

TokenizedText tokenize(std::string_view text);

double rouge1(const TokenizedText& candidate, const TokenizedText& reference);
double rougeL(const TokenizedText& candidate, const TokenizedText& reference);
double bleu(const TokenizedText& candidate, const TokenizedText& reference);
double jaccard(const TokenizedText& a, const TokenizedText& b);

/// Longest common subsequence length by dynamic programming.
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

enum class TextMetric { Rouge1, RougeL, Bleu, Jaccard };

double score_text(TextMetric metric, std::string_view candidate, std::string_view reference);
double score_text(TextMetric metric, const TokenizedText& candidate,
                  const TokenizedText& reference);

const char* to_string(TextMetric metric);
/// Accepts "rouge1", "rougeL", "bleu", "jaccard". Throws Input otherwise.
TextMetric text_metric_from_string(std::string_view name);

}  // namespace lmue
