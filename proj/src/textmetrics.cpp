#include "lmue/textmetrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include "lmue/errors.hpp"

namespace lmue {

TokenizedText tokenize(std::string_view text) {
  TokenizedText out;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) out.tokens.push_back(std::move(current));
      current.clear();
    } else if (std::ispunct(c)) {
      continue;
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) out.tokens.push_back(std::move(current));
  return out;
}

namespace {

double f1(double matches, std::size_t cand_len, std::size_t ref_len) {
  if (matches <= 0.0 || cand_len == 0 || ref_len == 0) return 0.0;
  const double p = matches / static_cast<double>(cand_len);
  const double r = matches / static_cast<double>(ref_len);
  return 2.0 * p * r / (p + r);
}

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

int clipped_matches(const NgramCounts& cand, const NgramCounts& ref) {
  int m = 0;
  for (const auto& [gram, c] : cand) {
    if (auto it = ref.find(gram); it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

}  // namespace

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge1(const TokenizedText& candidate, const TokenizedText& reference) {
  const int m = clipped_matches(ngrams(candidate.tokens, 1), ngrams(reference.tokens, 1));
  return f1(m, candidate.size(), reference.size());
}

double rougeL(const TokenizedText& candidate, const TokenizedText& reference) {
  const auto lcs = lcs_length(candidate.tokens, reference.tokens);
  return f1(static_cast<double>(lcs), candidate.size(), reference.size());
}

double bleu(const TokenizedText& candidate, const TokenizedText& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cand = ngrams(candidate.tokens, n);
    const int matches = clipped_matches(cand, ngrams(reference.tokens, n));
    const std::size_t total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
    double p;
    if (n == 1) {
      if (matches == 0) return 0.0;
      p = static_cast<double>(matches) / static_cast<double>(total);
    } else {
      p = (matches + 1.0) / (static_cast<double>(total) + 1.0);
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return std::clamp(bp * std::exp(log_sum / 4.0), 0.0, 1.0);
}

double jaccard(const TokenizedText& a, const TokenizedText& b) {
  const std::set<std::string> sa(a.tokens.begin(), a.tokens.end());
  const std::set<std::string> sb(b.tokens.begin(), b.tokens.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double score_text(TextMetric metric, const TokenizedText& c, const TokenizedText& r) {
  switch (metric) {
    case TextMetric::Rouge1: return rouge1(c, r);
    case TextMetric::RougeL: return rougeL(c, r);
    case TextMetric::Bleu: return bleu(c, r);
    case TextMetric::Jaccard: return jaccard(c, r);
  }
  return 0.0;
}

double score_text(TextMetric metric, std::string_view candidate, std::string_view reference) {
  return score_text(metric, tokenize(candidate), tokenize(reference));
}

const char* to_string(TextMetric metric) {
  switch (metric) {
    case TextMetric::Rouge1: return "rouge1";
    case TextMetric::RougeL: return "rougeL";
    case TextMetric::Bleu: return "bleu";
    case TextMetric::Jaccard: return "jaccard";
  }
  return "?";
}

TextMetric text_metric_from_string(std::string_view name) {
  if (name == "rouge1") return TextMetric::Rouge1;
  if (name == "rougeL") return TextMetric::RougeL;
  if (name == "bleu") return TextMetric::Bleu;
  if (name == "jaccard") return TextMetric::Jaccard;
  raise(ErrorKind::Input, "unknown text metric '" + std::string(name) + "'");
}

}  // namespace lmue
