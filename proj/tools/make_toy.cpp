// Writes the bundled toy benchmark data: records.jsonl (evaluation records
// with every optional input), train.jsonl (records with embeddings for
// density fitting and HUQ calibration) and background.jsonl (bare
// embeddings). Output is a pure function of the fixed seed.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "lmue/errors.hpp"
#include "lmue/records.hpp"

namespace {

using namespace lmue;

const std::vector<std::string> kVocab = {
    "the",   "river", "stone", "paris", "blue",  "seven", "garden", "light", "north", "winter",
    "apple", "glass", "tower", "quiet", "ocean", "maple", "silver", "lamp",  "field", "cloud",
    "ember", "harbor", "violet", "canyon", "pine", "meadow", "copper", "raven", "delta", "frost"};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  // Portable uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 gen_;
};

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) s += (i ? " " : "") + words[i];
  return s;
}

std::vector<std::string> perturb(Rng& rng, const std::vector<std::string>& words, double keep) {
  std::vector<std::string> out;
  for (const auto& w : words) out.push_back(rng.uniform() < keep ? w : kVocab[rng.index(kVocab.size())]);
  return out;
}

TokenId word_id(const std::string& w) {
  for (std::size_t i = 0; i < kVocab.size(); ++i)
    if (kVocab[i] == w) return static_cast<TokenId>(i);
  raise(ErrorKind::Input, "word outside the toy vocabulary");
}

// Greedy steps: chosen token with probability p, two alternatives sharing
// part of the remaining mass.
std::vector<TokenStep> greedy_steps(Rng& rng, const std::vector<std::string>& words, double confidence,
                                    bool unconditional) {
  std::vector<TokenStep> steps;
  for (std::size_t l = 0; l < words.size(); ++l) {
    TokenStep s;
    s.token_id = word_id(words[l]);
    s.token_text = (l ? " " : "") + words[l];
    const double p = std::clamp(confidence + rng.uniform(-0.08, 0.08), 0.05, 0.97);
    s.logprob = std::log(p);
    const double rest = 1.0 - p;
    const TokenId a1 = (s.token_id + 1) % static_cast<TokenId>(kVocab.size());
    const TokenId a2 = (s.token_id + 2) % static_cast<TokenId>(kVocab.size());
    s.alternatives = {{s.token_id, s.logprob}, {a1, std::log(rest * 0.6)}, {a2, std::log(rest * 0.3)}};
    std::stable_sort(s.alternatives.begin(), s.alternatives.end(),
                     [](const Alternative& a, const Alternative& b) { return a.logprob > b.logprob; });
    if (unconditional) s.unconditional_logprob = std::log(rng.uniform(0.02, 0.9));
    steps.push_back(std::move(s));
  }
  return steps;
}

std::vector<double> embedding(Rng& rng, double shift) {
  std::vector<double> e(4);
  for (auto& x : e) x = rng.normal();
  e[0] += shift;
  e[1] += 0.5 * shift;
  return e;
}

GenerationRecord eval_record(Rng& rng, int i) {
  GenerationRecord r;
  r.id = "toy-" + std::to_string(i);
  std::vector<std::string> ref;
  const std::size_t len = 3 + rng.index(4);
  for (std::size_t k = 0; k < len; ++k) ref.push_back(kVocab[rng.index(kVocab.size())]);
  const double keep = rng.uniform();
  const auto out = perturb(rng, ref, keep);

  r.input_text = "Question " + std::to_string(i) + ": name the " + std::to_string(len) + " words.";
  r.reference_text = join(ref);
  r.output_text = join(out);
  r.output_tokens = greedy_steps(rng, out, 0.3 + 0.6 * keep, true);

  for (int k = 0; k < 5; ++k) {
    SampledOutput s;
    const auto words = perturb(rng, out, 0.4 + 0.55 * keep);
    s.text = join(words);
    for (std::size_t l = 0; l < words.size(); ++l) {
      TokenStep t;
      t.token_id = word_id(words[l]);
      t.token_text = (l ? " " : "") + words[l];
      t.logprob = std::log(rng.uniform(0.1, 0.95));
      s.total_logprob += t.logprob;
      s.tokens.push_back(std::move(t));
    }
    s.length = static_cast<int>(s.tokens.size());
    r.samples.push_back(std::move(s));
  }

  for (int m = 0; m < 3; ++m) {
    EnsembleTrace trace;
    trace.model_id = "member-" + std::to_string(m);
    for (const auto& step : r.output_tokens) {
      const double p = std::clamp(std::exp(step.logprob) + rng.uniform(-0.15, 0.15) * (1.0 - keep), 0.02, 0.96);
      const double a = (1.0 - p) * rng.uniform(0.3, 0.7);
      StepDistribution d;
      for (const auto& alt : step.alternatives) {
        if (alt.token_id == step.token_id) d.emplace_back(alt.token_id, p);
      }
      d.emplace_back(step.alternatives[step.alternatives[0].token_id == step.token_id ? 1 : 0].token_id, a);
      d.emplace_back(step.alternatives[2].token_id == step.token_id ? step.alternatives[1].token_id
                                                                     : step.alternatives[2].token_id,
                     1.0 - p - a);
      trace.steps.push_back(std::move(d));
    }
    r.ensemble_traces.push_back(std::move(trace));
  }

  r.embedding = embedding(rng, 3.0 * (1.0 - keep));
  r.p_true = std::clamp(0.15 + 0.7 * keep + rng.uniform(-0.1, 0.1), 0.01, 0.99);
  return r;
}

GenerationRecord train_record(Rng& rng, int i) {
  GenerationRecord r;
  r.id = "train-" + std::to_string(i);
  std::vector<std::string> words;
  const std::size_t len = 3 + rng.index(4);
  for (std::size_t k = 0; k < len; ++k) words.push_back(kVocab[rng.index(kVocab.size())]);
  const double keep = rng.uniform(0.5, 1.0);
  r.input_text = "Training question " + std::to_string(i);
  r.output_text = join(words);
  r.reference_text = r.output_text;
  r.output_tokens = greedy_steps(rng, words, 0.3 + 0.6 * keep, false);
  r.embedding = embedding(rng, 3.0 * (1.0 - keep));
  return r;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_toy <output-dir>\n";
    return 1;
  }
  try {
    const std::filesystem::path dir = argv[1];
    std::filesystem::create_directories(dir);
    Rng rng(20240817);

    std::vector<std::string> eval, train, background;
    for (int i = 0; i < 50; ++i) {
      const auto r = eval_record(rng, i);
      const auto report = validate_record(r);
      if (!report.empty()) raise(ErrorKind::Validation, r.id + ": " + report.front().message);
      eval.push_back(serialize_record_line(r));
    }
    for (int i = 0; i < 60; ++i) train.push_back(serialize_record_line(train_record(rng, i)));
    for (int i = 0; i < 60; ++i) {
      nlohmann::json e = embedding(rng, 0.0);
      for (auto& x : e) x = x.get<double>() * 2.0;
      background.push_back(e.dump());
    }
    write_lines(dir / "records.jsonl", eval);
    write_lines(dir / "train.jsonl", train);
    write_lines(dir / "background.jsonl", background);
  } catch (const lmue::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
