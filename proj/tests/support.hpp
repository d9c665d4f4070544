#pragma once

// Record builders and small oracles shared by the unit tests.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "lmue/records.hpp"

namespace testing {

using namespace lmue;

// Step whose alternatives are (id, probability) pairs; the chosen token is id 0
// with probability p0 unless listed.
inline TokenStep step(double logprob, std::vector<std::pair<TokenId, double>> alts = {}, TokenId id = 0) {
  TokenStep s;
  s.token_id = id;
  s.token_text = "t" + std::to_string(id);
  s.logprob = logprob;
  for (auto [tid, p] : alts) s.alternatives.push_back({tid, std::log(p)});
  return s;
}

inline GenerationRecord record_with_logprobs(const std::vector<double>& logprobs, std::string id = "r") {
  GenerationRecord r;
  r.id = std::move(id);
  r.input_text = "q";
  r.output_text = "a";
  for (std::size_t l = 0; l < logprobs.size(); ++l) {
    auto s = step(logprobs[l], {}, static_cast<TokenId>(l));
    r.output_tokens.push_back(s);
  }
  return r;
}

inline SampledOutput sample(std::string text, double total_logprob, int length = 1) {
  SampledOutput s;
  s.text = std::move(text);
  s.total_logprob = total_logprob;
  s.length = length;
  return s;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("lmue_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path file(const std::string& name, const std::string& content) const {
    const auto p = path / name;
    std::ofstream(p, std::ios::binary) << content;
    return p;
  }
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
