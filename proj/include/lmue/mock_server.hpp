#pragma once

// Deterministic stand-in for a model provider, used by tests and the bundled
// benchmark. Serves the chat and legacy completions endpoints under /v1, an
// NLI provider at /nli and a quality scorer at /quality.

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <vector>

namespace lmue {

struct MockToken {
  std::string text;
  double logprob = 0.0;
  std::vector<std::pair<std::string, double>> top;  // top logprobs besides the token itself
};

struct MockNliScore {
  double entail = 0.0;
  double contra = 0.0;
  double neutral = 0.0;
};

struct MockConfig {
  // Greedy answer returned for every prompt.
  std::vector<MockToken> completion = {{"Paris", std::log(0.8), {{"Lyon", std::log(0.1)}}}};
  // Sampled answers; request seed s picks samples[s % size]. Empty repeats
  // the greedy text.
  std::vector<std::string> samples;
  double sample_token_logprob = -0.5;
  bool omit_logprobs = false;

  std::string api_key;  // when set, other bearer tokens get 401

  double p_true = 0.9;
  double p_false = 0.1;
  bool p_true_tokens_present = true;

  enum class Unconditional { EchoConditional, UniformVocab, Unsupported, Fail };
  Unconditional unconditional = Unconditional::EchoConditional;
  int vocab_size = 1000;

  // Default: entail = |words(a) ∩ words(b)| / |words(b)|, contra = 0.8 (1 - entail).
  std::function<MockNliScore(const std::string& premise, const std::string& hypothesis)> nli;

  int delay_ms = 0;
  int fail_status = 0;  // non-zero: every chat request answers with this status
};

class MockServer {
 public:
  explicit MockServer(MockConfig config = {});
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// Binds to host:port (0 picks a free port) and serves on a background
  /// thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

  int port() const { return port_; }
  std::string base_url() const;  // http://127.0.0.1:<port>

  int requests() const { return requests_.load(); }
  int max_in_flight() const { return max_in_flight_.load(); }
  std::vector<std::string> request_log() const;  // raw bodies, for scrubbing checks

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

/// The NLI rule used when MockConfig::nli is empty.
MockNliScore mock_overlap_nli(const std::string& premise, const std::string& hypothesis);

}  // namespace lmue
