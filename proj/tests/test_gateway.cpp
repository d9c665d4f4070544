#include <cmath>
#include <thread>

#include "doctest.h"
#include "lmue/errors.hpp"
#include "lmue/gateway.hpp"
#include "lmue/info.hpp"
#include "lmue/mock_server.hpp"
#include "support.hpp"

using namespace lmue;
using namespace std::chrono_literals;

namespace {

RetryPolicy fast_retry() { return {3, 1ms, 4ms}; }

EndpointClient client_for(const MockServer& mock, const std::string& key = "", int parallel = 4) {
  ModelEndpoint ep;
  ep.base_url = mock.base_url() + "/v1";
  ep.model_name = "mock";
  ep.api_key = key;
  ep.max_parallel = parallel;
  ep.timeout = 5000ms;
  return EndpointClient(ep, fast_retry());
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Usage;
}

MockConfig two_tokens() {
  MockConfig cfg;
  cfg.completion = {{"Par", -0.1, {{"Lon", -2.5}}}, {"is", -0.2, {}}};
  return cfg;
}

}  // namespace

TEST_CASE("greedy record from the chat endpoint") {
  MockServer mock(two_tokens());
  mock.start();
  const auto client = client_for(mock);
  GenerationParams p;
  const auto r = generate_record(client, p, "capital of France?", "q1");
  CHECK(r.id == "q1");
  CHECK(r.output_text == "Paris");
  REQUIRE(r.output_tokens.size() == 2);
  CHECK(greedy_logprob(r) == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK(r.samples.empty());
  CHECK(r.output_tokens[0].alternatives.size() == 2);
  CHECK(r.output_tokens[0].alternatives[0].token_id == r.output_tokens[0].token_id);
  CHECK(validate_record(r).empty());
}

TEST_CASE("sampling is seeded and parallel") {
  MockConfig cfg;
  cfg.samples = {"paris", "lyon", "paris france", "nice"};
  cfg.delay_ms = 30;
  MockServer mock(cfg);
  mock.start();
  const auto client = client_for(mock, "", 2);
  GenerationParams p;
  p.num_samples = 6;
  p.seed = 1;
  const auto r = generate_record(client, p, "q");
  REQUIRE(r.samples.size() == 6);
  CHECK(r.samples[0].text == "lyon");
  CHECK(r.samples[1].text == "paris france");
  CHECK(r.samples[1].length == 2);
  CHECK(r.samples[1].total_logprob == doctest::Approx(-1.0));
  CHECK(mock.max_in_flight() <= 2);
  CHECK(mock.max_in_flight() >= 1);
  CHECK(generate_record(client, p, "q").samples == r.samples);
}

TEST_CASE("missing logprobs are a capability error") {
  MockConfig cfg;
  cfg.omit_logprobs = true;
  MockServer mock(cfg);
  mock.start();
  const auto client = client_for(mock);
  CHECK(kind_of([&] { generate_record(client, {}, "q"); }) == ErrorKind::Capability);
  GenerationParams p;
  p.require_logprobs = false;
  CHECK(generate_record(client, p, "q").output_text == "Paris");
}

TEST_CASE("auth failures and key scrubbing") {
  MockConfig cfg;
  cfg.api_key = "sk-secret-123";
  MockServer mock(cfg);
  mock.start();
  CHECK(kind_of([&] { generate_record(client_for(mock, "sk-wrong"), {}, "q"); }) == ErrorKind::Auth);
  CHECK(generate_record(client_for(mock, "sk-secret-123"), {}, "q").output_text == "Paris");
  const auto c = client_for(mock, "sk-secret-123");
  CHECK(c.scrub("key=sk-secret-123!") == "key=***!");
  for (const auto& body : mock.request_log()) CHECK(body.find("sk-secret-123") == std::string::npos);
}

TEST_CASE("server errors are retried then surface as transport errors") {
  MockConfig cfg;
  cfg.fail_status = 503;
  MockServer mock(cfg);
  mock.start();
  CHECK(kind_of([&] { generate_record(client_for(mock), {}, "q"); }) == ErrorKind::Transport);
  CHECK(mock.requests() == 3);

  MockConfig bad;
  bad.fail_status = 418;
  MockServer mock2(bad);
  mock2.start();
  CHECK(kind_of([&] { generate_record(client_for(mock2), {}, "q"); }) == ErrorKind::Transport);
  CHECK(mock2.requests() == 1);
}

TEST_CASE("connection refused") {
  ModelEndpoint ep;
  ep.base_url = "http://127.0.0.1:1/v1";
  EndpointClient c(ep, fast_retry());
  CHECK(kind_of([&] { generate_record(c, {}, "q"); }) == ErrorKind::Transport);
}

TEST_CASE("p(True) flow") {
  CHECK(p_true_prompt("Q?", "A") == "Question: Q?\nProposed Answer: A\nIs the proposed answer true? Answer True or False:");
  {
    MockServer mock;
    mock.start();
    CHECK(p_true_flow(client_for(mock), "Q?", "Paris") == doctest::Approx(0.9).epsilon(1e-9));
  }
  {
    MockConfig cfg;
    cfg.p_true = 0.4;
    cfg.p_false = 0.4;
    MockServer mock(cfg);
    mock.start();
    CHECK(p_true_flow(client_for(mock), "Q?", "Paris") == doctest::Approx(0.5).epsilon(1e-9));
  }
  {
    MockConfig cfg;
    cfg.p_true_tokens_present = false;
    MockServer mock(cfg);
    mock.start();
    CHECK(kind_of([&] { p_true_flow(client_for(mock), "Q?", "Paris"); }) == ErrorKind::Indeterminate);
  }
}

TEST_CASE("unconditional pass") {
  using U = MockConfig::Unconditional;
  MockConfig cfg = two_tokens();
  MockServer echo(cfg);
  echo.start();
  const auto client = client_for(echo);
  const auto r = generate_record(client, {}, "q");
  const auto scored = unconditional_pass(client, r);
  CHECK_FALSE(r.output_tokens[0].unconditional_logprob);
  CHECK(pmi(scored) == doctest::Approx(0.0).epsilon(1e-12));

  cfg.unconditional = U::UniformVocab;
  cfg.vocab_size = 50;
  MockServer uniform(cfg);
  uniform.start();
  const auto u = unconditional_pass(client_for(uniform), r, "Answer:");
  for (const auto& s : u.output_tokens) CHECK(*s.unconditional_logprob == doctest::Approx(-std::log(50.0)));

  cfg.unconditional = U::Unsupported;
  MockServer none(cfg);
  none.start();
  CHECK(kind_of([&] { unconditional_pass(client_for(none), r); }) == ErrorKind::Capability);
}

TEST_CASE("nli pairwise") {
  MockServer mock;
  mock.start();
  ModelEndpoint ep;
  ep.base_url = mock.base_url() + "/nli";
  EndpointClient nli(ep, fast_retry());
  const std::vector<std::string> texts{"paris", "paris france", "lyon"};
  const auto s = nli_pairwise(nli, texts, 2);
  REQUIRE(s.size() == 3);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(s.entail(i, i) == 1.0);
    CHECK(s.contra(i, i) == 0.0);
  }
  CHECK(s.entail(1, 0) == doctest::Approx(1.0));  // "paris france" entails "paris"
  CHECK(s.entail(0, 1) == doctest::Approx(0.5));
  CHECK(s.contra(0, 2) == doctest::Approx(0.8));
  CHECK(kind_of([&] { nli_pairwise(nli, {"one"}); }) == ErrorKind::InsufficientData);

  MockConfig bad;
  bad.nli = [](const std::string&, const std::string&) { return MockNliScore{1.5, 0.0, 0.0}; };
  MockServer badmock(bad);
  badmock.start();
  ep.base_url = badmock.base_url() + "/nli";
  EndpointClient badnli(ep, fast_retry());
  try {
    nli_pairwise(badnli, texts);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Validation);
    CHECK(std::string(e.what()).find("pair (") != std::string::npos);
  }
}

TEST_CASE("external quality scorer") {
  MockServer mock;
  mock.start();
  ModelEndpoint ep;
  ep.base_url = mock.base_url() + "/quality";
  const auto scorer = external_quality_scorer(std::make_shared<EndpointClient>(ep, fast_retry()));
  const auto q = scorer({{"a b c", "a c"}, {"x", "y"}});
  REQUIRE(q.size() == 2);
  CHECK(q[0] == doctest::Approx(0.8));
  CHECK(q[1] == 0.0);
}

TEST_CASE("request limiter bounds concurrency") {
  RequestLimiter lim(2);
  std::atomic<int> now{0}, peak{0};
  std::vector<std::thread> ts;
  for (int i = 0; i < 8; ++i) {
    ts.emplace_back([&] {
      lim.acquire();
      const int n = ++now;
      int p = peak.load();
      while (n > p && !peak.compare_exchange_weak(p, n)) {
      }
      std::this_thread::sleep_for(5ms);
      --now;
      lim.release();
    });
  }
  for (auto& t : ts) t.join();
  CHECK(peak.load() <= 2);
}
