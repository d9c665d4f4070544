// Deterministic mock model provider: chat and completions under /v1, NLI at
// /nli, quality scoring at /quality.

#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "lmue/errors.hpp"
#include "lmue/mock_server.hpp"

namespace {
lmue::MockServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic mock model provider"};
  std::string host = "127.0.0.1";
  int port = 8089;
  lmue::MockConfig config;
  std::string unconditional = "echo";
  app.add_option("--host", host, "Bind address");
  app.add_option("--port", port, "Port");
  app.add_option("--api-key", config.api_key, "Required bearer token");
  app.add_option("--samples", config.samples, "Sampled answers, picked by request seed");
  app.add_option("--p-true", config.p_true, "Mass on the True token");
  app.add_option("--p-false", config.p_false, "Mass on the False token");
  app.add_option("--unconditional", unconditional, "echo, uniform, unsupported or fail")
      ->check(CLI::IsMember({"echo", "uniform", "unsupported", "fail"}));
  app.add_option("--vocab", config.vocab_size, "Vocabulary size for uniform scoring");
  app.add_option("--delay-ms", config.delay_ms, "Per-request delay");
  CLI11_PARSE(app, argc, argv);

  using U = lmue::MockConfig::Unconditional;
  config.unconditional = unconditional == "echo"      ? U::EchoConditional
                         : unconditional == "uniform" ? U::UniformVocab
                         : unconditional == "fail"    ? U::Fail
                                                      : U::Unsupported;
  try {
    lmue::MockServer server(config);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "mock listening on " << host << ":" << port << '\n';
    server.listen(host, port);
  } catch (const lmue::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
