#include "lmue/mock_server.hpp"

#include <algorithm>
#include <chrono>
#include <mutex>
#include <set>

#include "httplib.h"
#include "json.hpp"
#include "lmue/errors.hpp"
#include "lmue/textmetrics.hpp"

namespace lmue {

using nlohmann::json;

MockNliScore mock_overlap_nli(const std::string& premise, const std::string& hypothesis) {
  const auto p = tokenize(premise).tokens;
  const auto h = tokenize(hypothesis).tokens;
  const std::set<std::string> pw(p.begin(), p.end());
  const std::set<std::string> hw(h.begin(), h.end());
  double entail = 1.0;
  if (!hw.empty()) {
    std::size_t common = 0;
    for (const auto& w : hw) common += pw.count(w);
    entail = static_cast<double>(common) / static_cast<double>(hw.size());
  }
  const double contra = 0.8 * (1.0 - entail);
  return {entail, contra, std::max(0.0, 1.0 - entail - contra)};
}

struct MockServer::Impl {
  MockConfig config;
  httplib::Server server;
  mutable std::mutex log_mu;
  std::vector<std::string> log;
};

namespace {

json token_entry(const std::string& text, double logprob, const std::vector<std::pair<std::string, double>>& top,
                 int limit) {
  json tops = json::array({{{"token", text}, {"logprob", logprob}}});
  for (const auto& [t, lp] : top) tops.push_back({{"token", t}, {"logprob", lp}});
  std::stable_sort(tops.begin(), tops.end(),
                   [](const json& a, const json& b) { return a["logprob"].get<double>() > b["logprob"].get<double>(); });
  if (limit >= 0 && static_cast<int>(tops.size()) > limit) tops.erase(tops.begin() + limit, tops.end());
  return {{"token", text}, {"logprob", logprob}, {"top_logprobs", tops}};
}

// "a b c" -> "a", " b", " c"
std::vector<std::string> split_keep_space(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == ' ' && !cur.empty() && cur != " ") {
      out.push_back(cur);
      cur.clear();
    }
    cur += ch;
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

json chat_response(const std::string& content, json logprobs) {
  return {{"id", "mock"},
          {"object", "chat.completion"},
          {"choices", json::array({{{"index", 0},
                                    {"message", {{"role", "assistant"}, {"content", content}}},
                                    {"logprobs", std::move(logprobs)},
                                    {"finish_reason", "stop"}}})}};
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

MockServer::MockServer(MockConfig config) : impl_(std::make_unique<Impl>()) {
  impl_->config = std::move(config);
  if (!impl_->config.nli) impl_->config.nli = mock_overlap_nli;
  auto& svr = impl_->server;
  svr.new_task_queue = [] { return new httplib::ThreadPool(32); };

  // Wraps a handler with request accounting, logging, auth and delay.
  auto wrap = [this](auto handler) {
    return [this, handler](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      const int now = ++in_flight_;
      int seen = max_in_flight_.load();
      while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
      }
      {
        std::lock_guard lock(impl_->log_mu);
        impl_->log.push_back(req.body);
      }
      const auto& cfg = impl_->config;
      if (cfg.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(cfg.delay_ms));
      if (!cfg.api_key.empty() && req.get_header_value("Authorization") != "Bearer " + cfg.api_key) {
        reply(res, 401, {{"error", {{"message", "invalid api key"}}}});
      } else {
        try {
          handler(json::parse(req.body), res);
        } catch (const std::exception& e) {
          reply(res, 400, {{"error", {{"message", e.what()}}}});
        }
      }
      --in_flight_;
    };
  };

  svr.Post("/v1/chat/completions", wrap([this](const json& body, httplib::Response& res) {
             const auto& cfg = impl_->config;
             if (cfg.fail_status != 0) {
               reply(res, cfg.fail_status, {{"error", {{"message", "mock failure"}}}});
               return;
             }
             const std::string prompt = body.at("messages").back().at("content").get<std::string>();
             const bool want_logprobs = body.value("logprobs", false) && !cfg.omit_logprobs;
             const int limit = body.value("top_logprobs", 0);

             static const std::string kPTrueTail = "Answer True or False:";
             if (prompt.size() >= kPTrueTail.size() &&
                 prompt.compare(prompt.size() - kPTrueTail.size(), kPTrueTail.size(), kPTrueTail) == 0) {
               std::vector<std::pair<std::string, double>> options;
               if (cfg.p_true_tokens_present) {
                 if (cfg.p_true > 0) options.emplace_back("True", std::log(cfg.p_true));
                 if (cfg.p_false > 0) options.emplace_back("False", std::log(cfg.p_false));
               } else {
                 options = {{"Maybe", std::log(0.6)}, {"Unsure", std::log(0.3)}};
               }
               std::stable_sort(options.begin(), options.end(),
                                [](const auto& a, const auto& b) { return a.second > b.second; });
               const auto first = options.front();
               options.erase(options.begin());
               json lp = want_logprobs ? json{{"content", json::array({token_entry(first.first, first.second, options,
                                                                                   limit)})}}
                                       : json(nullptr);
               reply(res, 200, chat_response(first.first, std::move(lp)));
               return;
             }

             const bool sampled = body.value("temperature", 0.0) > 0.0 && body.contains("seed");
             std::string content;
             json entries = json::array();
             if (sampled) {
               std::string text;
               if (cfg.samples.empty()) {
                 for (const auto& t : cfg.completion) text += t.text;
               } else {
                 text = cfg.samples[body.at("seed").get<std::uint64_t>() % cfg.samples.size()];
               }
               content = text;
               for (const auto& t : split_keep_space(text)) {
                 entries.push_back(token_entry(t, cfg.sample_token_logprob, {}, limit));
               }
             } else {
               for (const auto& t : cfg.completion) {
                 content += t.text;
                 entries.push_back(token_entry(t.text, t.logprob, t.top, limit));
               }
             }
             reply(res, 200, chat_response(content, want_logprobs ? json{{"content", entries}} : json(nullptr)));
           }));

  svr.Post("/v1/completions", wrap([this](const json& body, httplib::Response& res) {
             const auto& cfg = impl_->config;
             using U = MockConfig::Unconditional;
             if (cfg.unconditional == U::Unsupported) {
               reply(res, 404, {{"error", {{"message", "completions endpoint not supported"}}}});
               return;
             }
             if (cfg.unconditional == U::Fail) {
               reply(res, 503, {{"error", {{"message", "mock failure"}}}});
               return;
             }
             const std::string prompt = body.at("prompt").get<std::string>();
             std::string greedy;
             for (const auto& t : cfg.completion) greedy += t.text;
             json tokens = json::array();
             json lps = json::array();
             if (prompt.size() >= greedy.size() &&
                 prompt.compare(prompt.size() - greedy.size(), greedy.size(), greedy) == 0) {
               const std::string prefix = prompt.substr(0, prompt.size() - greedy.size());
               if (!prefix.empty()) {
                 tokens.push_back(prefix);
                 lps.push_back(nullptr);
               }
               for (const auto& t : cfg.completion) {
                 tokens.push_back(t.text);
                 lps.push_back(cfg.unconditional == U::UniformVocab ? -std::log(static_cast<double>(cfg.vocab_size))
                                                                    : t.logprob);
               }
             } else {
               tokens.push_back(prompt);
               lps.push_back(nullptr);
             }
             reply(res, 200,
                   {{"id", "mock"},
                    {"object", "text_completion"},
                    {"choices", json::array({{{"index", 0},
                                              {"text", prompt},
                                              {"logprobs", {{"tokens", tokens}, {"token_logprobs", lps}}},
                                              {"finish_reason", "length"}}})}});
           }));

  svr.Post("/nli", wrap([this](const json& body, httplib::Response& res) {
             json scores = json::array();
             for (const auto& p : body.at("pairs")) {
               const auto s = impl_->config.nli(p.at(0).get<std::string>(), p.at(1).get<std::string>());
               scores.push_back({{"entail", s.entail}, {"contra", s.contra}, {"neutral", s.neutral}});
             }
             reply(res, 200, {{"scores", scores}});
           }));

  svr.Post("/quality", wrap([](const json& body, httplib::Response& res) {
             json scores = json::array();
             for (const auto& p : body.at("pairs")) {
               scores.push_back(score_text(TextMetric::RougeL, p.at(0).get<std::string>(), p.at(1).get<std::string>()));
             }
             reply(res, 200, {{"scores", scores}});
           }));

  svr.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"requests", requests_.load()}, {"max_in_flight", max_in_flight_.load()}});
  });
}

MockServer::~MockServer() { stop(); }

int MockServer::start(const std::string& host, int port) {
  auto& svr = impl_->server;
  if (port == 0) {
    port_ = svr.bind_to_any_port(host);
  } else {
    port_ = svr.bind_to_port(host, port) ? port : -1;
  }
  if (port_ <= 0) raise(ErrorKind::Io, "mock server cannot bind " + host);
  thread_ = std::thread([&svr] { svr.listen_after_bind(); });
  svr.wait_until_ready();
  return port_;
}

void MockServer::listen(const std::string& host, int port) {
  port_ = port;
  if (!impl_->server.listen(host, port)) raise(ErrorKind::Io, "mock server cannot listen on port " + std::to_string(port));
}

void MockServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

std::vector<std::string> MockServer::request_log() const {
  std::lock_guard lock(impl_->log_mu);
  return impl_->log;
}

}  // namespace lmue
