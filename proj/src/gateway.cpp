#include "lmue/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <regex>
#include <thread>

#include "httplib.h"
#include "lmue/errors.hpp"

namespace lmue {

using nlohmann::json;

void RequestLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return free_ > 0; });
  --free_;
}

void RequestLimiter::release() {
  {
    std::lock_guard lock(mu_);
    ++free_;
  }
  cv_.notify_one();
}

namespace {

struct SlotGuard {
  RequestLimiter& limiter;
  explicit SlotGuard(RequestLimiter& l) : limiter(l) { limiter.acquire(); }
  ~SlotGuard() { limiter.release(); }
};

std::string clip(const std::string& s, std::size_t n = 200) {
  return s.size() <= n ? s : s.substr(0, n) + "...";
}

double parse_retry_after(const httplib::Result& res) {
  if (!res || !res->has_header("Retry-After")) return -1.0;
  try {
    return std::stod(res->get_header_value("Retry-After"));
  } catch (...) {
    return -1.0;
  }
}

}  // namespace

EndpointClient::EndpointClient(ModelEndpoint endpoint, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), retry_(retry),
      limiter_(std::make_shared<RequestLimiter>(endpoint_.max_parallel)) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint_.base_url, m, url)) {
    raise(ErrorKind::Usage, "invalid endpoint url '" + endpoint_.base_url + "'");
  }
  origin_ = m[1].str();
  prefix_ = m[2].str();
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  if (endpoint_.max_parallel < 1) raise(ErrorKind::Usage, "max_parallel must be at least 1");
}

std::string EndpointClient::scrub(std::string text) const {
  const auto& key = endpoint_.api_key;
  if (key.empty()) return text;
  for (std::size_t pos = 0; (pos = text.find(key, pos)) != std::string::npos;) {
    text.replace(pos, key.size(), "***");
    pos += 3;
  }
  return text;
}

json EndpointClient::post(const std::string& path, const json& body) const {
  const std::string full_path = prefix_ + path;
  const std::string payload = body.dump();
  httplib::Headers headers;
  if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

  const auto secs = endpoint_.timeout.count() / 1000;
  const auto usecs = (endpoint_.timeout.count() % 1000) * 1000;
  std::string last_error;
  int last_status = 0;
  double last_retry_after = -1.0;

  for (int attempt = 0; attempt < std::max(1, retry_.attempts); ++attempt) {
    if (attempt > 0) {
      auto delay = retry_.base_delay * (1 << (attempt - 1));
      if (last_retry_after >= 0.0) {
        delay = std::max(delay, std::chrono::milliseconds(static_cast<long>(last_retry_after * 1000.0)));
      }
      std::this_thread::sleep_for(std::min(delay, retry_.max_delay));
    }
    httplib::Result res;
    {
      SlotGuard slot(*limiter_);
      httplib::Client cli(origin_);
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      res = cli.Post(full_path, headers, payload, "application/json");
    }
    if (!res) {
      last_error = "request to " + origin_ + full_path + " failed: " + httplib::to_string(res.error());
      last_status = 0;
      last_retry_after = -1.0;
      continue;
    }
    const int status = res->status;
    if (status >= 200 && status < 300) {
      try {
        return json::parse(res->body);
      } catch (const json::exception&) {
        throw TransportError(scrub("malformed JSON from " + origin_ + full_path + ": " + clip(res->body)),
                             status);
      }
    }
    const std::string detail =
        scrub("HTTP " + std::to_string(status) + " from " + origin_ + full_path + ": " + clip(res->body));
    if (status == 401 || status == 403) raise(ErrorKind::Auth, detail);
    if (status >= 400 && status < 500) throw TransportError(detail, status, parse_retry_after(res));
    last_error = detail;
    last_status = status;
    last_retry_after = parse_retry_after(res);
  }
  throw TransportError(scrub(last_error), last_status, last_retry_after);
}

// ---------------------------------------------------------------------------

namespace {

class TokenInterner {
 public:
  TokenId id(const std::string& text) {
    auto [it, inserted] = ids_.try_emplace(text, static_cast<TokenId>(ids_.size()));
    return it->second;
  }

 private:
  std::map<std::string, TokenId> ids_;
};

const json& require(const json& j, const char* key, const char* what) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    raise(ErrorKind::Capability, std::string("response lacks ") + what);
  }
  return *it;
}

json chat_body(const EndpointClient& client, const std::string& prompt, int max_tokens, double temperature,
               double top_p, int top_logprobs) {
  json body = {{"model", client.endpoint().model_name},
               {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
               {"max_tokens", max_tokens},
               {"temperature", temperature},
               {"top_p", top_p}};
  if (top_logprobs > 0) {
    body["logprobs"] = true;
    body["top_logprobs"] = top_logprobs;
  }
  return body;
}

struct ChatAnswer {
  std::string text;
  std::vector<TokenStep> steps;
  bool has_logprobs = false;
};

ChatAnswer parse_chat(const json& response, TokenInterner& interner, bool require_logprobs) {
  ChatAnswer out;
  try {
    const auto& choices = require(response, "choices", "choices");
    if (!choices.is_array() || choices.empty()) raise(ErrorKind::Capability, "response has no choices");
    const auto& choice = choices.at(0);
    const auto& message = require(choice, "message", "choices[0].message");
    if (auto c = message.find("content"); c != message.end() && c->is_string()) out.text = c->get<std::string>();

    auto lp = choice.find("logprobs");
    if (lp == choice.end() || lp->is_null() || !lp->contains("content") || (*lp)["content"].is_null()) {
      if (require_logprobs) raise(ErrorKind::Capability, "response lacks choices[0].logprobs.content");
      return out;
    }
    out.has_logprobs = true;
    for (const auto& t : (*lp)["content"]) {
      TokenStep step;
      step.token_text = t.at("token").get<std::string>();
      step.logprob = t.at("logprob").get<double>();
      step.token_id = interner.id(step.token_text);
      std::vector<Alternative> alts;
      std::vector<TokenId> seen;
      if (auto top = t.find("top_logprobs"); top != t.end() && top->is_array()) {
        for (const auto& a : *top) {
          const TokenId id = interner.id(a.at("token").get<std::string>());
          if (std::find(seen.begin(), seen.end(), id) != seen.end()) continue;
          seen.push_back(id);
          alts.push_back({id, id == step.token_id ? step.logprob : a.at("logprob").get<double>()});
        }
      }
      if (!alts.empty() && std::find(seen.begin(), seen.end(), step.token_id) == seen.end()) {
        alts.push_back({step.token_id, step.logprob});
      }
      std::stable_sort(alts.begin(), alts.end(),
                       [](const Alternative& a, const Alternative& b) { return a.logprob > b.logprob; });
      step.alternatives = std::move(alts);
      out.steps.push_back(std::move(step));
    }
  } catch (const json::exception& e) {
    raise(ErrorKind::Capability, std::string("unexpected response shape: ") + e.what());
  }
  return out;
}

}  // namespace

GenerationRecord generate_record(const EndpointClient& client, const GenerationParams& params,
                                 const std::string& input_text, const std::string& id) {
  if (params.num_samples < 0) raise(ErrorKind::Usage, "num_samples must be >= 0");
  if (params.logprobs_k < 1) raise(ErrorKind::Usage, "logprobs_k must be >= 1");
  if (!(params.temperature >= 0.0)) raise(ErrorKind::Usage, "temperature must be >= 0");
  if (!(params.top_p > 0.0 && params.top_p <= 1.0)) raise(ErrorKind::Usage, "top_p must be in (0, 1]");

  // Sampled answers run concurrently with the greedy one; the limiter bounds
  // the actual number of requests in flight.
  std::vector<std::future<json>> sample_futures;
  for (int k = 0; k < params.num_samples; ++k) {
    json body = chat_body(client, input_text, params.max_new_tokens, params.temperature, params.top_p,
                          params.require_logprobs ? 1 : 0);
    body["seed"] = params.seed + static_cast<std::uint64_t>(k);
    sample_futures.push_back(
        std::async(std::launch::async, [&client, body = std::move(body)] { return client.post("/chat/completions", body); }));
  }

  json greedy_response;
  std::exception_ptr failure;
  try {
    greedy_response = client.post("/chat/completions",
                                  chat_body(client, input_text, params.max_new_tokens, 0.0, 1.0, params.logprobs_k));
  } catch (...) {
    failure = std::current_exception();
  }
  std::vector<json> sample_responses;
  for (auto& f : sample_futures) {
    try {
      sample_responses.push_back(f.get());
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  TokenInterner interner;
  GenerationRecord record;
  record.id = id;
  record.input_text = input_text;
  auto greedy = parse_chat(greedy_response, interner, params.require_logprobs);
  record.output_text = greedy.text;
  record.output_tokens = std::move(greedy.steps);

  for (const auto& response : sample_responses) {
    auto answer = parse_chat(response, interner, params.require_logprobs);
    SampledOutput s;
    s.text = answer.text;
    if (answer.has_logprobs && !answer.steps.empty()) {
      for (auto& step : answer.steps) step.alternatives.clear();
      s.tokens = std::move(answer.steps);
      for (const auto& step : s.tokens) s.total_logprob += step.logprob;
      s.length = static_cast<int>(s.tokens.size());
    }
    record.samples.push_back(std::move(s));
  }

  const auto report = validate_record(record);
  if (!report.empty()) {
    raise(ErrorKind::Validation, "generated record violates '" + report.front().field + "': " +
                                     report.front().message);
  }
  return record;
}

std::string p_true_prompt(const std::string& input_text, const std::string& answer_text) {
  return "Question: " + input_text + "\nProposed Answer: " + answer_text +
         "\nIs the proposed answer true? Answer True or False:";
}

double p_true_flow(const EndpointClient& client, const std::string& input_text, const std::string& answer_text,
                   const PTrueTokens& tokens) {
  const json response = client.post("/chat/completions", chat_body(client, p_true_prompt(input_text, answer_text),
                                                                   1, 0.0, 1.0, 20));
  double yes = 0.0;
  double no = 0.0;
  try {
    const auto& content = response.at("choices").at(0).at("logprobs").at("content");
    if (content.empty()) raise(ErrorKind::Indeterminate, "p(True): empty answer");
    const auto& first = content.at(0);
    auto add = [&](const std::string& tok, double lp) {
      if (std::find(tokens.affirmative.begin(), tokens.affirmative.end(), tok) != tokens.affirmative.end()) {
        yes += std::exp(lp);
      } else if (std::find(tokens.negative.begin(), tokens.negative.end(), tok) != tokens.negative.end()) {
        no += std::exp(lp);
      }
    };
    if (auto top = first.find("top_logprobs"); top != first.end() && top->is_array() && !top->empty()) {
      for (const auto& a : *top) add(a.at("token").get<std::string>(), a.at("logprob").get<double>());
    } else {
      add(first.at("token").get<std::string>(), first.at("logprob").get<double>());
    }
  } catch (const json::exception& e) {
    raise(ErrorKind::Capability, std::string("p(True): response lacks logprobs: ") + e.what());
  }
  if (yes + no <= 0.0) raise(ErrorKind::Indeterminate, "p(True): neither option token among the top logprobs");
  return yes / (yes + no);
}

GenerationRecord unconditional_pass(const EndpointClient& client, const GenerationRecord& record,
                                    const std::string& context) {
  if (record.output_tokens.empty()) raise(ErrorKind::UnavailableInput, "unconditional pass: record has no output tokens");
  std::string text = context;
  for (const auto& step : record.output_tokens) text += step.token_text;
  const json body = {{"model", client.endpoint().model_name}, {"prompt", text}, {"max_tokens", 0},
                     {"echo", true},  {"logprobs", 1},        {"temperature", 0.0}};
  json response;
  try {
    response = client.post("/completions", body);
  } catch (const TransportError& e) {
    if (e.status() == 400 || e.status() == 404 || e.status() == 405 || e.status() == 501) {
      raise(ErrorKind::Capability, std::string("endpoint cannot score continuations: ") + e.what());
    }
    throw;
  }

  std::vector<std::string> toks;
  std::vector<json> lps;
  try {
    const auto& lp = response.at("choices").at(0).at("logprobs");
    toks = lp.at("tokens").get<std::vector<std::string>>();
    lps = lp.at("token_logprobs").get<std::vector<json>>();
  } catch (const json::exception& e) {
    raise(ErrorKind::Capability, std::string("endpoint returned no echoed logprobs: ") + e.what());
  }
  const std::size_t n = record.output_tokens.size();
  if (toks.size() != lps.size() || toks.size() < n) {
    raise(ErrorKind::Capability, "echoed tokens do not cover the output");
  }
  const std::size_t offset = toks.size() - n;
  GenerationRecord out = record;
  for (std::size_t l = 0; l < n; ++l) {
    if (toks[offset + l] != record.output_tokens[l].token_text) {
      raise(ErrorKind::Capability, "echoed tokenization differs from the output tokens at step " + std::to_string(l));
    }
    if (!lps[offset + l].is_number()) {
      raise(ErrorKind::Capability, "endpoint gave no logprob for output step " + std::to_string(l) +
                                       "; configure a begin-of-text context");
    }
    out.output_tokens[l].unconditional_logprob = lps[offset + l].get<double>();
  }
  return out;
}

PairwiseScores nli_pairwise(const EndpointClient& provider, const std::vector<std::string>& texts,
                            std::size_t batch_size) {
  const auto k = static_cast<Eigen::Index>(texts.size());
  if (k < 2) raise(ErrorKind::InsufficientData, "NLI scoring needs at least 2 texts");
  if (batch_size == 0) batch_size = 1;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      if (i != j) pairs.emplace_back(i, j);

  PairwiseScores out{Eigen::MatrixXd::Identity(k, k), Eigen::MatrixXd::Zero(k, k)};
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    const std::size_t end = std::min(pairs.size(), start + batch_size);
    json batch = json::array();
    for (std::size_t p = start; p < end; ++p) {
      batch.push_back({texts[static_cast<std::size_t>(pairs[p].first)],
                       texts[static_cast<std::size_t>(pairs[p].second)]});
    }
    const json response = provider.post("", {{"pairs", batch}});
    try {
      const auto& scores = response.at("scores");
      if (scores.size() != end - start) {
        raise(ErrorKind::Validation, "NLI provider returned " + std::to_string(scores.size()) + " scores for " +
                                         std::to_string(end - start) + " pairs");
      }
      for (std::size_t p = start; p < end; ++p) {
        const auto& s = scores[p - start];
        const double e = s.at("entail").get<double>();
        const double c = s.at("contra").get<double>();
        const auto [i, j] = pairs[p];
        const std::string where = "pair (" + std::to_string(i) + ", " + std::to_string(j) + ")";
        if (!(e >= 0.0 && e <= 1.0 && c >= 0.0 && c <= 1.0)) {
          raise(ErrorKind::Validation, "NLI " + where + ": probability outside [0, 1]");
        }
        if (e + c > 1.0 + 1e-9) raise(ErrorKind::Validation, "NLI " + where + ": entail + contra exceeds 1");
        out.entail(i, j) = e;
        out.contra(i, j) = c;
      }
    } catch (const json::exception& e) {
      raise(ErrorKind::Validation, std::string("malformed NLI response: ") + e.what());
    }
  }
  return out;
}

ExternalQualityScorer external_quality_scorer(std::shared_ptr<const EndpointClient> client) {
  return [client](const std::vector<std::pair<std::string, std::string>>& pairs) {
    json batch = json::array();
    for (const auto& [cand, ref] : pairs) batch.push_back({cand, ref});
    const json response = client->post("", {{"pairs", batch}});
    std::vector<double> out;
    try {
      out = response.at("scores").get<std::vector<double>>();
    } catch (const json::exception& e) {
      raise(ErrorKind::Validation, std::string("malformed quality response: ") + e.what());
    }
    return out;
  };
}

}  // namespace lmue
