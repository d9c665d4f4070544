#include "lmue/service.hpp"

#include <cmath>
#include <cstdio>

#include "httplib.h"
#include "lmue/errors.hpp"
#include "lmue/pipeline.hpp"

namespace lmue {

using nlohmann::json;

struct Service::Server {
  httplib::Server http;
};

namespace {

std::string scrub(std::string text, const std::set<std::string>& secrets) {
  for (const auto& key : secrets) {
    if (key.empty()) continue;
    for (std::size_t pos = 0; (pos = text.find(key, pos)) != std::string::npos;) {
      text.replace(pos, key.size(), "***");
      pos += 3;
    }
  }
  return text;
}

HttpReply error_reply(int status, const std::string& message, const std::set<std::string>& secrets,
                      json extra = json::object()) {
  extra["error"] = scrub(message, secrets);
  return {status, std::move(extra)};
}

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return 400;
    case ErrorKind::Capability:
    case ErrorKind::UnavailableInput:
    case ErrorKind::InsufficientData:
      return 422;
    case ErrorKind::Auth:
    case ErrorKind::Transport:
    case ErrorKind::Indeterminate:
    case ErrorKind::Validation:
    case ErrorKind::Parse:
      return 502;
    default:
      return 500;
  }
}

// Inputs no chat endpoint can supply.
bool endpoint_cannot_provide(Capability c) {
  return c == Capability::Ensemble || c == Capability::Embedding || c == Capability::Reference;
}

std::string render_messages(const json& messages) {
  if (messages.size() == 1) return messages[0].at("content").get<std::string>();
  std::string out;
  for (const auto& m : messages) {
    out += m.at("role").get<std::string>() + ": " + m.at("content").get<std::string>() + "\n";
  }
  return out + "assistant:";
}

bool needs(const EstimatorEntry& e, Capability c) {
  return std::find(e.requires_inputs.begin(), e.requires_inputs.end(), c) != e.requires_inputs.end();
}

}  // namespace

Service::Service(ServiceConfig config)
    : config_(std::move(config)),
      registry_(EstimatorRegistry::builtin().public_entries().without(config_.disabled_estimators)),
      server_(std::make_unique<Server>()) {
  if (config_.model_names.empty() && !config_.model.model_name.empty()) {
    config_.model_names.push_back(config_.model.model_name);
  }
  install_routes();
}

Service::~Service() { stop(); }

HttpReply Service::health() const { return {200, {{"status", "ok"}}}; }

HttpReply Service::estimators() const {
  json list = json::array();
  for (const auto& e : registry_.entries()) {
    json inputs = json::array();
    for (auto c : e.requires_inputs) inputs.push_back(to_string(c));
    list.push_back({{"name", e.name},
                    {"category", e.category},
                    {"box", e.box},
                    {"method", e.method},
                    {"compute", e.compute},
                    {"memory", e.memory},
                    {"needs_training_data", e.needs_training_data},
                    {"requires", inputs},
                    {"calibrated", config_.calibration.count(e.name) > 0}});
  }
  return {200, {{"estimators", list}, {"models", config_.model_names}}};
}

HttpReply Service::chat(const std::string& request_body) const {
  std::set<std::string> secrets = {config_.model.api_key};
  json req;
  try {
    req = json::parse(request_body);
  } catch (const json::exception&) {
    return error_reply(400, "request body is not valid JSON", secrets);
  }
  if (!req.is_object()) return error_reply(400, "request body must be an object", secrets);
  if (auto k = req.find("api_key"); k != req.end() && k->is_string()) secrets.insert(k->get<std::string>());

  const std::string name = req.value("estimator", std::string());
  const EstimatorEntry* entry = registry_.find(name);
  if (!entry) {
    return error_reply(400, name.empty() ? "estimator is required" : "unknown estimator '" + name + "'", secrets,
                       {{"valid_estimators", registry_.names()}});
  }

  auto messages = req.find("messages");
  if (messages == req.end() || !messages->is_array() || messages->empty()) {
    return error_reply(400, "messages must be a non-empty list", secrets);
  }
  std::string input_text;
  try {
    input_text = render_messages(*messages);
  } catch (const json::exception&) {
    return error_reply(400, "every message needs string role and content", secrets);
  }

  for (auto c : entry->requires_inputs) {
    std::string gap;
    if (endpoint_cannot_provide(c)) {
      gap = "an API-only model cannot provide " + std::string(to_string(c));
    } else if (c == Capability::Nli && config_.nli_url.empty()) {
      gap = "no NLI provider is configured";
    }
    if (!gap.empty()) {
      return error_reply(422, "estimator '" + name + "' is unavailable: " + gap, secrets,
                         {{"capability", to_string(c)},
                          {"hint", "choose a black-box estimator such as lexsim_rougeL or degmat_jaccard"}});
    }
  }

  GenerationParams params = config_.params;
  params.num_samples = 0;
  try {
    if (auto p = req.find("params"); p != req.end() && !p->is_null()) {
      params.max_new_tokens = p->value("max_new_tokens", params.max_new_tokens);
      params.temperature = p->value("temperature", params.temperature);
      params.top_p = p->value("top_p", params.top_p);
      params.logprobs_k = p->value("logprobs_k", params.logprobs_k);
      params.seed = p->value("seed", params.seed);
      if (needs(*entry, Capability::Samples)) params.num_samples = p->value("num_samples", config_.default_samples);
    } else if (needs(*entry, Capability::Samples)) {
      params.num_samples = config_.default_samples;
    }
  } catch (const json::exception&) {
    return error_reply(400, "params has a field of the wrong type", secrets);
  }
  params.require_logprobs = needs(*entry, Capability::TokenLogprobs) ||
                            needs(*entry, Capability::TokenAlternatives) ||
                            needs(*entry, Capability::UnconditionalLogprobs) ||
                            needs(*entry, Capability::SampleLogprobs);

  ModelEndpoint endpoint = config_.model;
  if (auto m = req.find("model"); m != req.end() && m->is_string() && !m->get<std::string>().empty()) {
    endpoint.model_name = m->get<std::string>();
  }
  if (auto k = req.find("api_key"); k != req.end() && k->is_string() && !k->get<std::string>().empty()) {
    endpoint.api_key = k->get<std::string>();
  }
  if (endpoint.base_url.empty()) return error_reply(502, "no model endpoint configured", secrets);

  try {
    const EndpointClient client(endpoint, config_.retry);
    GenerationRecord record = generate_record(client, params, input_text, "turn");
    if (needs(*entry, Capability::UnconditionalLogprobs)) {
      record = unconditional_pass(client, record, config_.unconditional_context);
    }
    if (needs(*entry, Capability::PTrue)) record.p_true = p_true_flow(client, input_text, record.output_text);

    EstimatorContext ctx;
    ctx.density = config_.density;
    if (needs(*entry, Capability::Nli)) ctx.nli = make_nli_cache(config_.nli_url, "");
    const double ue = evaluate(*entry, record, ctx);

    json out = {{"text", record.output_text}, {"estimator", name}, {"uncertainty_raw", ue}};
    if (auto t = config_.calibration.find(name); t != config_.calibration.end()) {
      out["confidence"] = normalize(t->second, ue);
    }
    json samples = json::array();
    for (const auto& s : record.samples) samples.push_back(s.text);
    out["diagnostics"] = {{"model", endpoint.model_name}, {"samples", samples}};
    return {200, std::move(out)};
  } catch (const Error& e) {
    const int status = status_for(e.kind());
    json extra = {{"kind", to_string(e.kind())}};
    if (status == 502) return error_reply(502, std::string("upstream failure: ") + e.what(), secrets, extra);
    return error_reply(status, e.what(), secrets, extra);
  } catch (const std::exception& e) {
    return error_reply(500, std::string("internal error: ") + e.what(), secrets);
  }
}

void Service::install_routes() {
  auto& http = server_->http;
  auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                            {"Access-Control-Allow-Headers", "Content-Type"},
                            {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  http.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  http.Post("/v1/chat", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, chat(req.body));
  });
  http.Get("/v1/estimators", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, estimators());
  });
  http.Get("/v1/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
  // Method, path and status only; bodies may carry keys.
  http.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    std::fprintf(stderr, "%s %s %d\n", req.method.c_str(), req.path.c_str(), res.status);
  });
}

int Service::start(const std::string& host, int port) {
  auto& http = server_->http;
  int bound = port == 0 ? http.bind_to_any_port(host) : (http.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) raise(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([&http] { http.listen_after_bind(); });
  http.wait_until_ready();
  return bound;
}

void Service::listen(const std::string& host, int port) {
  if (!server_->http.listen(host, port)) raise(ErrorKind::Io, "cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
  if (server_) server_->http.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace lmue
