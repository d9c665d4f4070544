#pragma once

// HTTP service behind the chat demo: generate an answer with a confidence.
//
//   POST /v1/chat        {messages, model?, estimator, params?, api_key?}
//   GET  /v1/estimators  registry listing
//   GET  /v1/health      {"status": "ok"}
//
// Status codes: 400 bad request or unknown estimator, 422 capability gap,
// 502 upstream failure. Api keys never appear in responses or logs.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "lmue/calibration.hpp"
#include "lmue/gateway.hpp"
#include "lmue/registry.hpp"

namespace lmue {

struct ServiceConfig {
  ModelEndpoint model;                  // default upstream endpoint
  std::vector<std::string> model_names; // offered to clients; model_name is first
  std::string nli_url;                  // empty: NLI estimators unavailable
  std::string unconditional_context;
  GenerationParams params;              // defaults for requests
  int default_samples = 5;              // K when an estimator needs samples
  std::shared_ptr<const DensityModel> density;
  std::map<std::string, CalibrationTable> calibration;
  std::set<std::string> disabled_estimators;
  RetryPolicy retry;
};

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  HttpReply chat(const std::string& request_body) const;
  HttpReply estimators() const;
  HttpReply health() const;

  /// Serves on a background thread; returns the bound port (0 picks one).
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

  const EstimatorRegistry& registry() const { return registry_; }

 private:
  struct Server;
  void install_routes();

  ServiceConfig config_;
  EstimatorRegistry registry_;
  std::unique_ptr<Server> server_;
  std::thread thread_;
};

}  // namespace lmue
