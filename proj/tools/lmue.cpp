// Command-line front end: estimate, bench, fit-density, calibrate, generate,
// serve and estimators.
//
// Exit codes: 0 success, 1 usage, 2 data, 3 upstream.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "lmue/errors.hpp"
#include "lmue/gateway.hpp"
#include "lmue/pipeline.hpp"
#include "lmue/service.hpp"

namespace {

using namespace lmue;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return 1;
    case ErrorKind::Transport:
    case ErrorKind::Auth:
    case ErrorKind::Capability:
    case ErrorKind::Indeterminate:
      return 3;
    default:
      return 2;
  }
}

std::string env_or(const char* name, const std::string& fallback = "") {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::Io, "cannot write " + path);
  out << text;
}

Dataset load_all(const std::vector<std::string>& paths) {
  std::vector<std::filesystem::path> p(paths.begin(), paths.end());
  return load_datasets(p);
}

EstimatorContext make_context(const std::string& density, const std::string& nli_url) {
  EstimatorContext ctx;
  if (!density.empty()) ctx.density = std::make_shared<const DensityModel>(load_density_model(density));
  if (!nli_url.empty()) ctx.nli = make_nli_cache(nli_url, "");
  return ctx;
}

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty estimation for language-model generations"};
  app.require_subcommand(1);

  // estimate
  std::vector<std::string> records;
  std::vector<std::string> estimators;
  std::string out;
  std::string density;
  std::string nli_url = env_or("POLYGRAPH_NLI_URL");
  auto* estimate = app.add_subcommand("estimate", "Score record files with estimators");
  estimate->add_option("--records", records, "Record file(s)")->required();
  estimate->add_option("--estimators", estimators, "Estimator names")->required()->delimiter(',');
  estimate->add_option("--out", out, "Output table (default stdout)");
  estimate->add_option("--density", density, "Fitted density model");
  estimate->add_option("--nli-url", nli_url, "NLI provider URL");

  // bench
  std::string config_path;
  std::string bench_out;
  std::uint64_t seed = 0;
  auto* bench = app.add_subcommand("bench", "Run a benchmark from a YAML config");
  bench->add_option("--config", config_path, "Benchmark config")->required();
  bench->add_option("--out", bench_out, "Report directory (overrides save_path)");
  auto* seed_opt = bench->add_option("--seed", seed, "Seed (overrides the config's seed list)");
  bench->add_option("--nli-url", nli_url, "NLI provider URL (overrides nli_url)");

  // fit-density
  DensityFitOptions fit;
  std::string train, background, huq_records, fit_out;
  auto* fitd = app.add_subcommand("fit-density", "Fit density artifacts from embeddings");
  fitd->add_option("--train", train, "Training embeddings")->required();
  fitd->add_option("--background", background, "Background embeddings");
  fitd->add_option("--huq-records", huq_records, "Records for HUQ calibration");
  fitd->add_option("--rde-dim", fit.rde_dim, "RDE target dimension");
  fitd->add_option("--subsample", fit.subsample_train, "Training points to keep (-1 all)");
  fitd->add_option("--seed", fit.seed, "Seed");
  fitd->add_option("--out", fit_out, "Output model file")->required();

  // calibrate
  std::string estimator;
  std::string metric = "rougeL";
  int bins = 10;
  auto* calib = app.add_subcommand("calibrate", "Fit a confidence calibration table");
  calib->add_option("--records", records, "Record file(s) with references")->required();
  calib->add_option("--estimator", estimator, "Estimator name")->required();
  calib->add_option("--metric", metric, "Quality metric (rougeL, rouge1, bleu)");
  calib->add_option("--bins", bins, "Number of bins");
  calib->add_option("--density", density, "Fitted density model");
  calib->add_option("--nli-url", nli_url, "NLI provider URL");
  calib->add_option("--out", out, "Output table")->required();

  // generate
  std::string model_url = env_or("POLYGRAPH_MODEL_URL");
  std::string model_name = "default";
  std::vector<std::string> prompts;
  std::string prompts_file;
  GenerationParams params;
  bool with_p_true = false;
  bool with_unconditional = false;
  auto* gen = app.add_subcommand("generate", "Generate records from a model endpoint");
  gen->add_option("--model-url", model_url, "OpenAI-compatible base URL, e.g. http://host:port/v1");
  gen->add_option("--model", model_name, "Model name");
  gen->add_option("--prompt", prompts, "Prompt text (repeatable)");
  gen->add_option("--prompts", prompts_file, "File with one prompt per line");
  gen->add_option("--samples", params.num_samples, "Sampled answers per prompt");
  gen->add_option("--max-new-tokens", params.max_new_tokens, "Token budget");
  gen->add_option("--logprobs-k", params.logprobs_k, "Alternatives per step");
  gen->add_option("--seed", params.seed, "Sampling seed");
  gen->add_flag("--p-true", with_p_true, "Run the p(True) self-check");
  gen->add_flag("--unconditional", with_unconditional, "Run the unconditional scoring pass");
  gen->add_option("--out", out, "Output record file (default stdout)");

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<std::string> calibration_files;
  std::vector<std::string> disabled;
  ServiceConfig service_config;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");
  serve->add_option("--model-url", model_url, "Upstream base URL");
  serve->add_option("--model", model_name, "Default model name");
  serve->add_option("--nli-url", nli_url, "NLI provider URL");
  serve->add_option("--density", density, "Fitted density model");
  serve->add_option("--calibration", calibration_files, "Calibration table (repeatable)");
  serve->add_option("--disable", disabled, "Estimators to hide")->delimiter(',');
  serve->add_option("--samples", service_config.default_samples, "Default K for sampling estimators");

  auto* list = app.add_subcommand("estimators", "List registered estimators");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto& registry = EstimatorRegistry::builtin();
    const std::string api_key = env_or("POLYGRAPH_API_KEY");

    if (*estimate) {
      const Dataset ds = load_all(records);
      const auto table = estimate_table(ds, estimators, registry, make_context(density, nli_url));
      for (const auto& note : table.notes) std::cerr << "skipped " << note << '\n';
      write_output(out, score_table_to_tsv(table));
    } else if (*bench) {
      BenchConfig cfg = load_bench_config(config_path);
      if (!bench_out.empty()) cfg.save_path = std::filesystem::absolute(bench_out);
      if (*seed_opt) cfg.seed = {seed};
      if (bench->count("--nli-url")) cfg.nli_url = nli_url;
      else if (cfg.nli_url.empty()) cfg.nli_url = env_or("POLYGRAPH_NLI_URL");
      const auto result = run_bench(cfg, api_key);
      write_bench_output(cfg, result);
      std::cout << result.text;
    } else if (*fitd) {
      fit.train = train;
      if (!background.empty()) fit.background = background;
      if (!huq_records.empty()) fit.huq_records = huq_records;
      save_density_model(fit_density_model(fit), fit_out);
    } else if (*calib) {
      const Dataset ds = load_all(records);
      const auto table = calibrate_records(ds, estimator, quality_metric_from_string(metric), bins, registry,
                                           make_context(density, nli_url));
      for (const auto& w : table.warnings) std::cerr << "warning: " << w << '\n';
      save_calibration(table, out);
    } else if (*gen) {
      if (model_url.empty()) raise(ErrorKind::Usage, "--model-url (or POLYGRAPH_MODEL_URL) is required");
      if (!prompts_file.empty()) {
        std::ifstream in(prompts_file);
        if (!in) raise(ErrorKind::Io, "cannot read " + prompts_file);
        for (std::string line; std::getline(in, line);)
          if (!line.empty()) prompts.push_back(line);
      }
      if (prompts.empty()) raise(ErrorKind::Usage, "no prompts given");
      const EndpointClient client({model_url, api_key, model_name});
      std::string text;
      for (std::size_t i = 0; i < prompts.size(); ++i) {
        auto r = generate_record(client, params, prompts[i], "r" + std::to_string(i));
        if (with_unconditional) r = unconditional_pass(client, r);
        if (with_p_true) r.p_true = p_true_flow(client, prompts[i], r.output_text);
        text += serialize_record_line(r) + "\n";
      }
      write_output(out, text);
    } else if (*serve) {
      if (model_url.empty()) raise(ErrorKind::Usage, "--model-url (or POLYGRAPH_MODEL_URL) is required");
      service_config.model = {model_url, api_key, model_name};
      service_config.nli_url = nli_url;
      service_config.disabled_estimators = {disabled.begin(), disabled.end()};
      if (!density.empty()) service_config.density = std::make_shared<const DensityModel>(load_density_model(density));
      for (const auto& f : calibration_files) {
        auto t = load_calibration(f);
        service_config.calibration[t.estimator_name] = std::move(t);
      }
      Service service(std::move(service_config));
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << host << ":" << port << '\n';
      service.listen(host, port);
      g_service = nullptr;
    } else if (*list) {
      const auto visible = registry.public_entries();
      for (const auto& e : visible.entries()) {
        std::cout << e.name << '\t' << e.category << '\t' << e.box << '\t' << e.compute << '\n';
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
