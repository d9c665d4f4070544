#include "lmue/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "lmue/errors.hpp"
#include "lmue/gateway.hpp"

namespace lmue {

namespace fs = std::filesystem;

namespace {

Embeddings pick(const Embeddings& all, long count, std::uint64_t seed) {
  Embeddings out;
  for (auto i : subsample_indices(all.size(), count, seed)) out.push_back(all[i]);
  return out;
}

bool soft_failure(ErrorKind k) {
  return k == ErrorKind::UnavailableInput || k == ErrorKind::Capability || k == ErrorKind::InsufficientData;
}

}  // namespace

DensityModel fit_density_model(const DensityFitOptions& options) {
  DensityModel model;
  const Embeddings train = pick(load_embeddings(options.train), options.subsample_train, options.seed);
  if (train.empty()) raise(ErrorKind::InsufficientData, options.train.string() + ": no embeddings");
  model.gaussian = fit_gaussian(train);

  if (options.background) {
    const Embeddings bg = pick(load_embeddings(*options.background), options.subsample_background, options.seed);
    model.background = fit_gaussian(bg);
    if (model.background->dim != model.gaussian->dim) {
      raise(ErrorKind::Shape, "background embeddings have dimension " + std::to_string(model.background->dim) +
                                  ", training embeddings " + std::to_string(model.gaussian->dim));
    }
  }

  const int dim = model.gaussian->dim;
  McdOptions mcd;
  mcd.seed = options.seed;
  const int subset = static_cast<int>(std::ceil(mcd.support_fraction * static_cast<double>(train.size())));
  if (options.rde_dim >= dim) {
    raise(ErrorKind::Usage, "rde_dim must be below the embedding dimension " + std::to_string(dim));
  }
  int target = options.rde_dim > 0 ? options.rde_dim : std::min(dim - 1, 10);
  target = std::min(target, subset - 1);
  if (target >= 1) model.rde = fit_rde(train, target, mcd);

  if (options.huq_records) {
    const Dataset calib = load_dataset(*options.huq_records);
    HuqConfig huq = options.huq;
    huq.calibration_density.clear();
    huq.calibration_info.clear();
    EstimatorContext ctx;
    ctx.density = std::make_shared<const DensityModel>(model);
    const auto& reg = EstimatorRegistry::builtin();
    const auto& de = reg.at(huq.density_estimator);
    const auto& ie = reg.at(huq.info_estimator);
    for (const auto& r : calib.records) {
      try {
        const double d = evaluate(de, r, ctx);
        const double i = evaluate(ie, r, ctx);
        huq.calibration_density.push_back(d);
        huq.calibration_info.push_back(i);
      } catch (const Error& e) {
        if (!soft_failure(e.kind())) throw;
      }
    }
    if (huq.calibration_density.size() < 10) {
      raise(ErrorKind::InsufficientData, options.huq_records->string() +
                                             ": HUQ calibration needs at least 10 usable records");
    }
    model.huq = std::move(huq);
  }
  return model;
}

std::shared_ptr<NliCache> make_nli_cache(const std::string& url, const std::string& api_key,
                                         std::size_t batch_size, int max_parallel) {
  ModelEndpoint ep;
  ep.base_url = url;
  ep.api_key = api_key;
  ep.max_parallel = max_parallel;
  auto client = std::make_shared<const EndpointClient>(ep);
  return std::make_shared<NliCache>([client, batch_size](const std::vector<std::string>& texts) {
    return nli_pairwise(*client, texts, batch_size);
  });
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    raise(ErrorKind::Usage, "config key '" + key + "': invalid value");
  }
}

std::vector<std::string> string_list(const YAML::Node& node, const std::string& key) {
  if (node.IsNull()) return {};
  if (node.IsScalar()) return {scalar<std::string>(node, key)};
  if (!node.IsSequence()) raise(ErrorKind::Usage, "config key '" + key + "': expected a list");
  std::vector<std::string> out;
  for (const auto& item : node) out.push_back(scalar<std::string>(item, key));
  return out;
}

std::optional<fs::path> optional_path(const YAML::Node& node, const std::string& key) {
  if (node.IsNull()) return std::nullopt;
  return fs::path(scalar<std::string>(node, key));
}

}  // namespace

BenchConfig parse_bench_config(const std::string& yaml_text, const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    raise(ErrorKind::Parse, std::string("config: ") + e.what());
  }
  if (!root.IsMap()) raise(ErrorKind::Usage, "config must be a mapping");

  BenchConfig c;
  c.base_dir = base_dir;
  for (const auto& kv : root) {
    const std::string key = scalar<std::string>(kv.first, "<key>");
    const YAML::Node& v = kv.second;
    if (key == "save_path") {
      c.save_path = scalar<std::string>(v, key);
    } else if (key == "dataset") {
      const fs::path p = scalar<std::string>(v, key);
      c.datasets.push_back({p.stem().string(), p});
    } else if (key == "datasets") {
      if (!v.IsSequence()) raise(ErrorKind::Usage, "config key 'datasets': expected a list");
      for (const auto& item : v) {
        if (item.IsScalar()) {
          const fs::path p = scalar<std::string>(item, key);
          c.datasets.push_back({p.stem().string(), p});
          continue;
        }
        if (!item.IsMap()) raise(ErrorKind::Usage, "config key 'datasets': entries need name and path");
        BenchDatasetSpec spec;
        for (const auto& f : item) {
          const std::string sub = scalar<std::string>(f.first, key);
          if (sub == "name") {
            spec.name = scalar<std::string>(f.second, "datasets.name");
          } else if (sub == "path") {
            spec.path = scalar<std::string>(f.second, "datasets.path");
          } else {
            raise(ErrorKind::Usage, "unknown config key 'datasets." + sub + "'");
          }
        }
        if (spec.path.empty()) raise(ErrorKind::Usage, "config key 'datasets': entry without path");
        if (spec.name.empty()) spec.name = spec.path.stem().string();
        c.datasets.push_back(std::move(spec));
      }
    } else if (key == "quality_metrics") {
      c.quality_metrics = string_list(v, key);
    } else if (key == "estimators") {
      c.estimators = string_list(v, key);
    } else if (key == "disabled_estimators") {
      c.disabled_estimators = string_list(v, key);
    } else if (key == "use_density_based_ue") {
      c.use_density_based_ue = scalar<bool>(v, key);
    } else if (key == "use_seq_ue") {
      c.use_seq_ue = scalar<bool>(v, key);
    } else if (key == "use_tok_ue") {
      c.use_tok_ue = scalar<bool>(v, key);
    } else if (key == "train_dataset") {
      c.train_dataset = optional_path(v, key);
    } else if (key == "background_train_dataset") {
      c.background_train_dataset = optional_path(v, key);
    } else if (key == "huq_calibration_dataset") {
      c.huq_calibration_dataset = optional_path(v, key);
    } else if (key == "subsample_train_dataset") {
      c.subsample_train_dataset = scalar<long>(v, key);
    } else if (key == "subsample_background_train_dataset") {
      c.subsample_background_train_dataset = scalar<long>(v, key);
    } else if (key == "subsample_eval_dataset") {
      c.subsample_eval_dataset = scalar<long>(v, key);
    } else if (key == "rde_dim") {
      c.rde_dim = scalar<int>(v, key);
    } else if (key == "huq_alpha") {
      c.huq_alpha = scalar<double>(v, key);
    } else if (key == "ignore_exceptions") {
      c.ignore_exceptions = scalar<bool>(v, key);
    } else if (key == "batch_size") {
      c.batch_size = scalar<int>(v, key);
    } else if (key == "deberta_batch_size") {
      c.deberta_batch_size = scalar<int>(v, key);
    } else if (key == "threads") {
      c.threads = scalar<int>(v, key);
    } else if (key == "nli_url") {
      c.nli_url = v.IsNull() ? "" : scalar<std::string>(v, key);
    } else if (key == "external_quality_url") {
      c.external_quality_url = v.IsNull() ? "" : scalar<std::string>(v, key);
    } else if (key == "seed") {
      c.seed.clear();
      if (v.IsSequence()) {
        for (const auto& s : v) c.seed.push_back(scalar<std::uint64_t>(s, key));
      } else {
        c.seed.push_back(scalar<std::uint64_t>(v, key));
      }
    } else if (key == "bootstrap_resamples") {
      c.bootstrap_resamples = scalar<int>(v, key);
    } else {
      raise(ErrorKind::Usage, "unknown config key '" + key + "'");
    }
  }
  if (c.datasets.empty()) raise(ErrorKind::Usage, "config needs 'dataset' or 'datasets'");
  if (c.seed.empty()) raise(ErrorKind::Usage, "config key 'seed': at least one seed");
  if (c.bootstrap_resamples < 1) raise(ErrorKind::Usage, "config key 'bootstrap_resamples' must be >= 1");
  if (c.deberta_batch_size < 1) raise(ErrorKind::Usage, "config key 'deberta_batch_size' must be >= 1");
  if (!(c.huq_alpha >= 0.0 && c.huq_alpha <= 1.0)) raise(ErrorKind::Usage, "config key 'huq_alpha' must be in [0, 1]");
  for (const auto& m : c.quality_metrics) quality_metric_from_string(m);
  return c;
}

BenchConfig load_bench_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_bench_config(buf.str(), path.parent_path());
}

std::vector<std::string> selected_estimators(const BenchConfig& config, const EstimatorRegistry& registry) {
  const std::set<std::string> disabled(config.disabled_estimators.begin(), config.disabled_estimators.end());
  std::vector<std::string> out;
  if (!config.estimators.empty()) {
    for (const auto& name : config.estimators) {
      registry.at(name);
      if (!disabled.count(name)) out.push_back(name);
    }
    return out;
  }
  for (const auto& e : registry.entries()) {
    if (e.diagnostic || disabled.count(e.name)) continue;
    const bool density = e.category == "Density-based";
    const bool token = e.name.rfind("ensemble_tok_", 0) == 0;
    if (density ? config.use_density_based_ue : token ? config.use_tok_ue : config.use_seq_ue) {
      out.push_back(e.name);
    }
  }
  return out;
}

BenchOutput run_bench(const BenchConfig& config, const std::string& api_key) {
  auto resolve = [&](const fs::path& p) { return p.is_absolute() ? p : config.base_dir / p; };
  const EstimatorRegistry& registry = EstimatorRegistry::builtin();
  const auto estimators = selected_estimators(config, registry);

  std::vector<NamedDataset> datasets;
  for (const auto& spec : config.datasets) datasets.push_back({spec.name, load_dataset(resolve(spec.path))});
  std::vector<QualityMetric> metrics;
  for (const auto& m : config.quality_metrics) metrics.push_back(quality_metric_from_string(m));

  EstimatorContext ctx;
  if (config.train_dataset) {
    DensityFitOptions fit;
    fit.train = resolve(*config.train_dataset);
    if (config.background_train_dataset) fit.background = resolve(*config.background_train_dataset);
    if (config.huq_calibration_dataset) fit.huq_records = resolve(*config.huq_calibration_dataset);
    fit.subsample_train = config.subsample_train_dataset;
    fit.subsample_background = config.subsample_background_train_dataset;
    fit.rde_dim = config.rde_dim;
    fit.seed = config.seed.front();
    fit.huq.alpha = config.huq_alpha;
    ctx.density = std::make_shared<const DensityModel>(fit_density_model(fit));
  }
  if (!config.nli_url.empty()) {
    ctx.nli = make_nli_cache(config.nli_url, api_key, static_cast<std::size_t>(config.deberta_batch_size));
  }

  BenchmarkOptions options;
  options.seeds = config.seed;
  options.bootstrap_resamples = config.bootstrap_resamples;
  options.ignore_exceptions = config.ignore_exceptions;
  options.subsample = config.subsample_eval_dataset;
  options.threads = config.threads;
  if (!config.external_quality_url.empty()) {
    ModelEndpoint ep;
    ep.base_url = config.external_quality_url;
    ep.api_key = api_key;
    options.external_quality = external_quality_scorer(std::make_shared<const EndpointClient>(ep));
  }

  BenchOutput out;
  out.report = run_benchmark(datasets, estimators, metrics, registry, ctx, options);
  auto& meta = out.report.metadata;
  std::string seeds;
  for (auto s : config.seed) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  std::string ds;
  for (const auto& d : datasets) {
    ds += (ds.empty() ? "" : ",") + d.name + ":" + std::to_string(d.dataset.records.size());
  }
  meta.emplace_back("seed", seeds);
  meta.emplace_back("datasets", ds);
  meta.emplace_back("bootstrap_resamples", std::to_string(config.bootstrap_resamples));
  meta.emplace_back("subsample_eval_dataset", std::to_string(config.subsample_eval_dataset));
  meta.emplace_back("density_fit", config.train_dataset ? "yes" : "no");
  meta.emplace_back("nli_provider", config.nli_url.empty() ? "none" : "configured");
  meta.emplace_back("ignore_exceptions", config.ignore_exceptions ? "true" : "false");
  out.json = report_to_json(out.report);
  out.text = report_to_text(out.report);
  return out;
}

void write_bench_output(const BenchConfig& config, const BenchOutput& output) {
  const fs::path dir = config.save_path.is_absolute() ? config.save_path : config.base_dir / config.save_path;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) raise(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  for (const auto& [name, body] : {std::pair{"report.json", &output.json}, std::pair{"report.txt", &output.text}}) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) raise(ErrorKind::Io, "cannot write " + (dir / name).string());
    f << *body;
  }
}

// ---------------------------------------------------------------------------

ScoreTable estimate_table(const Dataset& dataset, const std::vector<std::string>& estimators,
                          const EstimatorRegistry& registry, const EstimatorContext& ctx) {
  ScoreTable t;
  t.estimators = estimators;
  std::vector<const EstimatorEntry*> entries;
  for (const auto& name : estimators) entries.push_back(&registry.at(name));
  for (const auto& r : dataset.records) {
    t.record_ids.push_back(r.id);
    auto& row = t.values.emplace_back();
    for (const auto* e : entries) {
      try {
        row.push_back(evaluate(*e, r, ctx));
      } catch (const Error& err) {
        if (!soft_failure(err.kind())) {
          raise(err.kind(), "record '" + r.id + "', estimator '" + e->name + "': " + err.what());
        }
        row.push_back(std::nullopt);
        t.notes.push_back(r.id + "/" + e->name + ": " + err.what());
      }
    }
  }
  return t;
}

std::string score_table_to_tsv(const ScoreTable& table) {
  std::ostringstream out;
  out << "id";
  for (const auto& e : table.estimators) out << '\t' << e;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < table.record_ids.size(); ++i) {
    out << table.record_ids[i];
    for (const auto& v : table.values[i]) {
      if (v) {
        std::snprintf(buf, sizeof buf, "%.17g", *v);
        out << '\t' << buf;
      } else {
        out << "\tunavailable";
      }
    }
    out << '\n';
  }
  return out.str();
}

CalibrationTable calibrate_records(const Dataset& dataset, const std::string& estimator, QualityMetric metric,
                                   int num_bins, const EstimatorRegistry& registry, const EstimatorContext& ctx) {
  const auto quality = quality_scores(dataset, metric);
  if (!quality.errors.empty()) raise(ErrorKind::Validation, "record " + quality.errors.front());
  const auto table = estimate_table(dataset, {estimator}, registry, ctx);
  std::vector<double> scores, qualities;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    if (table.values[i][0] && quality.scores[i]) {
      scores.push_back(*table.values[i][0]);
      qualities.push_back(std::clamp(*quality.scores[i], 0.0, 1.0));
    }
  }
  return fit_bins(scores, qualities, num_bins, estimator);
}

}  // namespace lmue
