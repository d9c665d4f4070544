#include "lmue/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "lmue/errors.hpp"

namespace lmue {

namespace {

void check_inputs(const std::vector<double>& quality, const std::vector<double>& uncertainty) {
  if (quality.size() != uncertainty.size()) {
    raise(ErrorKind::Input, "quality and uncertainty lists differ in length");
  }
  if (quality.size() < 2) raise(ErrorKind::Input, "rejection curves need at least 2 items");
}

}  // namespace

PRCurve pr_curve(const std::vector<double>& quality, const std::vector<double>& uncertainty) {
  check_inputs(quality, uncertainty);
  const std::size_t n = quality.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return uncertainty[a] > uncertainty[b];
  });

  // Effective quality in rejection order, tied blocks replaced by their mean.
  std::vector<double> effective(n);
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && uncertainty[order[end]] == uncertainty[order[start]]) ++end;
    double sum = 0.0;
    for (std::size_t i = start; i < end; ++i) sum += quality[order[i]];
    const double mean = sum / static_cast<double>(end - start);
    for (std::size_t i = start; i < end; ++i) effective[i] = mean;
    start = end;
  }

  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + effective[i];

  PRCurve curve;
  curve.rejection_rates.resize(n + 1);
  curve.mean_quality.resize(n + 1);
  for (std::size_t j = 0; j < n; ++j) {
    curve.rejection_rates[j] = static_cast<double>(j) / static_cast<double>(n);
    curve.mean_quality[j] = suffix[j] / static_cast<double>(n - j);
  }
  curve.rejection_rates[n] = 1.0;
  curve.mean_quality[n] = curve.mean_quality[n - 1];

  const double baseline = std::accumulate(quality.begin(), quality.end(), 0.0) / static_cast<double>(n);
  const double step = 1.0 / static_cast<double>(n);
  double area = 0.0;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    area += ((curve.mean_quality[j] - baseline) + (curve.mean_quality[j + 1] - baseline)) / 2.0 * step;
  }
  curve.auc_vs_random = area;
  return curve;
}

double prr(const std::vector<double>& quality, const std::vector<double>& uncertainty) {
  check_inputs(quality, uncertainty);
  const auto [lo, hi] = std::minmax_element(quality.begin(), quality.end());
  if (*lo == *hi) raise(ErrorKind::Input, "PRR is undefined when every quality is equal");
  std::vector<double> oracle(quality.size());
  std::transform(quality.begin(), quality.end(), oracle.begin(), [](double q) { return -q; });
  const double oracle_area = pr_curve(quality, oracle).auc_vs_random;
  if (!(oracle_area > 0.0)) raise(ErrorKind::Input, "PRR is undefined: oracle area is zero");
  return pr_curve(quality, uncertainty).auc_vs_random / oracle_area;
}

const char* to_string(QualityMetric m) {
  switch (m) {
    case QualityMetric::RougeL: return "rougeL";
    case QualityMetric::Rouge1: return "rouge1";
    case QualityMetric::Bleu: return "bleu";
    case QualityMetric::External: return "external";
  }
  return "?";
}

QualityMetric quality_metric_from_string(const std::string& name) {
  for (auto m : {QualityMetric::RougeL, QualityMetric::Rouge1, QualityMetric::Bleu, QualityMetric::External}) {
    if (name == to_string(m)) return m;
  }
  raise(ErrorKind::Usage, "unknown quality metric '" + name + "'; valid: rougeL, rouge1, bleu, external");
}

QualityResult quality_scores(const Dataset& dataset, QualityMetric metric,
                             const ExternalQualityScorer& external) {
  QualityResult out;
  out.scores.resize(dataset.records.size());
  std::vector<std::size_t> external_idx;
  std::vector<std::pair<std::string, std::string>> external_pairs;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    if (!r.reference_text) {
      out.errors.push_back(r.id + ": missing reference_text");
      continue;
    }
    switch (metric) {
      case QualityMetric::RougeL:
        out.scores[i] = score_text(TextMetric::RougeL, r.output_text, *r.reference_text);
        break;
      case QualityMetric::Rouge1:
        out.scores[i] = score_text(TextMetric::Rouge1, r.output_text, *r.reference_text);
        break;
      case QualityMetric::Bleu:
        out.scores[i] = score_text(TextMetric::Bleu, r.output_text, *r.reference_text);
        break;
      case QualityMetric::External:
        external_idx.push_back(i);
        external_pairs.emplace_back(r.output_text, *r.reference_text);
        break;
    }
  }
  if (!external_pairs.empty()) {
    if (!external) raise(ErrorKind::Capability, "external quality metric needs a scorer endpoint");
    const auto scores = external(external_pairs);
    if (scores.size() != external_pairs.size()) {
      raise(ErrorKind::Transport, "external quality scorer returned the wrong number of scores");
    }
    for (std::size_t k = 0; k < scores.size(); ++k) out.scores[external_idx[k]] = scores[k];
  }
  return out;
}

double bootstrap_prr_stderr(const std::vector<double>& quality, const std::vector<double>& uncertainty,
                            const BootstrapOptions& options) {
  check_inputs(quality, uncertainty);
  const std::size_t n = quality.size();
  std::mt19937_64 rng(options.seed);
  std::vector<double> q(n), u(n), reps;
  reps.reserve(static_cast<std::size_t>(options.resamples));
  for (int b = 0; b < options.resamples; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(rng() % n);
      q[i] = quality[k];
      u[i] = uncertainty[k];
    }
    const auto [lo, hi] = std::minmax_element(q.begin(), q.end());
    if (*lo == *hi) continue;
    reps.push_back(prr(q, u));
  }
  if (reps.size() < 2) return 0.0;
  const double mean = std::accumulate(reps.begin(), reps.end(), 0.0) / static_cast<double>(reps.size());
  double ss = 0.0;
  for (double r : reps) ss += (r - mean) * (r - mean);
  return std::sqrt(ss / static_cast<double>(reps.size() - 1));
}

// ---------------------------------------------------------------------------

namespace {

struct Outcome {
  std::optional<double> value;
  std::string failure;       // non-empty when evaluation raised
  bool hard = false;         // failure is not an input/capability gap
  ErrorKind kind = ErrorKind::Input;
};

Outcome evaluate_one(const EstimatorEntry& entry, const GenerationRecord& r, const EstimatorContext& ctx) {
  Outcome o;
  try {
    const double v = evaluate(entry, r, ctx);
    if (std::isnan(v)) {
      o.failure = "estimator returned NaN";
      o.hard = true;
      o.kind = ErrorKind::Numeric;
    } else {
      o.value = v;
    }
  } catch (const Error& e) {
    o.failure = e.what();
    o.kind = e.kind();
    o.hard = !(e.kind() == ErrorKind::UnavailableInput || e.kind() == ErrorKind::Capability ||
               e.kind() == ErrorKind::InsufficientData);
  } catch (const std::exception& e) {
    o.failure = e.what();
    o.hard = true;
    o.kind = ErrorKind::Numeric;
  }
  return o;
}

std::vector<Outcome> evaluate_all(const EstimatorEntry& entry, const Dataset& ds,
                                  const EstimatorContext& ctx, int threads) {
  const std::size_t n = ds.records.size();
  std::vector<Outcome> out(n);
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = evaluate_one(entry, ds.records[i], ctx);
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) out[i] = evaluate_one(entry, ds.records[i], ctx);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace

std::vector<std::size_t> subsample_indices(std::size_t n, long subsample, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (subsample < 0 || static_cast<std::size_t>(subsample) >= n) return idx;
  std::mt19937_64 rng(seed);
  const auto k = static_cast<std::size_t>(subsample);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

BenchmarkReport run_benchmark(const std::vector<NamedDataset>& datasets,
                              const std::vector<std::string>& estimators,
                              const std::vector<QualityMetric>& metrics,
                              const EstimatorRegistry& registry, const EstimatorContext& ctx,
                              const BenchmarkOptions& options) {
  if (options.seeds.empty()) raise(ErrorKind::Usage, "at least one seed is required");
  BenchmarkReport report;
  for (const auto& d : datasets) {
    for (auto m : metrics) report.columns.push_back(d.name + "/" + to_string(m));
  }

  std::vector<const EstimatorEntry*> entries;
  for (const auto& name : estimators) entries.push_back(&registry.at(name));
  for (const auto* e : entries) report.rows.push_back(ReportRow{e->name, false, {}, {}});

  for (const auto& nd : datasets) {
    const Dataset& ds = nd.dataset;
    std::vector<QualityResult> quality;
    for (auto m : metrics) {
      auto q = quality_scores(ds, m, options.external_quality);
      if (!q.errors.empty() && !options.ignore_exceptions) {
        raise(ErrorKind::Validation, "dataset '" + nd.name + "', record " + q.errors.front());
      }
      quality.push_back(std::move(q));
    }

    for (std::size_t e = 0; e < entries.size(); ++e) {
      ReportRow& row = report.rows[e];
      const auto outcomes = evaluate_all(*entries[e], ds, ctx, options.threads);
      for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto& o = outcomes[i];
        if (o.value) {
          row.available = true;
          continue;
        }
        if (o.hard && !options.ignore_exceptions) {
          raise(o.kind, "estimator '" + row.estimator + "' failed on record '" + ds.records[i].id +
                            "': " + o.failure);
        }
        row.skipped.push_back(nd.name + "/" + ds.records[i].id + ": " + o.failure);
      }

      for (std::size_t m = 0; m < metrics.size(); ++m) {
        ReportCell cell;
        cell.dataset = nd.name;
        cell.metric = to_string(metrics[m]);
        std::vector<double> point_prrs;
        std::vector<double> replicates;
        std::string note;
        for (auto seed : options.seeds) {
          std::vector<double> q, u;
          for (auto i : subsample_indices(ds.records.size(), options.subsample, seed)) {
            if (outcomes[i].value && quality[m].scores[i]) {
              q.push_back(*quality[m].scores[i]);
              u.push_back(*outcomes[i].value);
            }
          }
          cell.records_used = std::max(cell.records_used, q.size());
          if (q.size() < 2) {
            note = "fewer than 2 records with both scores";
            continue;
          }
          try {
            point_prrs.push_back(prr(q, u));
          } catch (const Error& err) {
            note = err.what();
            continue;
          }
          // Replicate distribution per seed, pooled across seeds.
          BootstrapOptions bo{options.bootstrap_resamples, seed};
          std::mt19937_64 rng(bo.seed);
          std::vector<double> bq(q.size()), bu(q.size());
          for (int b = 0; b < bo.resamples; ++b) {
            for (std::size_t i = 0; i < q.size(); ++i) {
              const auto k = static_cast<std::size_t>(rng() % q.size());
              bq[i] = q[k];
              bu[i] = u[k];
            }
            const auto [lo, hi] = std::minmax_element(bq.begin(), bq.end());
            if (*lo == *hi) continue;
            replicates.push_back(prr(bq, bu));
          }
        }
        if (!point_prrs.empty()) {
          cell.available = true;
          cell.prr_mean = std::accumulate(point_prrs.begin(), point_prrs.end(), 0.0) /
                          static_cast<double>(point_prrs.size());
          if (replicates.size() >= 2) {
            const double mean = std::accumulate(replicates.begin(), replicates.end(), 0.0) /
                                static_cast<double>(replicates.size());
            double ss = 0.0;
            for (double r : replicates) ss += (r - mean) * (r - mean);
            cell.prr_stderr = std::sqrt(ss / static_cast<double>(replicates.size() - 1));
          }
        } else {
          cell.note = row.available ? note : "unavailable";
        }
        row.cells.push_back(std::move(cell));
      }
    }
  }
  return report;
}

std::string report_to_json(const BenchmarkReport& report) {
  using nlohmann::ordered_json;
  ordered_json j;
  ordered_json meta = ordered_json::object();
  for (const auto& [k, v] : report.metadata) meta[k] = v;
  j["metadata"] = std::move(meta);
  j["columns"] = report.columns;
  ordered_json rows = ordered_json::array();
  for (const auto& row : report.rows) {
    ordered_json r;
    r["estimator"] = row.estimator;
    r["available"] = row.available;
    ordered_json cells = ordered_json::array();
    for (const auto& c : row.cells) {
      ordered_json cj;
      cj["dataset"] = c.dataset;
      cj["metric"] = c.metric;
      cj["available"] = c.available;
      if (c.available) {
        cj["prr"] = c.prr_mean;
        cj["prr_stderr"] = c.prr_stderr;
      } else {
        cj["note"] = c.note;
      }
      cj["records_used"] = c.records_used;
      cells.push_back(std::move(cj));
    }
    r["cells"] = std::move(cells);
    r["skipped"] = row.skipped;
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::string report_to_text(const BenchmarkReport& report) {
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header = {"UE Method"};
  header.insert(header.end(), report.columns.begin(), report.columns.end());
  table.push_back(header);
  for (const auto& row : report.rows) {
    std::vector<std::string> line = {row.estimator};
    for (const auto& c : row.cells) {
      if (!row.available) {
        line.push_back("unavailable");
      } else if (!c.available) {
        line.push_back("n/a");
      } else {
        char buf[64];
        // Avoid printing "-0.000".
        const double mean = std::fabs(c.prr_mean) < 5e-4 ? 0.0 : c.prr_mean;
        std::snprintf(buf, sizeof buf, "%.3f±%.3f", mean, c.prr_stderr);
        line.push_back(buf);
      }
    }
    table.push_back(std::move(line));
  }

  // Width in code points so the ± sign does not skew alignment.
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char ch : s) w += (ch & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : table)
    for (std::size_t i = 0; i < line.size(); ++i) widths[i] = std::max(widths[i], width(line[i]));

  std::ostringstream out;
  for (const auto& [k, v] : report.metadata) out << "# " << k << ": " << v << '\n';
  for (std::size_t r = 0; r < table.size(); ++r) {
    const auto& line = table[r];
    for (std::size_t i = 0; i < line.size(); ++i) {
      out << line[i];
      if (i + 1 < line.size()) out << std::string(widths[i] - width(line[i]) + 2, ' ');
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : widths) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  return out.str();
}

}  // namespace lmue
