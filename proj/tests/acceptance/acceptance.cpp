// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails. Usage: acceptance <path to lmue binary>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "json.hpp"
#include "lmue/benchmark.hpp"
#include "lmue/calibration.hpp"
#include "lmue/density.hpp"
#include "lmue/ensemble.hpp"
#include "lmue/errors.hpp"
#include "lmue/info.hpp"
#include "lmue/meaning.hpp"
#include "lmue/mock_server.hpp"
#include "lmue/service.hpp"
#include "lmue/textmetrics.hpp"
// After Eigen: resolv.h defines a _res macro.
#include "httplib.h"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace lmue;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

// 1 -------------------------------------------------------------------------
Outcome prr_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 gen(101);
  std::uniform_real_distribution<double> uq;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + gen() % 19;
    std::vector<double> q(n), u(n), neg(n), flat(n, 0.5);
    const int levels = 1 + static_cast<int>(gen() % 5);
    do {
      for (std::size_t i = 0; i < n; ++i) {
        // Coarse grids give ties in both quality and uncertainty.
        q[i] = static_cast<double>(gen() % 4) / 3.0;
        u[i] = static_cast<double>(gen() % levels) + (t % 2 ? uq(gen) : 0.0);
      }
    } while (*std::min_element(q.begin(), q.end()) == *std::max_element(q.begin(), q.end()));
    for (std::size_t i = 0; i < n; ++i) neg[i] = -q[i];

    const double p_or = prr(q, neg);
    const double p_flat = prr(q, flat);
    o.require(std::fabs(p_or - 1.0) <= 1e-9, fmt("prr(q, -q) = %.17g", p_or));
    o.require(std::fabs(p_flat) <= 1e-9, fmt("constant prr = %.17g", p_flat));

    const auto curve = pr_curve(q, u);
    const auto ref = oracle::rejection_curve(q, u);
    for (std::size_t j = 0; j <= n; ++j) {
      o.require(std::fabs(curve.mean_quality[j] - ref[j]) <= 1e-9, fmt("curve point %g differs by %g", double(j),
                                                                       curve.mean_quality[j] - ref[j]));
    }
    o.require(std::fabs(curve.auc_vs_random - oracle::area(ref, q)) <= 1e-9, "area differs from the oracle");
    if (n <= 7) {
      const auto en = oracle::rejection_curve_enumerated(q, u);
      for (std::size_t j = 0; j <= n; ++j) {
        o.require(std::fabs(curve.mean_quality[j] - en[j]) <= 1e-9, "curve differs from the enumeration oracle");
      }
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 5.0, fmt("runtime %.2fs", secs));
  if (o.pass) o.detail = fmt("200 instances, %.3fs", secs);
  return o;
}

// 2 -------------------------------------------------------------------------
Outcome prr_rank_invariance() {
  Outcome o;
  std::mt19937_64 gen(202);
  std::uniform_real_distribution<double> ud;
  const std::vector<std::function<double(double, double, double)>> shapes = {
      [](double x, double a, double b) { return a * x + b; },
      [](double x, double a, double) { return std::exp(a * x); },
      [](double x, double a, double b) { return a * x * x * x + b; },
      [](double x, double a, double) { return std::log1p(a * x); },
      [](double x, double a, double) { return std::tanh(a * x); },
  };
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 5 + gen() % 30;
    std::vector<double> q(n), u(n);
    for (std::size_t i = 0; i < n; ++i) {
      q[i] = ud(gen);
      u[i] = static_cast<double>(gen() % 20) / 20.0;  // ties included
    }
    const double base = prr(q, u);
    for (int k = 0; k < 20; ++k) {
      const auto& f = shapes[k % shapes.size()];
      const double a = 0.5 + 1.5 * ud(gen), b = ud(gen) - 0.5;
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = f(u[i], a, b);
      worst = std::max(worst, std::fabs(prr(q, v) - base));
    }
  }
  o.require(worst <= 1e-12, fmt("max deviation %.3g", worst));
  if (o.pass) o.detail = fmt("50 instances x 20 transforms, max deviation %.3g", worst);
  return o;
}

// 3 -------------------------------------------------------------------------
Outcome spectral() {
  Outcome o;
  const auto t0 = Clock::now();
  auto sim = [](const Eigen::MatrixXd& s) {
    SimilarityMatrix m;
    m.s = s;
    return m;
  };
  for (int k = 2; k <= 10; ++k) {
    const double ones = eigv_laplacian(sim(Eigen::MatrixXd::Ones(k, k)));
    const double id = eigv_laplacian(sim(Eigen::MatrixXd::Identity(k, k)));
    o.require(std::fabs(ones - 1.0) <= 1e-8, fmt("all-ones K=%g gives %.17g", k, ones));
    o.require(std::fabs(id - k) <= 1e-8, fmt("identity K=%g gives %.17g", k, id));
  }
  Eigen::MatrixXd block(3, 3);
  block << 1, 1, 0, 1, 1, 0, 0, 0, 1;
  const double eb = eigv_laplacian(sim(block));
  const double db = degmat_uncertainty(sim(block));
  o.require(std::fabs(eb - 2.0) <= 1e-8, fmt("block eigv %.17g", eb));
  o.require(std::fabs(db - 4.0 / 9.0) <= 1e-12, fmt("block degmat %.17g", db));

  // Raw eigenvalues straight from the Laplacian, before any clamping.
  std::mt19937_64 gen(303);
  std::uniform_real_distribution<double> ud;
  double lo = 0.0, hi = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int k = 2 + static_cast<int>(gen() % 9);
    Eigen::MatrixXd s(k, k);
    for (int i = 0; i < k; ++i) {
      s(i, i) = 1.0;
      for (int j = i + 1; j < k; ++j) s(i, j) = s(j, i) = ud(gen);
    }
    const Eigen::MatrixXd lap = normalized_laplacian(sim(s));
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(lap).eigenvalues();
    lo = std::min(lo, ev.minCoeff());
    hi = std::max(hi, ev.maxCoeff());
    const Eigen::VectorXd clamped = laplacian_eigenvalues(sim(s));
    o.require(clamped.minCoeff() >= 0.0 && clamped.maxCoeff() <= 2.0, "clamped eigenvalues outside [0, 2]");
  }
  o.require(lo >= -1e-8 && hi <= 2.0 + 1e-8, fmt("raw eigenvalues span [%.3g, %.17g]", lo, hi));
  const double secs = seconds_since(t0);
  o.require(secs < 5.0, fmt("runtime %.2fs", secs));
  if (o.pass) o.detail = fmt("raw eigenvalue range [%.2g, %.6f]", lo, hi) + fmt(", %.3fs", secs);
  return o;
}

// 4 -------------------------------------------------------------------------
Outcome information() {
  Outcome o;
  auto rec = [](const std::vector<double>& lps) {
    GenerationRecord r;
    r.id = "x";
    for (std::size_t i = 0; i < lps.size(); ++i) {
      TokenStep s;
      s.token_id = static_cast<TokenId>(i);
      s.logprob = lps[i];
      r.output_tokens.push_back(s);
    }
    return r;
  };
  const double half = std::log(0.5);
  const double ppl = perplexity(rec({half, half, half}));
  o.require(ppl == 2.0, fmt("perplexity %.17g", ppl));

  auto uni = rec({std::log(0.25), std::log(0.25)});
  for (auto& s : uni.output_tokens) {
    s.alternatives = {{s.token_id, std::log(0.25)}, {100, std::log(0.25)}, {101, std::log(0.25)}, {102, std::log(0.25)}};
  }
  const double mte = mean_token_entropy(uni, {});
  o.require(std::fabs(mte - std::log(4.0)) <= 1e-12, fmt("mean token entropy %.17g", mte));

  std::mt19937_64 gen(404);
  std::uniform_real_distribution<double> ud(0.01, 0.99);
  for (int t = 0; t < 200; ++t) {
    const std::size_t len = 1 + gen() % 8;
    std::vector<double> cond(len), uncond(len);
    for (std::size_t l = 0; l < len; ++l) {
      cond[l] = std::log(ud(gen));
      uncond[l] = std::log(ud(gen));
    }
    auto r = rec(cond);
    double nll = 0.0;
    for (std::size_t l = 0; l < len; ++l) {
      r.output_tokens[l].unconditional_logprob = uncond[l];
      r.output_tokens[l].alternatives = {{r.output_tokens[l].token_id, cond[l]}};
      nll -= cond[l];
    }
    InfoConfig cfg;
    cfg.cpmi_tau = std::numeric_limits<double>::infinity();
    const double c = cpmi(r, cfg);
    o.require(std::fabs(c - nll / static_cast<double>(len)) <= 1e-12, fmt("cpmi %.17g vs nll %.17g", c, nll / len));

    auto swapped = rec(uncond);
    for (std::size_t l = 0; l < len; ++l) swapped.output_tokens[l].unconditional_logprob = cond[l];
    const double a = pmi(r), b = pmi(swapped);
    o.require(std::fabs(a + b) <= 1e-12, fmt("pmi %.17g vs swapped %.17g", a, b));
  }
  if (o.pass) o.detail = "perplexity 2 exactly, entropy ln 4, 200 random cpmi/pmi cases";
  return o;
}

// 5 -------------------------------------------------------------------------
Outcome ensemble() {
  Outcome o;
  std::mt19937_64 gen(505);
  std::uniform_real_distribution<double> ud;
  double worst_epkl = 0.0, min_mi = 0.0, min_rmi = 0.0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t m = 2 + gen() % 4, support = 1 + gen() % 6;
    std::vector<StepDistribution> members(m);
    for (auto& d : members) {
      double total = 0.0;
      for (std::size_t s = 0; s < support; ++s) {
        if (support > 1 && gen() % 4 == 0) continue;  // token missing from this member
        const double w = ud(gen) + 1e-3;
        d.push_back({static_cast<TokenId>(s), w});
        total += w;
      }
      if (d.empty()) {
        d.push_back({0, 1.0});
        total = 1.0;
      }
      for (auto& [id, p] : d) p /= total;
    }
    const auto step = align_step(members);
    const auto tm = token_measures(step);
    min_mi = std::min(min_mi, tm.mi);
    min_rmi = std::min(min_rmi, tm.rmi);
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j) continue;
        for (std::size_t s = 0; s < step.support.size(); ++s) {
          const double p = step.per_model[i][s], q = step.per_model[j][s];
          sum += p * (std::log(p) - std::log(q));
        }
      }
    const double brute = sum / static_cast<double>(m * (m - 1));
    worst_epkl = std::max(worst_epkl, std::fabs(brute - tm.epkl));

    const std::vector<StepDistribution> same(m, members[0]);
    const auto z = token_measures(align_step(same));
    o.require(std::fabs(z.mi) <= 1e-12 && std::fabs(z.epkl) <= 1e-12 && std::fabs(z.rmi) <= 1e-12,
              fmt("identical members give mi %.3g epkl %.3g", z.mi, z.epkl));
  }
  o.require(min_mi >= -1e-9, fmt("min mi %.3g", min_mi));
  o.require(min_rmi >= -1e-9, fmt("min rmi %.3g", min_rmi));
  o.require(worst_epkl <= 1e-10, fmt("epkl deviation %.3g", worst_epkl));
  if (o.pass) o.detail = fmt("500 steps, epkl deviation %.3g, min mi %.3g", worst_epkl, min_mi);
  return o;
}

// 6 -------------------------------------------------------------------------
Outcome density() {
  Outcome o;
  std::mt19937_64 gen(606);
  std::normal_distribution<double> nd;
  const int dim = 5;

  // Affine equivariance: MD is unchanged when data and query move together.
  Embeddings pts(200, std::vector<double>(dim));
  for (auto& p : pts)
    for (auto& x : p) x = nd(gen);
  Eigen::MatrixXd a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = 0.3 * nd(gen);
  a += 2.0 * Eigen::MatrixXd::Identity(dim, dim);
  Eigen::VectorXd b(dim);
  for (int i = 0; i < dim; ++i) b(i) = nd(gen);
  auto move = [&](const std::vector<double>& p) {
    const Eigen::VectorXd y = a * Eigen::Map<const Eigen::VectorXd>(p.data(), dim) + b;
    return std::vector<double>(y.data(), y.data() + dim);
  };
  Embeddings moved;
  for (const auto& p : pts) moved.push_back(move(p));
  const auto fit = fit_gaussian(pts, 0.0);
  const auto fit_moved = fit_gaussian(moved, 0.0);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> h(dim);
    for (auto& x : h) x = 2.0 * nd(gen);
    const double m0 = mahalanobis(fit, h), m1 = mahalanobis(fit_moved, move(h));
    worst = std::max(worst, std::fabs(m0 - m1) / std::max(1.0, m0));
  }
  o.require(worst <= 1e-6, fmt("affine deviation %.3g", worst));

  const std::vector<double> mu(fit.mu.data(), fit.mu.data() + dim);
  o.require(std::fabs(mahalanobis(fit, mu)) <= 1e-12, "MD at the centroid is not zero");

  const auto unit = gaussian_from_moments(Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Identity(dim, dim));
  for (int t = 0; t < 50; ++t) {
    std::vector<double> h(dim);
    double sq = 0.0;
    for (auto& x : h) {
      x = 3.0 * nd(gen);
      sq += x * x;
    }
    o.require(std::fabs(mahalanobis(unit, h) - sq) <= 1e-12 * std::max(1.0, sq), "identity covariance differs");
  }

  // MCD against planted outliers.
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 g(seed);
    const int n = 200, outliers = 20;
    Eigen::MatrixXd x(n, dim);
    Eigen::VectorXd inlier_mean = Eigen::VectorXd::Zero(dim);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < dim; ++j) x(i, j) = nd(g) + (i < outliers ? 8.0 : 0.0);
      if (i >= outliers) inlier_mean += x.row(i).transpose();
    }
    inlier_mean /= static_cast<double>(n - outliers);
    Embeddings rows;
    for (int i = 0; i < n; ++i) rows.emplace_back(x.row(i).data(), x.row(i).data() + dim);
    McdOptions opt;
    opt.seed = seed;
    const auto robust = fit_mcd(x, opt);
    const auto plain = fit_gaussian(rows);
    if ((robust.mu - inlier_mean).norm() < (plain.mu - inlier_mean).norm()) ++wins;
  }
  o.require(wins == 20, fmt("MCD closer on %g of 20 seeds", wins));
  if (o.pass) o.detail = fmt("affine deviation %.3g, MCD closer on %g/20 seeds", worst, wins);
  return o;
}

// 7 -------------------------------------------------------------------------
Outcome text_metrics() {
  Outcome o;
  std::mt19937_64 gen(707);
  const std::vector<std::string> vocab = {"a", "b", "c", "d", "e"};
  for (int t = 0; t < 1000; ++t) {
    TokenizedText x, y;
    x.tokens.resize(gen() % 11);
    y.tokens.resize(gen() % 11);
    for (auto& s : x.tokens) s = vocab[gen() % vocab.size()];
    for (auto& s : y.tokens) s = vocab[gen() % vocab.size()];
    const double got = rougeL(x, y), want = oracle::rouge_l(x.tokens, y.tokens);
    o.require(got == want, fmt("rougeL %.17g vs oracle %.17g", got, want));
    o.require(lcs_length(x.tokens, y.tokens) == oracle::lcs(x.tokens, y.tokens), "lcs differs from the oracle");
  }
  const double hand = rougeL(tokenize("a b c"), tokenize("a c"));
  o.require(hand == 0.8, fmt("hand case %.17g", hand));
  if (o.pass) o.detail = "1000 random pairs exact, hand case 0.8";
  return o;
}

// 8 -------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome end_to_end(const std::string& cli) {
  Outcome o;
  if (cli.empty()) {
    o.require(false, "path to the lmue binary not given");
    return o;
  }
  MockServer mock;
  mock.start();
  const fs::path toy = fs::path(LMUE_SOURCE_DIR) / "data" / "toy";
  const fs::path scratch = fs::temp_directory_path() / ("lmue_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(scratch);

  const auto t0 = Clock::now();
  std::vector<std::string> reports;
  for (int run = 0; run < 2; ++run) {
    const fs::path out = scratch / ("run" + std::to_string(run));
    const std::string cmd = "\"" + cli + "\" bench --config \"" + (toy / "bench.yaml").string() + "\" --out \"" +
                            out.string() + "\" --nli-url " + mock.base_url() + "/nli > \"" +
                            (scratch / "log.txt").string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    o.require(rc == 0, "cli bench exited with " + std::to_string(rc) + ": " + slurp(scratch / "log.txt"));
    reports.push_back(slurp(out / "report.json"));
  }
  const double secs = seconds_since(t0) / 2.0;
  o.require(!reports[0].empty() && reports[0] == reports[1], "reports differ between runs");

  if (o.pass) {
    const auto j = nlohmann::json::parse(reports[0]);
    double oracle_prr = NAN, constant_prr = NAN;
    int nli_rows = 0;
    for (const auto& row : j["rows"]) {
      const auto& cell = row["cells"][0];
      if (row["estimator"] == "oracle") oracle_prr = cell.value("prr", NAN);
      if (row["estimator"] == "constant") constant_prr = cell.value("prr", NAN);
      if (row["estimator"] == "semantic_entropy" && row["available"] == true) ++nli_rows;
    }
    o.require(std::fabs(oracle_prr - 1.0) <= 1e-9, fmt("oracle prr %.17g", oracle_prr));
    o.require(std::fabs(constant_prr) <= 1e-9, fmt("constant prr %.17g", constant_prr));
    o.require(nli_rows == 1, "NLI rows did not use the mock provider");
  }
  o.require(secs < 60.0, fmt("run took %.1fs", secs));
  if (o.pass) o.detail = fmt("byte-identical reports, %.2fs per run", secs);
  std::error_code ec;
  fs::remove_all(scratch, ec);
  return o;
}

// 9 -------------------------------------------------------------------------
Outcome roster() {
  Outcome o;
  // Method families every build must list.
  const std::vector<std::string> rows = {
      "Maximum sequence probability",
      "Perplexity",
      "Mean token entropy",
      "Monte Carlo sequence entropy",
      "Pointwise mutual information (PMI)",
      "Conditional PMI",
      "Semantic entropy",
      "Sentence-level ensemble-based measures",
      "Token-level ensemble-based measures",
      "Mahalanobis distance (MD)",
      "Robust density estimation (RDE)",
      "Relative Mahalanobis distance (RMD)",
      "Hybrid Uncertainty Quantification (HUQ)",
      "p(True)",
      "Number of semantic sets (NumSets)",
      "Sum of eigenvalues of the graph Laplacian (EigV)",
      "Degree matrix (Deg)",
      "Eccentricity (Ecc)",
      "Lexical similarity (LexSim)",
  };
  MockServer model;
  model.start();
  ServiceConfig cfg;
  cfg.model.base_url = model.base_url() + "/v1";
  cfg.model.model_name = "mock";
  cfg.nli_url = model.base_url() + "/nli";
  cfg.retry = {2, std::chrono::milliseconds(1), std::chrono::milliseconds(2)};
  Service svc(cfg);
  const int port = svc.start();
  httplib::Client http("127.0.0.1", port);
  http.set_read_timeout(30, 0);

  const auto listing = http.Get("/v1/estimators");
  o.require(listing && listing->status == 200, "GET /v1/estimators failed");
  if (!o.pass) return o;
  const auto entries = nlohmann::json::parse(listing->body)["estimators"];
  std::set<std::string> methods;
  for (const auto& e : entries) methods.insert(e["method"].get<std::string>());
  for (const auto& r : rows) o.require(methods.count(r) == 1, "missing roster row '" + r + "'");
  o.require(rows.size() == 19, "roster table size");

  int ok = 0, typed = 0;
  for (const auto& e : entries) {
    const std::string name = e["name"];
    const nlohmann::json body = {{"messages", {{{"role", "user"}, {"content", "Capital of France?"}}}},
                                 {"estimator", name}};
    const auto res = http.Post("/v1/chat", body.dump(), "application/json");
    if (!res) {
      o.require(false, name + ": no response");
      continue;
    }
    const auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (res->status == 200) {
      o.require(j.contains("uncertainty_raw") && j["uncertainty_raw"].is_number(), name + ": no score");
      ++ok;
    } else {
      o.require(res->status == 422 && j.contains("capability"),
                name + ": status " + std::to_string(res->status) + " " + res->body);
      ++typed;
    }
  }
  svc.stop();
  if (o.pass) {
    o.detail = "19 rows covered; " + std::to_string(ok) + " entries scored, " + std::to_string(typed) +
               " typed capability errors";
  }
  return o;
}

// 10 ------------------------------------------------------------------------
Outcome calibration() {
  Outcome o;
  const auto t = fit_bins({1, 2, 3, 4}, {1, 1, 0, 0}, 2);
  o.require(t.bin_confidence == std::vector<double>{1.0, 0.0}, "two-bin fixture");

  std::mt19937_64 gen(1010);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud;
  std::vector<double> s(500), q(500);
  for (int i = 0; i < 500; ++i) {
    s[i] = nd(gen);
    q[i] = ud(gen);
  }
  const auto table = fit_bins(s, q, 10);
  const double inf = std::numeric_limits<double>::infinity();
  std::uniform_int_distribution<int> kind(0, 3);
  for (int i = 0; i < 100000; ++i) {
    double x;
    switch (kind(gen)) {
      case 0: x = nd(gen); break;
      case 1: x = nd(gen) * 1e300; break;
      case 2: x = table.bin_edges[1 + gen() % (table.bin_edges.size() - 2)]; break;
      default: x = (gen() % 2) ? inf : -inf;
    }
    const double c = normalize(table, x);
    if (!(c >= 0.0 && c <= 1.0)) {
      o.require(false, fmt("normalize(%.17g) = %.17g", x, c));
      break;
    }
  }
  if (o.pass) o.detail = "fixture {1, 0}; 100000 inputs mapped into [0, 1]";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"prr oracle identity", prr_oracle},
      {"prr rank invariance", prr_rank_invariance},
      {"spectral identities", spectral},
      {"information measures", information},
      {"ensemble measures", ensemble},
      {"density estimators", density},
      {"text metrics", text_metrics},
      {"end-to-end toy bench", [&] { return end_to_end(cli); }},
      {"estimator roster", roster},
      {"calibration", calibration},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %2zu %-22s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
