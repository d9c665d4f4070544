#include <cmath>
#include <random>

#include "doctest.h"
#include "lmue/benchmark.hpp"
#include "lmue/errors.hpp"
#include "lmue/registry.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lmue;

namespace {

// Record whose greedy probability tracks its quality: exact answers get a
// high probability, wrong ones a low one.
GenerationRecord scored(const std::string& id, const std::string& out, const std::string& ref, double p) {
  auto r = testing::record_with_logprobs({std::log(p)}, id);
  r.output_text = out;
  r.reference_text = ref;
  return r;
}

Dataset anti_ordered() {
  Dataset ds;
  ds.records = {scored("a", "paris", "paris", 0.95), scored("b", "lyon", "paris", 0.30),
                scored("c", "big red dog", "big red cat", 0.80), scored("d", "nice", "paris", 0.10),
                scored("e", "the sea", "the deep sea", 0.85)};
  return ds;
}

}  // namespace

TEST_CASE("pr curve edge cases") {
  const std::vector<double> q{1, 0, 0.5, 0.25};
  const auto flat = pr_curve(q, {3, 3, 3, 3});
  for (double m : flat.mean_quality) CHECK(m == doctest::Approx(0.4375));
  CHECK(flat.auc_vs_random == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(flat.rejection_rates.front() == 0.0);
  CHECK(flat.rejection_rates.back() == 1.0);
  CHECK(flat.rejection_rates.size() == 5);

  CHECK_THROWS_AS(pr_curve({1}, {1}), Error);
  CHECK_THROWS_AS(pr_curve({1, 2}, {1}), Error);
}

TEST_CASE("three-point case against the enumeration oracle") {
  const std::vector<double> q{1, 0, 0.5}, u{0.5, 0.2, 0.9};
  const auto c = pr_curve(q, u);
  const auto o = oracle::rejection_curve_enumerated(q, u);
  for (std::size_t j = 0; j < o.size(); ++j) CHECK(c.mean_quality[j] == doctest::Approx(o[j]).epsilon(1e-12));
  CHECK(c.auc_vs_random == doctest::Approx(oracle::area(o, q)).epsilon(1e-12));
  CHECK(prr(q, u) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("tied blocks match enumeration over tie orders") {
  std::mt19937_64 gen(21);
  std::uniform_int_distribution<int> level(0, 2);
  std::uniform_real_distribution<double> uq;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + t % 6;
    std::vector<double> q(n), u(n);
    for (std::size_t i = 0; i < n; ++i) {
      q[i] = uq(gen);
      u[i] = level(gen);
    }
    const auto c = pr_curve(q, u);
    const auto o = oracle::rejection_curve_enumerated(q, u);
    for (std::size_t j = 0; j <= n; ++j) REQUIRE(c.mean_quality[j] == doctest::Approx(o[j]).epsilon(1e-12));
  }
}

TEST_CASE("prr bounds and degenerate input") {
  const std::vector<double> q{0.1, 0.9, 0.4, 0.4, 0.7};
  std::vector<double> neg(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) neg[i] = -q[i];
  CHECK(prr(q, neg) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(prr(q, {1, 1, 1, 1, 1}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(prr(q, q) <= 1.0 + 1e-9);
  CHECK_THROWS_AS(prr({0.5, 0.5}, {1, 2}), Error);

  SUBCASE("shuffling items leaves prr unchanged") {
    const std::vector<double> u{0.3, 0.2, 0.9, 0.1, 0.5};
    const double base = prr(q, u);
    const std::vector<std::size_t> p{3, 0, 4, 1, 2};
    std::vector<double> q2, u2;
    for (auto i : p) {
      q2.push_back(q[i]);
      u2.push_back(u[i]);
    }
    CHECK(prr(q2, u2) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("bootstrap stderr is seeded") {
  const std::vector<double> q{0.1, 0.9, 0.4, 0.2, 0.7, 1.0, 0.0};
  const std::vector<double> u{0.8, 0.1, 0.3, 0.9, 0.5, 0.2, 0.4};
  const double a = bootstrap_prr_stderr(q, u, {200, 4});
  CHECK(a == bootstrap_prr_stderr(q, u, {200, 4}));
  CHECK(a >= 0.0);
  CHECK(bootstrap_prr_stderr(q, u, {200, 5}) != a);
}

TEST_CASE("subsample indices") {
  const auto all = subsample_indices(5, -1, 1);
  CHECK(all.size() == 5);
  const auto some = subsample_indices(100, 10, 3);
  CHECK(some.size() == 10);
  CHECK(std::is_sorted(some.begin(), some.end()));
  CHECK(some == subsample_indices(100, 10, 3));
  CHECK(some != subsample_indices(100, 10, 4));
}

TEST_CASE("quality scores") {
  auto ds = anti_ordered();
  auto q = quality_scores(ds, QualityMetric::RougeL);
  CHECK(*q.scores[0] == 1.0);
  CHECK(*q.scores[1] == 0.0);
  CHECK(*q.scores[2] == doctest::Approx(score_text(TextMetric::RougeL, "big red dog", "big red cat")));
  ds.records[1].reference_text.reset();
  q = quality_scores(ds, QualityMetric::Rouge1);
  CHECK_FALSE(q.scores[1]);
  CHECK(q.errors.size() == 1);
  CHECK_THROWS_AS(quality_scores(ds, QualityMetric::External), Error);
  const auto ext = quality_scores(ds, QualityMetric::External, [](const auto& pairs) {
    return std::vector<double>(pairs.size(), 0.5);
  });
  CHECK(*ext.scores[0] == 0.5);
  CHECK_THROWS_AS(quality_metric_from_string("meteor"), Error);
}

TEST_CASE("run benchmark") {
  const auto& reg = EstimatorRegistry::builtin();
  EstimatorContext ctx;
  BenchmarkOptions opt;
  opt.bootstrap_resamples = 100;
  const std::vector<NamedDataset> data{{"toy", anti_ordered()}};

  const auto report = run_benchmark(data, {"msp", "oracle", "constant", "mahalanobis"},
                                    {QualityMetric::RougeL}, reg, ctx, opt);
  REQUIRE(report.rows.size() == 4);
  CHECK(report.columns == std::vector<std::string>{"toy/rougeL"});
  CHECK(report.rows[0].cells[0].prr_mean == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(report.rows[1].cells[0].prr_mean == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(report.rows[2].cells[0].prr_mean == doctest::Approx(0.0).epsilon(1e-9));
  CHECK_FALSE(report.rows[3].available);
  CHECK(report.rows[3].skipped.size() == 5);

  const auto again = run_benchmark(data, {"msp", "oracle", "constant", "mahalanobis"},
                                   {QualityMetric::RougeL}, reg, ctx, opt);
  CHECK(report_to_json(report) == report_to_json(again));

  const auto text = report_to_text(report);
  CHECK(text.find("UE Method") != std::string::npos);
  CHECK(text.find("unavailable") != std::string::npos);
  CHECK(text.find("1.000±") != std::string::npos);
  CHECK(text.find("-0.000") == std::string::npos);

  const auto j = nlohmann::json::parse(report_to_json(report));
  CHECK(j["rows"][3]["available"] == false);
  CHECK(j["rows"][0]["cells"][0]["records_used"] == 5);

  SUBCASE("missing reference aborts unless exceptions are ignored") {
    auto bad = data;
    bad[0].dataset.records[2].reference_text.reset();
    try {
      run_benchmark(bad, {"msp"}, {QualityMetric::RougeL}, reg, ctx, opt);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("'c'") == std::string::npos);
      CHECK(std::string(e.what()).find("c: missing reference_text") != std::string::npos);
    }
    opt.ignore_exceptions = true;
    const auto r = run_benchmark(bad, {"msp"}, {QualityMetric::RougeL}, reg, ctx, opt);
    CHECK(r.rows[0].cells[0].records_used == 4);
  }

  SUBCASE("unknown estimator") {
    CHECK_THROWS_AS(run_benchmark(data, {"nope"}, {QualityMetric::RougeL}, reg, ctx, opt), Error);
  }

  SUBCASE("multiple seeds with subsampling") {
    opt.seeds = {1, 2, 3};
    opt.subsample = 4;
    const auto r = run_benchmark(data, {"oracle"}, {QualityMetric::RougeL}, reg, ctx, opt);
    CHECK(r.rows[0].cells[0].prr_mean == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.rows[0].cells[0].records_used == 4);
  }
}
