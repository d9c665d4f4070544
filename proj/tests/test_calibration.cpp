#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "lmue/calibration.hpp"
#include "lmue/errors.hpp"
#include "support.hpp"

using namespace lmue;

TEST_CASE("clean two-bin split") {
  const auto t = fit_bins({1, 2, 3, 4}, {1, 1, 0, 0}, 2, "msp");
  CHECK(t.bin_confidence == std::vector<double>{1.0, 0.0});
  CHECK(t.bin_counts == std::vector<long>{2, 2});
  REQUIRE(t.bin_edges.size() == 3);
  CHECK(std::isinf(t.bin_edges.front()));
  CHECK(std::isinf(t.bin_edges.back()));
  CHECK(normalize(t, -100.0) == 1.0);
  CHECK(normalize(t, 3.0) == 0.0);
  CHECK(normalize(t, 2.999) == 1.0);
  CHECK(normalize(t, 1e300) == 0.0);
}

TEST_CASE("bin confidence is the mean quality") {
  const auto t = fit_bins({1, 2, 3, 4}, {0.2, 0.4, 1.0, 1.0}, 2);
  CHECK(t.bin_confidence[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(normalize(t, 1.5) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("constant quality") {
  std::vector<double> s(30), q(30, 0.7);
  for (int i = 0; i < 30; ++i) s[i] = i * 0.1;
  const auto t = fit_bins(s, q, 10);
  CHECK(t.bins() == 10);
  for (double c : t.bin_confidence) CHECK(c == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("tied scores merge bins and warn") {
  const auto t = fit_bins({1, 1, 1, 1, 1, 1, 2, 3}, {1, 1, 1, 1, 1, 1, 0, 0}, 4);
  CHECK(t.bins() < 4);
  CHECK_FALSE(t.warnings.empty());
  long total = 0;
  for (long c : t.bin_counts) {
    CHECK(c >= 1);
    total += c;
  }
  CHECK(total == 8);
}

TEST_CASE("input errors") {
  CHECK_THROWS_AS(fit_bins({1, 2}, {1}, 1), Error);
  CHECK_THROWS_AS(fit_bins({1, 2}, {1, 0}, 3), Error);
  CHECK_THROWS_AS(fit_bins({1, std::nan("")}, {1, 0}, 1), Error);
  CHECK_THROWS_AS(fit_bins({1, 2}, {1, 1.5}, 1), Error);
}

TEST_CASE("normalize is total") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd(0.0, 3.0);
  std::vector<double> s(100), q(100);
  std::uniform_real_distribution<double> u;
  for (int i = 0; i < 100; ++i) {
    s[i] = nd(gen);
    q[i] = u(gen);
  }
  const auto t = fit_bins(s, q, 10);
  for (double x : {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                   std::numeric_limits<double>::max(), -0.0, 0.0}) {
    const double c = normalize(t, x);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("json persistence") {
  testing::TempDir dir;
  const auto t = fit_bins({1, 2, 3, 4, 5, 6}, {1, 0.5, 0.5, 0, 0, 0}, 3, "perplexity");
  const auto path = dir.path / "cal.json";
  save_calibration(t, path);
  const auto back = load_calibration(path);
  CHECK(back.estimator_name == "perplexity");
  CHECK(back.bin_edges == t.bin_edges);
  CHECK(back.bin_confidence == t.bin_confidence);
  CHECK(back.bin_counts == t.bin_counts);
  CHECK(testing::read_file(path).find("\"-inf\"") != std::string::npos);

  CHECK_THROWS_AS(calibration_from_json("{\"estimator_name\":\"x\"}"), Error);
  CHECK_THROWS_AS(calibration_from_json("not json"), Error);
}
