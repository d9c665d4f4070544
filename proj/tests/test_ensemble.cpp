#include <cmath>
#include <random>

#include "doctest.h"
#include "lmue/ensemble.hpp"
#include "lmue/errors.hpp"
#include "support.hpp"

using namespace lmue;

namespace {

StepDistributionSet pq() {
  return align_step({{{0, 0.75}, {1, 0.25}}, {{0, 0.25}, {1, 0.75}}});
}

GenerationRecord two_member_record(int steps, StepDistribution a, StepDistribution b) {
  std::vector<double> lps(steps, std::log(0.5));
  GenerationRecord r = testing::record_with_logprobs(lps);
  for (auto& s : r.output_tokens) s.token_id = 0;
  r.ensemble_traces = {{"m0", std::vector<StepDistribution>(steps, a)},
                       {"m1", std::vector<StepDistribution>(steps, b)}};
  return r;
}

}  // namespace

TEST_CASE("token measures for the p/q pair") {
  const auto m = token_measures(pq());
  CHECK(m.total_entropy == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(m.data_uncertainty == doctest::Approx(0.5623351446188083).epsilon(1e-9));
  CHECK(m.mi == doctest::Approx(0.130812035941137).epsilon(1e-9));
  CHECK(m.epkl == doctest::Approx(0.5493061443340549).epsilon(1e-9));
  CHECK(m.rmi == doctest::Approx(0.4184941083929179).epsilon(1e-9));
}

TEST_CASE("identical and one-hot members") {
  const auto same = token_measures(align_step({{{0, 0.6}, {1, 0.4}}, {{0, 0.6}, {1, 0.4}}}));
  CHECK(same.mi == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(same.epkl == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(same.total_entropy == doctest::Approx(same.data_uncertainty).epsilon(1e-12));
  const auto hot = token_measures(align_step({{{3, 1.0}}, {{3, 1.0}}}));
  CHECK(hot.total_entropy == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(hot.rmi == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("alignment fills missing tokens with the floor") {
  const auto s = align_step({{{0, 1.0}}, {{1, 1.0}}});
  REQUIRE(s.support.size() == 2);
  CHECK(s.per_model[0][1] == doctest::Approx(kEpsilonFloor).epsilon(1e-3));
  CHECK(std::isfinite(token_measures(s).epkl));

  StepDistributionSet bad = s;
  bad.per_model[1].pop_back();
  CHECK_THROWS_AS(token_measures(bad), Error);
}

TEST_CASE("member permutation leaves measures unchanged") {
  const auto a = token_measures(align_step({{{0, 0.7}, {1, 0.3}}, {{0, 0.2}, {2, 0.8}}, {{1, 0.5}, {2, 0.5}}}));
  const auto b = token_measures(align_step({{{1, 0.5}, {2, 0.5}}, {{0, 0.7}, {1, 0.3}}, {{0, 0.2}, {2, 0.8}}}));
  CHECK(a.epkl == doctest::Approx(b.epkl).epsilon(1e-12));
  CHECK(a.mi == doctest::Approx(b.mi).epsilon(1e-12));
}

TEST_CASE("aggregation over steps") {
  const auto r = two_member_record(2, {{0, 0.75}, {1, 0.25}}, {{0, 0.25}, {1, 0.75}});
  CHECK(aggregate_token_measure(r, TokenMeasure::MutualInformation) ==
        doctest::Approx(2 * 0.130812035941137).epsilon(1e-9));
  CHECK(aggregate_token_measure(r, TokenMeasure::MutualInformation, true) ==
        doctest::Approx(0.130812035941137).epsilon(1e-9));
  // total = data + mi at every step, so the aggregates differ by the mi sum.
  CHECK(aggregate_token_measure(r, TokenMeasure::TotalEntropy) -
            aggregate_token_measure(r, TokenMeasure::DataUncertainty) ==
        doctest::Approx(2 * 0.130812035941137).epsilon(1e-9));
}

TEST_CASE("sequence msp and rmi") {
  // Single step, greedy token 0: member probabilities 0.6 and 0.8.
  auto r = two_member_record(1, {{0, 0.6}, {1, 0.4}}, {{0, 0.8}, {1, 0.2}});
  CHECK(seq_msp_ensemble(r) == doctest::Approx(0.3).epsilon(1e-9));

  r = two_member_record(1, {{0, 0.25}, {1, 0.75}}, {{0, 0.75}, {1, 0.25}});
  CHECK(seq_rmi(r) == doctest::Approx(0.14384103622589042).epsilon(1e-9));
  std::swap(r.ensemble_traces[0], r.ensemble_traces[1]);
  CHECK(seq_rmi(r) == doctest::Approx(0.14384103622589042).epsilon(1e-9));

  r = two_member_record(2, {{0, 1.0}}, {{0, 1.0}});
  CHECK(seq_msp_ensemble(r) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(seq_rmi(r) == doctest::Approx(0.0).epsilon(1e-12));

  r.ensemble_traces.pop_back();
  try {
    seq_rmi(r);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnavailableInput);
  }
}

TEST_CASE("a zero-probability member is floored") {
  auto r = two_member_record(1, {{1, 1.0}}, {{0, 0.8}, {1, 0.2}});
  CHECK(seq_msp_ensemble(r) == doctest::Approx(1.0 - 0.8 / 2).epsilon(1e-9));
}
