#include <doctest.h>

#include <random>

#include "cas/feedback.hpp"
#include "fixtures.hpp"

using cas::FeatureKey;
using cas::FeedbackCounts;
using cas::FeedbackKey;
using cas::Level;
using cas::Signal;

namespace {

const FeedbackKey kOpenL1{FeatureKey{4, 1}, Level::kVerified};
const FeedbackKey kOpenL2{FeatureKey{4, 1}, Level::kSupervised};

double max_abs_diff(const cas::SignalDistribution& a, const cas::SignalDistribution& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("recording feedback") {
  FeedbackCounts counts;
  counts.record(kOpenL1, Signal::kApprove);
  CHECK(counts.count(kOpenL1, Signal::kApprove) == 1);
  CHECK_THROWS_AS(counts.record(kOpenL1, Signal::kOverride), std::invalid_argument);
  CHECK_THROWS_AS(counts.record({FeatureKey{4, 1}, Level::kUnsupervised}, Signal::kNone), std::invalid_argument);
  counts.record(kOpenL1, Signal::kApprove);
  counts.record(kOpenL1, Signal::kApprove);
  counts.record(kOpenL1, Signal::kDisapprove);
  CHECK(counts.count(kOpenL1, Signal::kApprove) == 3);
  CHECK(counts.count(kOpenL1, Signal::kDisapprove) == 1);
  CHECK(counts.total(kOpenL1) == 4);
  CHECK(counts.total(kOpenL2) == 0);
  CHECK(counts.total_feedback() == 4);
}

TEST_CASE("posterior means") {
  FeedbackCounts counts;
  CHECK(counts.posterior_mean(kOpenL1)[1] == 0.5);
  CHECK(counts.posterior_mean(kOpenL1)[2] == 0.5);
  for (int i = 0; i < 3; ++i) counts.record(kOpenL1, Signal::kApprove);
  counts.record(kOpenL1, Signal::kDisapprove);
  CHECK(counts.posterior_mean(kOpenL1)[1] == doctest::Approx(4.0 / 6.0));
  for (int i = 0; i < 99; ++i) counts.record(kOpenL2, Signal::kNone);
  CHECK(counts.posterior_mean(kOpenL2)[0] == doctest::Approx(100.0 / 101.0));
  CHECK(counts.posterior_mean(kOpenL2)[3] == doctest::Approx(1.0 / 101.0));

  const auto lambda = cas::estimate_lambda(counts);
  CHECK(lambda.probability(kOpenL1, Signal::kApprove) == doctest::Approx(4.0 / 6.0));
  CHECK(lambda.probability({FeatureKey{9, 9}, Level::kVerified}, Signal::kApprove) == 0.5);
  CHECK(lambda.probability({FeatureKey{9, 9}, Level::kSupervised}, Signal::kOverride) == 0.5);
}

TEST_CASE("skewed priors") {
  FeedbackCounts counts;
  counts.set_prior(Level::kVerified, {0, 9, 1, 0});
  CHECK(counts.posterior_mean(kOpenL1)[1] == doctest::Approx(0.9));
  CHECK_THROWS_AS(counts.set_prior(Level::kVerified, {1, 9, 1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(counts.set_prior(Level::kSupervised, {0, 0, 0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(FeedbackCounts(0.0), std::invalid_argument);
}

TEST_CASE("estimated profiles are valid distributions") {
  std::mt19937_64 rng(2);
  FeedbackCounts counts;
  std::uniform_int_distribution<int> bucket(0, 5), coin(0, 1);
  for (int i = 0; i < 500; ++i) {
    const FeatureKey f{bucket(rng), coin(rng)};
    if (coin(rng)) counts.record({f, Level::kVerified}, coin(rng) ? Signal::kApprove : Signal::kDisapprove);
    else counts.record({f, Level::kSupervised}, coin(rng) ? Signal::kNone : Signal::kOverride);
  }
  const auto lambda = cas::estimate_lambda(counts);
  for (const auto& [key, d] : lambda.entries()) CHECK_NOTHROW(cas::check_distribution(d, key.level));
}

TEST_CASE("convergence gate") {
  FeedbackCounts counts(1.0, 20, 0.01);
  CHECK_FALSE(counts.converged(kOpenL1));
  int n = 0;
  while (!counts.converged(kOpenL1) && n < 1000) {
    counts.record(kOpenL1, Signal::kApprove);
    ++n;
  }
  // Mean after k approvals is (k+1)/(k+2); 20 more approvals move it by
  // 20 / ((k+2)(k+22)), which first drops below 0.01 at k = 35.
  int expected = 0;
  for (int k = 0;; ++k)
    if (20.0 / ((k + 2.0) * (k + 22.0)) < 0.01) {
      expected = k + 20;
      break;
    }
  CHECK(n == expected);
  counts.record(kOpenL1, Signal::kDisapprove);
  CHECK(counts.converged(kOpenL1));
}

TEST_CASE("posterior mean is consistent") {
  const cas::SignalDistribution truth{0, 0.3, 0.7, 0};
  int within = 0;
  double sum_small = 0.0, sum_large = 0.0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution approve(0.3);
    FeedbackCounts counts;
    double err_small = 0.0;
    for (int i = 1; i <= 2000; ++i) {
      counts.record(kOpenL1, approve(rng) ? Signal::kApprove : Signal::kDisapprove);
      if (i == 20) err_small = max_abs_diff(counts.posterior_mean(kOpenL1), truth);
    }
    const double err = max_abs_diff(counts.posterior_mean(kOpenL1), truth);
    if (err < 0.05) ++within;
    sum_small += err_small;
    sum_large += err;
  }
  CHECK(within >= 38);
  CHECK(sum_large < sum_small);
}

TEST_CASE("value of information") {
  FeedbackCounts counts;
  std::mt19937_64 rng(1);
  const FeatureKey f{0, 0};
  auto constant = [](const cas::SignalDistribution&, const cas::SignalDistribution&) {
    return std::array<double, cas::kNumLevels>{3, 3, 3, 3};
  };
  CHECK(cas::evsi(counts, f, constant, 200, rng).value == 0.0);
  CHECK_THROWS_AS(cas::evsi(counts, f, constant, 0, rng), std::invalid_argument);

  // Nearly degenerate posterior: the decision cannot change.
  FeedbackCounts sure;
  for (int i = 0; i < 100000; ++i) sure.record({f, Level::kSupervised}, Signal::kNone);
  auto linear = [](const cas::SignalDistribution&, const cas::SignalDistribution& sup) {
    return std::array<double, cas::kNumLevels>{6, 20, 2 + 8 * sup[3], 9};
  };
  CHECK(cas::evsi(sure, f, linear, 400, rng).value < 1e-9);
}

TEST_CASE("value of information matches the closed form on the hazard fixture") {
  const auto fx = fixtures::evsi_fixture();
  const auto u = cas::cas_level_values(fx.model, fx.flat_start, 0);
  // U at override probability o: (6, ., 2 + 8 (1 - o), 9).
  const auto at_half = u(fixtures::dist(0, 0.5, 0.5, 0), fixtures::dist(0.5, 0, 0, 0.5));
  CHECK(at_half[0] == doctest::Approx(6.0));
  CHECK(at_half[2] == doctest::Approx(6.0));
  CHECK(at_half[3] == doctest::Approx(9.0));
  CHECK(u(fixtures::dist(0, 1, 0, 0), fixtures::dist(0, 0, 0, 1))[2] == doctest::Approx(2.0));

  double previous = INFINITY;
  for (double half : {2.0, 20.0}) {
    FeedbackCounts counts;
    counts.set_prior(Level::kSupervised, {half, 0, 0, half});
    std::mt19937_64 rng(99);
    const auto est = cas::evsi(counts, fx.feature, u, 4000, rng);
    const double exact = fixtures::evsi_exact(2 * half);
    CHECK(std::abs(est.value - exact) < 4 * est.std_error + 0.02);
    CHECK(est.std_error > 0.0);
    CHECK(est.value < previous);
    previous = est.value;
  }
}

TEST_CASE("stationarity check") {
  const std::vector<double> zeros{0, 0, 0};
  const std::vector<double> one_big{0, 0.5, 0};
  CHECK(cas::is_lambda_stationary(zeros, 1e-3));
  CHECK_FALSE(cas::is_lambda_stationary(one_big, 1e-3));
  CHECK(cas::is_lambda_stationary(std::vector<double>{}, 1e-3));
  CHECK_THROWS_AS(cas::is_lambda_stationary(zeros, 0.0), std::invalid_argument);
}
