#include <doctest.h>

#include <random>

#include "cas/oracle.hpp"
#include "fixtures.hpp"

using cas::Level;
using cas::LevelMask;
using cas::Signal;
using fixtures::dist;

namespace {

// Two states x two actions plus goal; hidden keys are per state, the agent
// sees one bucket for states 0 and 1.
cas::OracleSpec spec(double epsilon) {
  cas::OracleSpec o;
  o.hidden_projection = std::make_shared<const cas::FeatureProjection>(
      3, 2, std::vector<cas::FeatureKey>{{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}, {2, 1}});
  o.true_lambda.set({{0, 0}, Level::kVerified}, dist(0, 1, 0, 0));
  o.true_lambda.set({{0, 0}, Level::kSupervised}, dist(0.7, 0, 0, 0.3));
  o.true_lambda.set({{1, 0}, Level::kSupervised}, dist(0.1, 0, 0, 0.9));
  o.kappa_h.assign(6, LevelMask{Level::kNone, Level::kVerified});
  o.kappa_h[0] = LevelMask::all();
  o.tau = std::make_shared<const cas::HumanTransition>(
      3, 2, std::vector<cas::TransitionRow>{{{2, 1.0}}, {{0, 0.5}, {1, 0.5}}, {{2, 1.0}}, {{2, 1.0}}, {{2, 1.0}}, {{2, 1.0}}});
  o.epsilon = epsilon;
  return o;
}

double frequency(const cas::HumanOracle& h, cas::StateId s, Level l, Signal target, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += h.sample_feedback(s, 0, l, rng) == target;
  return static_cast<double>(hits) / n;
}

}  // namespace

TEST_CASE("feedback sampling") {
  const cas::HumanOracle exact(spec(0.0));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) CHECK(exact.sample_feedback(0, 0, Level::kVerified, rng) == Signal::kApprove);
  CHECK(std::abs(frequency(exact, 0, Level::kSupervised, Signal::kOverride, 10000, 2) - 0.3) < 0.01 + 0.005);
  CHECK_THROWS_AS(exact.sample_feedback(0, 0, Level::kNone, rng), std::invalid_argument);
  CHECK_THROWS_AS(exact.sample_feedback(0, 0, Level::kUnsupervised, rng), std::invalid_argument);

  const cas::HumanOracle noisy(spec(0.02));
  CHECK(std::abs(frequency(noisy, 0, Level::kVerified, Signal::kDisapprove, 10000, 3) - 0.02) < 0.005);
  const auto eff = noisy.effective_distribution(0, 0, Level::kSupervised);
  CHECK(eff[3] == doctest::Approx(0.3 * 0.98 + 0.7 * 0.02));
}

TEST_CASE("sampled signals are always valid") {
  const cas::HumanOracle h(spec(0.05));
  std::mt19937_64 rng(4);
  for (cas::StateId s = 0; s < 2; ++s)
    for (cas::ActionId a = 0; a < 2; ++a)
      for (Level l : {Level::kVerified, Level::kSupervised})
        for (int i = 0; i < 200; ++i) CHECK(cas::signal_valid(h.sample_feedback(s, a, l, rng), l));
}

TEST_CASE("takeover follows tau") {
  const cas::HumanOracle h(spec(0.0));
  std::mt19937_64 rng(5);
  int first = 0;
  for (int i = 0; i < 10000; ++i) {
    CHECK(h.human_takeover(0, 0, rng) == 2);
    first += h.human_takeover(0, 1, rng) == 0;
    CHECK(h.human_takeover(2, 0, rng) == 2);
  }
  CHECK(std::abs(first / 10000.0 - 0.5) < 0.02);
}

TEST_CASE("gate queries") {
  const cas::HumanOracle exact(spec(0.0));
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    CHECK(exact.answer_gate_query(0, 0, Level::kSupervised, rng));
    CHECK_FALSE(exact.answer_gate_query(1, 0, Level::kSupervised, rng));
  }
  const cas::HumanOracle noisy(spec(0.05));
  int denied = 0;
  for (int i = 0; i < 10000; ++i) denied += !noisy.answer_gate_query(0, 0, Level::kSupervised, rng);
  CHECK(std::abs(denied / 10000.0 - 0.05) < 0.01);
}

TEST_CASE("projection onto agent buckets mixes hidden rates") {
  const cas::HumanOracle h(spec(0.0));
  const cas::FeatureProjection agent(
      3, 2, std::vector<cas::FeatureKey>{{0, 0}, {0, 1}, {0, 0}, {0, 1}, {2, 0}, {2, 1}});
  const auto mixed = h.projected_lambda(agent);
  CHECK(mixed.probability({{0, 0}, Level::kSupervised}, Signal::kOverride) == doctest::Approx((0.3 + 0.9) / 2));
  // State 1 action 0 has no verified entry, so it reads the uniform default.
  CHECK(mixed.probability({{0, 0}, Level::kVerified}, Signal::kApprove) == doctest::Approx((1.0 + 0.5) / 2));

  // Empirical check: sampling uniformly across the bucket's members.
  std::mt19937_64 rng(7);
  int overrides = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) overrides += h.sample_feedback(i % 2, 0, Level::kSupervised, rng) == Signal::kOverride;
  CHECK(std::abs(static_cast<double>(overrides) / n - 0.6) < 0.015);
}

TEST_CASE("oracle settings are validated") {
  auto bad = spec(1.0);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec(0.0);
  bad.kappa_h.pop_back();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_NOTHROW(spec(0.01).validate());
}
