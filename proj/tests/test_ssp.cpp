#include <doctest.h>

#include <random>

#include "cas/ssp.hpp"
#include "fixtures.hpp"

using cas::SSP;
using cas::TransitionRow;

namespace {

SSP chain3() {
  return SSP(3, 1, {{{1, 1.0}}, {{2, 1.0}}, {{2, 1.0}}}, {1.0, 1.0, 0.0}, 0, 2);
}

SSP coin_flip() {
  return SSP(2, 1, {{{0, 0.5}, {1, 0.5}}, {{1, 1.0}}}, {1.0, 0.0}, 0, 1);
}

}  // namespace

TEST_CASE("goal-only problem has zero value") {
  SSP ssp(1, 2, {{{0, 1.0}}, {{0, 1.0}}}, {0.0, 0.0}, 0, 0);
  const auto sol = cas::solve_value_iteration(ssp);
  CHECK(sol.values[0] == 0.0);
  CHECK(cas::q_value(ssp, sol.values, 0, 1) == 0.0);
}

TEST_CASE("deterministic chain") {
  const auto ssp = chain3();
  const auto sol = cas::solve_value_iteration(ssp);
  CHECK(sol.values[0] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(sol.values[1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sol.values[2] == 0.0);
  CHECK(cas::q_value(ssp, sol.values, 0, 0) == doctest::Approx(2.0));
  CHECK(cas::q_value(ssp, sol.values, 2, 0) == 0.0);
  CHECK(cas::brute_force_values(ssp, 5)[0] == doctest::Approx(2.0));
}

TEST_CASE("coin flip") {
  const auto ssp = coin_flip();
  const auto sol = cas::solve_value_iteration(ssp);
  CHECK(sol.values[0] == doctest::Approx(2.0).epsilon(1e-6));
  // 1 + 0.5 * 0 + 0.5 * 2
  cas::ValueFunction exact{{2.0, 0.0}};
  CHECK(cas::q_value(ssp, exact, 0, 0) == doctest::Approx(2.0));
  CHECK(std::abs(cas::brute_force_values(ssp, 30)[0] - 2.0) < 1e-6);
}

TEST_CASE("horizon zero charges the truncation value") {
  const auto ssp = chain3();
  const auto v = cas::brute_force_values(ssp, 0, 1e9);
  CHECK(v[0] == 1e9);
  CHECK(v[1] == 1e9);
  CHECK(v[2] == 0.0);
  const auto zero = cas::brute_force_values(ssp, 0);
  CHECK(zero[0] == 0.0);
}

TEST_CASE("construction rejects malformed problems") {
  CHECK_THROWS_AS(SSP(2, 1, {{{1, 0.7}}, {{1, 1.0}}}, {1.0, 0.0}, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(SSP(2, 1, {{{1, 1.0}}, {{1, 1.0}}}, {0.0, 0.0}, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(SSP(2, 1, {{{1, 1.0}}, {{0, 1.0}}}, {1.0, 0.0}, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(SSP(2, 1, {{{1, 1.0}}, {{1, 1.0}}}, {1.0, 0.5}, 0, 1), std::invalid_argument);
  // start cannot reach the goal
  CHECK_THROWS_AS(SSP(2, 1, {{{0, 1.0}}, {{1, 1.0}}}, {1.0, 0.0}, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(SSP(2, 1, {{{5, 1.0}}, {{1, 1.0}}}, {1.0, 0.0}, 0, 1), std::invalid_argument);
}

TEST_CASE("ties go to the lowest action index") {
  SSP ssp(2, 3, {{{1, 1.0}}, {{1, 1.0}}, {{1, 1.0}}, {{1, 1.0}}, {{1, 1.0}}, {{1, 1.0}}},
          {2.0, 1.0, 1.0, 0.0, 0.0, 0.0}, 0, 1);
  CHECK(cas::solve_value_iteration(ssp).policy[0] == 1);
}

TEST_CASE("allowed predicate restricts the policy") {
  SSP ssp(2, 2, {{{1, 1.0}}, {{1, 1.0}}, {{1, 1.0}}, {{1, 1.0}}}, {1.0, 5.0, 0.0, 0.0}, 0, 1);
  const auto sol = cas::solve_value_iteration(ssp, {}, [](cas::StateId, cas::ActionId a) { return a == 1; });
  CHECK(sol.policy[0] == 1);
  CHECK(sol.values[0] == doctest::Approx(5.0));
}

TEST_CASE("no proper policy is reported, not looped on") {
  // Action 0 self-loops forever; action 1 reaches the goal. Only action 0 allowed.
  SSP ssp(2, 2, {{{0, 1.0}}, {{1, 1.0}}, {{1, 1.0}}, {{1, 1.0}}}, {1.0, 1.0, 0.0, 0.0}, 0, 1);
  for (auto mode : {cas::SweepMode::kGaussSeidel, cas::SweepMode::kJacobi}) {
    cas::SolverOptions opts;
    opts.mode = mode;
    CHECK_THROWS_AS(cas::solve_value_iteration(ssp, opts, [](cas::StateId, cas::ActionId a) { return a == 0; }),
                    cas::NoProperPolicy);
  }
}

TEST_CASE("unreachable improper states are pinned at the cap") {
  // State 1 is unreachable from the start and can only loop when restricted.
  SSP ssp(3, 2, {{{2, 1.0}}, {{2, 1.0}}, {{1, 1.0}}, {{2, 1.0}}, {{2, 1.0}}, {{2, 1.0}}},
          {1.0, 1.0, 1.0, 1.0, 0.0, 0.0}, 0, 2);
  const auto sol = cas::solve_value_iteration(
      ssp, {}, [](cas::StateId s, cas::ActionId a) { return s != 1 || a == 0; });
  CHECK(sol.values[0] == doctest::Approx(1.0));
  CHECK(sol.values[1] >= 1e9 - 1.0);
}

TEST_CASE("random problems match the horizon oracle and policy evaluation") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 5;
    const int m = 1 + trial % 3;
    const auto ssp = fixtures::random_ssp(rng, n, m);
    const auto oracle = fixtures::horizon_values(ssp, 200);
    const auto library_bf = cas::brute_force_values(ssp, 200);
    for (auto mode : {cas::SweepMode::kGaussSeidel, cas::SweepMode::kJacobi}) {
      cas::SolverOptions opts;
      opts.mode = mode;
      const auto sol = cas::solve_value_iteration(ssp, opts);
      const auto evaluated = fixtures::evaluate_policy(ssp, sol.policy);
      for (cas::StateId s = 0; s < n; ++s) {
        CHECK(std::abs(sol.values[s] - oracle[static_cast<std::size_t>(s)]) < 1e-5);
        CHECK(std::abs(library_bf[s] - oracle[static_cast<std::size_t>(s)]) < 1e-9);
        CHECK(std::abs(evaluated[static_cast<std::size_t>(s)] - sol.values[s]) < 10 * opts.tolerance);
      }
    }
  }
}

TEST_CASE("sweeps from zero never decrease a value") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto ssp = fixtures::random_ssp(rng, 6, 3);
    const auto mask = cas::allowed_mask(ssp, {});
    for (auto mode : {cas::SweepMode::kGaussSeidel, cas::SweepMode::kJacobi}) {
      std::vector<double> v(6, 0.0);
      for (int k = 0; k < 50; ++k) {
        const auto before = v;
        cas::bellman_sweep(ssp, v, mode, mask, 1e9);
        for (std::size_t s = 0; s < v.size(); ++s) CHECK(v[s] >= before[s] - 1e-12);
      }
    }
  }
}

TEST_CASE("warm start reaches the same fixed point") {
  std::mt19937_64 rng(3);
  const auto ssp = fixtures::random_ssp(rng, 6, 3);
  const auto cold = cas::solve_value_iteration(ssp);
  std::vector<double> warm(6, 50.0);
  cas::SolverOptions opts;
  opts.warm_start = &warm;
  const auto hot = cas::solve_value_iteration(ssp, opts);
  for (cas::StateId s = 0; s < 6; ++s) CHECK(hot.values[s] == doctest::Approx(cold.values[s]).epsilon(1e-5));
}

TEST_CASE("with_start keeps the dynamics") {
  const auto ssp = chain3().with_start(1);
  CHECK(ssp.start() == 1);
  CHECK(ssp.transition(0, 0, 1) == 1.0);
  CHECK(ssp.transition(0, 0, 2) == 0.0);
}

TEST_CASE("proper states under a restriction") {
  SSP ssp(3, 2, {{{1, 1.0}}, {{2, 1.0}}, {{1, 1.0}}, {{2, 1.0}}, {{2, 1.0}}, {{2, 1.0}}},
          {1.0, 1.0, 1.0, 1.0, 0.0, 0.0}, 0, 2);
  std::vector<char> only_loop{1, 0, 1, 0, 1, 1};
  const auto proper = cas::proper_states(ssp, only_loop);
  CHECK_FALSE(proper[0]);
  CHECK_FALSE(proper[1]);
  CHECK(proper[2]);
  const auto all = cas::proper_states(ssp, cas::allowed_mask(ssp, {}));
  CHECK(all[0]);
  CHECK(all[1]);
}
