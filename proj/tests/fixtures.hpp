#pragma once

// Shared test fixtures and independent oracles.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include "cas/cas_model.hpp"
#include "cas/domains.hpp"
#include "cas/ssp.hpp"

namespace fixtures {

using cas::Level;
using cas::StateId;
using cas::TransitionRow;

/// Dense Gaussian elimination with partial pivoting; solves A x = b in place.
inline std::vector<double> solve_linear(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    if (std::abs(a[p][c]) < 1e-14) throw std::runtime_error("singular system");
    std::swap(a[p], a[c]);
    std::swap(b[p], b[c]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      if (f == 0.0) continue;
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t i = 0; i < n; ++i) b[i] /= a[i][i];
  return b;
}

/// Expected cost to goal of a Markov chain given per-state successor rows and
/// costs; the goal row is ignored.
inline std::vector<double> chain_values(const std::vector<TransitionRow>& rows,
                                        const std::vector<double>& costs, StateId goal) {
  const std::size_t n = rows.size();
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  std::vector<double> b(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    a[s][s] = 1.0;
    if (static_cast<StateId>(s) == goal) continue;
    b[s] = costs[s];
    for (const auto& o : rows[s])
      if (o.state != goal) a[s][static_cast<std::size_t>(o.state)] -= o.probability;
  }
  return solve_linear(a, b);
}

/// Exact evaluation of a fixed policy on an SSP.
inline std::vector<double> evaluate_policy(const cas::SSP& ssp, const cas::Policy& policy) {
  std::vector<TransitionRow> rows;
  std::vector<double> costs;
  for (StateId s = 0; s < ssp.num_states(); ++s) {
    rows.push_back(ssp.row(s, policy[s]));
    costs.push_back(ssp.cost(s, policy[s]));
  }
  return chain_values(rows, costs, ssp.goal());
}

/// Finite-horizon optimal cost by plain backward recursion.
inline std::vector<double> horizon_values(const cas::SSP& ssp, int horizon, double tail = 0.0) {
  std::vector<double> v(static_cast<std::size_t>(ssp.num_states()), tail);
  v[static_cast<std::size_t>(ssp.goal())] = 0.0;
  for (int h = 0; h < horizon; ++h) {
    std::vector<double> next(v.size(), 0.0);
    for (StateId s = 0; s < ssp.num_states(); ++s) {
      if (s == ssp.goal()) continue;
      double best = INFINITY;
      for (cas::ActionId a = 0; a < ssp.num_actions(); ++a) {
        double q = ssp.cost(s, a);
        for (const auto& o : ssp.row(s, a)) q += o.probability * v[static_cast<std::size_t>(o.state)];
        best = std::min(best, q);
      }
      next[static_cast<std::size_t>(s)] = best;
    }
    v = std::move(next);
  }
  return v;
}

/// Random SSP with the last state as goal. Every action reaches the goal with
/// probability at least `min_goal`, so all policies are proper.
inline cas::SSP random_ssp(std::mt19937_64& rng, int states, int actions, double min_goal = 0.1) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const StateId goal = states - 1;
  std::vector<TransitionRow> rows;
  std::vector<double> costs;
  for (StateId s = 0; s < states; ++s) {
    for (int a = 0; a < actions; ++a) {
      if (s == goal) {
        rows.push_back({{goal, 1.0}});
        costs.push_back(0.0);
        continue;
      }
      std::vector<double> w(static_cast<std::size_t>(states));
      double total = 0.0;
      for (auto& x : w) {
        x = unit(rng) < 0.5 ? unit(rng) : 0.0;
        total += x;
      }
      const double g = min_goal + (1.0 - min_goal) * unit(rng) * 0.5;
      TransitionRow row;
      double placed = 0.0;
      for (StateId t = 0; t < states; ++t) {
        double p = total > 0.0 ? (1.0 - g) * w[static_cast<std::size_t>(t)] / total : 0.0;
        if (t == goal) p += total > 0.0 ? g : 1.0;
        if (p > 0.0) {
          row.push_back({t, p});
          placed += p;
        }
      }
      for (auto& o : row) o.probability /= placed;
      rows.push_back(row);
      costs.push_back(0.5 + 2.5 * unit(rng));
    }
  }
  return cas::SSP(states, actions, rows, costs, 0, goal);
}

inline cas::SignalDistribution dist(double none, double approve, double disapprove, double override_) {
  return {none, approve, disapprove, override_};
}

// ------------------------------------------------------------ chain bundle
//
// N cells in a row sharing one feedback bucket, then an incident state and
// the goal. Moving forward succeeds w.p. `success`, otherwise the incident
// state is entered (penalty on the way to the goal). The human always moves
// forward safely. Ground truth: l1 always approved, l2 overridden w.p.
// `override_rate`. kappa0 = {l0, l1}, kappa^H = {l0, l1, l2} on the cells.

struct ChainSpec {
  int cells = 5;
  double success = 0.98;
  double penalty = 100.0;
  double approve_rate = 1.0;
  double override_rate = 0.9;
  std::array<double, cas::kNumLevels> rho{10.0, 2.0, 1.0, 0.0};
};

inline cas::DomainBundle chain_bundle(const ChainSpec& spec = {}) {
  cas::DomainBundle b;
  b.name = "chain";
  const int n = spec.cells;
  const StateId incident = n;
  const StateId goal = n + 1;
  b.num_states = n + 2;
  b.num_actions = 1;
  b.action_names = {"forward"};
  for (int i = 0; i < n; ++i) b.state_names.push_back("c" + std::to_string(i));
  b.state_names.push_back("incident");
  b.state_names.push_back("goal");
  b.roles.assign(static_cast<std::size_t>(b.num_states), cas::StateRole::kObstacle);
  b.roles[static_cast<std::size_t>(incident)] = cas::StateRole::kTerminal;
  b.roles[static_cast<std::size_t>(goal)] = cas::StateRole::kTerminal;

  std::vector<cas::FeatureKey> keys;
  for (StateId s = 0; s < b.num_states; ++s) {
    const StateId next = s + 1 == n ? goal : s + 1;
    if (s < n) {
      TransitionRow row{{next, spec.success}};
      if (spec.success < 1.0) row.push_back({incident, 1.0 - spec.success});
      b.rows.push_back(row);
      b.tau_rows.push_back({{next, 1.0}});
      b.costs.push_back(1.0);
      b.kappa0.push_back({Level::kNone, Level::kVerified});
      b.kappa_h.push_back({Level::kNone, Level::kVerified, Level::kSupervised});
      keys.push_back({0, 0});
    } else {
      b.rows.push_back({{goal, 1.0}});
      b.tau_rows.push_back({{goal, 1.0}});
      b.costs.push_back(s == incident ? spec.penalty : 0.0);
      b.kappa0.push_back(cas::LevelMask::all());
      b.kappa_h.push_back(cas::LevelMask::all());
      keys.push_back({1, 0});
    }
  }
  b.projection = std::make_shared<const cas::FeatureProjection>(b.num_states, 1, keys);
  b.hidden_projection = b.projection;
  b.true_lambda.set({{0, 0}, Level::kVerified}, dist(0, spec.approve_rate, 1.0 - spec.approve_rate, 0));
  b.true_lambda.set({{0, 0}, Level::kSupervised}, dist(1.0 - spec.override_rate, 0, 0, spec.override_rate));
  b.epsilon = 0.0;
  b.mu.switch_coeff = 0.0;
  b.rho.per_level = spec.rho;
  b.start_level = Level::kNone;
  b.default_task = {0, goal};
  b.task_cells = {0};
  return b;
}

/// Value of the start cell when every cell uses a fixed level, by direct
/// composition of the level semantics (independent of the library's CAS code).
inline double chain_assignment_value(const ChainSpec& spec, const std::vector<Level>& levels) {
  const int n = spec.cells;
  const StateId incident = n, goal = n + 1;
  std::vector<TransitionRow> rows(static_cast<std::size_t>(n + 2));
  std::vector<double> costs(static_cast<std::size_t>(n + 2), 0.0);
  for (StateId s = 0; s < n; ++s) {
    const StateId next = s + 1 == n ? goal : s + 1;
    const Level l = levels[static_cast<std::size_t>(s)];
    auto& row = rows[static_cast<std::size_t>(s)];
    costs[static_cast<std::size_t>(s)] = 1.0 + spec.rho[static_cast<std::size_t>(cas::rank(l))];
    double p_domain = 0.0, p_human = 0.0, p_stay = 0.0;
    switch (l) {
      case Level::kNone: p_human = 1.0; break;
      case Level::kVerified: p_domain = spec.approve_rate; p_stay = 1.0 - spec.approve_rate; break;
      case Level::kSupervised: p_domain = 1.0 - spec.override_rate; p_human = spec.override_rate; break;
      case Level::kUnsupervised: p_domain = 1.0; break;
    }
    row.push_back({next, p_domain * spec.success + p_human});
    if (p_domain * (1.0 - spec.success) > 0.0) row.push_back({incident, p_domain * (1.0 - spec.success)});
    if (p_stay > 0.0) row.push_back({s, p_stay});
  }
  rows[static_cast<std::size_t>(incident)] = {{goal, 1.0}};
  costs[static_cast<std::size_t>(incident)] = spec.penalty;
  rows[static_cast<std::size_t>(goal)] = {{goal, 1.0}};
  return chain_values(rows, costs, goal)[0];
}

/// Competent level at the first cell by enumerating all 4^N level
/// assignments: the level heading the cheapest assignment (lowest rank on ties).
inline Level chain_competence(const ChainSpec& spec) {
  const int n = spec.cells;
  int total = 1;
  for (int i = 0; i < n; ++i) total *= cas::kNumLevels;
  std::array<double, cas::kNumLevels> best;
  best.fill(INFINITY);
  std::vector<Level> levels(static_cast<std::size_t>(n));
  for (int code = 0; code < total; ++code) {
    int c = code;
    for (int i = 0; i < n; ++i) {
      levels[static_cast<std::size_t>(i)] = cas::level_from_rank(c % cas::kNumLevels);
      c /= cas::kNumLevels;
    }
    auto& slot = best[static_cast<std::size_t>(cas::rank(levels[0]))];
    slot = std::min(slot, chain_assignment_value(spec, levels));
  }
  int arg = 0;
  for (int l = 1; l < cas::kNumLevels; ++l)
    if (best[static_cast<std::size_t>(l)] < best[static_cast<std::size_t>(arg)] - 1e-9) arg = l;
  return cas::level_from_rank(arg);
}

// ------------------------------------------------------------ EVSI fixture
//
// One working state s0 and a hazard state. From s0 the agent reaches the goal
// w.p. 1 - h and the hazard (penalty P) otherwise; the human always reaches
// the goal. With rho = (5, 2, 1, 0), h * P = 8:
//   U(l0) = 6, U(l2) = 2 + 8 (1 - o), U(l3) = 9, U(l1) >= 3 + V(s0),
// where o is the override probability. U(l2) is linear in o, so with
// symmetric supervised counts the decision sits on the l0/l2 boundary and the
// one-sample EVSI is exactly 2 / (N + 1), N the supervised pseudo-count total.

struct EvsiFixture {
  cas::CAS model;
  cas::FeatureKey feature{0, 0};
  StateId flat_start = 0;
};

inline EvsiFixture evsi_fixture() {
  const StateId s0 = 0, hazard = 1, goal = 2;
  std::vector<TransitionRow> rows{{{goal, 0.92}, {hazard, 0.08}}, {{goal, 1.0}}, {{goal, 1.0}}};
  std::vector<double> costs{1.0, 100.0, 0.0};
  auto ssp = std::make_shared<const cas::SSP>(3, 1, rows, costs, s0, goal);
  auto projection = std::make_shared<const cas::FeatureProjection>(
      3, 1, std::vector<cas::FeatureKey>{{0, 0}, {1, 0}, {2, 0}});
  auto tau = std::make_shared<const cas::HumanTransition>(
      3, 1, std::vector<TransitionRow>{{{goal, 1.0}}, {{goal, 1.0}}, {{goal, 1.0}}});
  cas::CAS model{ssp,
                 projection,
                 tau,
                 cas::AutonomyProfile(3, 1, cas::LevelMask::all()),
                 cas::AutonomyCost{},
                 cas::FeedbackProfile{},
                 cas::HumanCost{{5.0, 2.0, 1.0, 0.0}},
                 cas::CostWeights{},
                 Level::kNone};
  EvsiFixture f{std::move(model), {0, 0}, 0};
  const cas::FlatIndex index(3, 1, goal);
  f.flat_start = index.flat({s0, Level::kNone});
  return f;
}

inline double evsi_exact(double supervised_pseudo_total) { return 2.0 / (supervised_pseudo_total + 1.0); }

}  // namespace fixtures
