#include "cas/ssp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

namespace cas {

namespace {

constexpr double kRowTolerance = 1e-9;
constexpr double kTieTolerance = 1e-9;

std::vector<char> forward_reachable(const SSP& ssp, const std::vector<char>& mask) {
  const auto n = static_cast<std::size_t>(ssp.num_states());
  const int m = ssp.num_actions();
  std::vector<char> seen(n, 0);
  std::deque<StateId> frontier{ssp.start()};
  seen[static_cast<std::size_t>(ssp.start())] = 1;
  while (!frontier.empty()) {
    const StateId s = frontier.front();
    frontier.pop_front();
    for (ActionId a = 0; a < m; ++a) {
      if (!mask[static_cast<std::size_t>(s) * m + a]) continue;
      for (const auto& o : ssp.row(s, a)) {
        if (o.probability <= 0.0 || seen[static_cast<std::size_t>(o.state)]) continue;
        seen[static_cast<std::size_t>(o.state)] = 1;
        frontier.push_back(o.state);
      }
    }
  }
  return seen;
}

}  // namespace

SSP::SSP(int num_states, int num_actions, std::vector<TransitionRow> rows,
         std::vector<double> costs, StateId start, StateId goal)
    : num_states_(num_states),
      num_actions_(num_actions),
      rows_(std::move(rows)),
      costs_(std::move(costs)),
      start_(start),
      goal_(goal) {
  validate();
}

void SSP::validate() const {
  if (num_states_ <= 0 || num_actions_ <= 0)
    throw std::invalid_argument("SSP needs at least one state and one action");
  const auto pairs = static_cast<std::size_t>(num_states_) * static_cast<std::size_t>(num_actions_);
  if (rows_.size() != pairs || costs_.size() != pairs)
    throw std::invalid_argument("SSP row/cost tables do not match states x actions");
  if (start_ < 0 || start_ >= num_states_ || goal_ < 0 || goal_ >= num_states_)
    throw std::invalid_argument("SSP start or goal out of range");

  for (StateId s = 0; s < num_states_; ++s) {
    for (ActionId a = 0; a < num_actions_; ++a) {
      double total = 0.0;
      for (const auto& o : row(s, a)) {
        if (o.state < 0 || o.state >= num_states_)
          throw std::invalid_argument("SSP successor out of range");
        if (!(o.probability >= 0.0))
          throw std::invalid_argument("SSP transition probability is negative");
        total += o.probability;
      }
      if (std::abs(total - 1.0) > kRowTolerance) {
        std::ostringstream msg;
        msg << "SSP row (" << s << ", " << a << ") sums to " << total;
        throw std::invalid_argument(msg.str());
      }
      const double c = cost(s, a);
      if (!std::isfinite(c)) throw std::invalid_argument("SSP cost is not finite");
      if (s == goal_) {
        if (c != 0.0 || std::abs(transition(s, a, goal_) - 1.0) > kRowTolerance)
          throw std::invalid_argument("SSP goal must be absorbing with zero cost");
      } else if (c <= 0.0) {
        std::ostringstream msg;
        msg << "SSP cost at non-goal pair (" << s << ", " << a << ") must be positive";
        throw std::invalid_argument(msg.str());
      }
    }
  }

  // Goal reachable (with positive probability) from every start-reachable state.
  const std::vector<char> all(pairs, 1);
  const auto reach = forward_reachable(*this, all);
  std::vector<std::vector<StateId>> predecessors(static_cast<std::size_t>(num_states_));
  for (StateId s = 0; s < num_states_; ++s)
    for (ActionId a = 0; a < num_actions_; ++a)
      for (const auto& o : row(s, a))
        if (o.probability > 0.0) predecessors[static_cast<std::size_t>(o.state)].push_back(s);
  std::vector<char> reaches_goal(static_cast<std::size_t>(num_states_), 0);
  std::deque<StateId> frontier{goal_};
  reaches_goal[static_cast<std::size_t>(goal_)] = 1;
  while (!frontier.empty()) {
    const StateId s = frontier.front();
    frontier.pop_front();
    for (StateId p : predecessors[static_cast<std::size_t>(s)]) {
      if (reaches_goal[static_cast<std::size_t>(p)]) continue;
      reaches_goal[static_cast<std::size_t>(p)] = 1;
      frontier.push_back(p);
    }
  }
  for (StateId s = 0; s < num_states_; ++s) {
    if (reach[static_cast<std::size_t>(s)] && !reaches_goal[static_cast<std::size_t>(s)]) {
      std::ostringstream msg;
      msg << "goal unreachable from state " << s;
      throw std::invalid_argument(msg.str());
    }
  }
}

double SSP::transition(StateId s, ActionId a, StateId next) const {
  double p = 0.0;
  for (const auto& o : row(s, a))
    if (o.state == next) p += o.probability;
  return p;
}

SSP SSP::with_start(StateId start) const {
  return SSP(num_states_, num_actions_, rows_, costs_, start, goal_);
}

double q_value(const SSP& ssp, const ValueFunction& values, StateId s, ActionId a) {
  if (s == ssp.goal()) return 0.0;
  double q = ssp.cost(s, a);
  for (const auto& o : ssp.row(s, a)) q += o.probability * values[o.state];
  return q;
}

std::vector<char> allowed_mask(const SSP& ssp, const AllowedFn& allowed) {
  const int n = ssp.num_states();
  const int m = ssp.num_actions();
  std::vector<char> mask(static_cast<std::size_t>(n) * m, 1);
  if (!allowed) return mask;
  for (StateId s = 0; s < n; ++s)
    for (ActionId a = 0; a < m; ++a)
      mask[static_cast<std::size_t>(s) * m + a] = allowed(s, a) ? 1 : 0;
  return mask;
}

std::vector<char> proper_states(const SSP& ssp, const std::vector<char>& mask) {
  const int n = ssp.num_states();
  const int m = ssp.num_actions();
  std::vector<char> candidate(static_cast<std::size_t>(n), 1);
  for (;;) {
    // Actions that keep all of their support inside the candidate set.
    std::vector<char> usable(mask.size(), 0);
    for (StateId s = 0; s < n; ++s) {
      if (!candidate[static_cast<std::size_t>(s)]) continue;
      for (ActionId a = 0; a < m; ++a) {
        const auto idx = static_cast<std::size_t>(s) * m + a;
        if (!mask[idx]) continue;
        bool inside = true;
        for (const auto& o : ssp.row(s, a))
          if (o.probability > 0.0 && !candidate[static_cast<std::size_t>(o.state)]) inside = false;
        usable[idx] = inside ? 1 : 0;
      }
    }
    std::vector<char> next(static_cast<std::size_t>(n), 0);
    next[static_cast<std::size_t>(ssp.goal())] = 1;
    bool grew = true;
    while (grew) {
      grew = false;
      for (StateId s = 0; s < n; ++s) {
        if (next[static_cast<std::size_t>(s)] || !candidate[static_cast<std::size_t>(s)]) continue;
        for (ActionId a = 0; a < m && !next[static_cast<std::size_t>(s)]; ++a) {
          if (!usable[static_cast<std::size_t>(s) * m + a]) continue;
          for (const auto& o : ssp.row(s, a)) {
            if (o.probability > 0.0 && next[static_cast<std::size_t>(o.state)]) {
              next[static_cast<std::size_t>(s)] = 1;
              grew = true;
              break;
            }
          }
        }
      }
    }
    if (next == candidate) return candidate;
    candidate = std::move(next);
  }
}

namespace {

double backup(const SSP& ssp, const std::vector<double>& values,
              const std::vector<char>& mask, StateId s) {
  const int m = ssp.num_actions();
  double best = std::numeric_limits<double>::infinity();
  for (ActionId a = 0; a < m; ++a) {
    if (!mask[static_cast<std::size_t>(s) * m + a]) continue;
    double q = ssp.cost(s, a);
    for (const auto& o : ssp.row(s, a)) q += o.probability * values[static_cast<std::size_t>(o.state)];
    best = std::min(best, q);
  }
  return best;
}

}  // namespace

double bellman_sweep(const SSP& ssp, std::vector<double>& values, SweepMode mode,
                     const std::vector<char>& mask, double value_cap) {
  const int n = ssp.num_states();
  const StateId goal = ssp.goal();
  double residual = 0.0;
  if (mode == SweepMode::kGaussSeidel) {
    for (StateId s = 0; s < n; ++s) {
      if (s == goal) continue;
      const double old = values[static_cast<std::size_t>(s)];
      if (old >= value_cap) continue;
      const double v = std::min(backup(ssp, values, mask, s), value_cap);
      residual = std::max(residual, std::abs(v - old));
      values[static_cast<std::size_t>(s)] = v;
    }
    return residual;
  }

  std::vector<double> next(values.size());
#pragma omp parallel for schedule(static) reduction(max : residual)
  for (StateId s = 0; s < n; ++s) {
    const auto i = static_cast<std::size_t>(s);
    if (s == goal || values[i] >= value_cap) {
      next[i] = values[i];
      continue;
    }
    const double v = std::min(backup(ssp, values, mask, s), value_cap);
    residual = std::max(residual, std::abs(v - values[i]));
    next[i] = v;
  }
  values.swap(next);
  return residual;
}

Solution solve_value_iteration(const SSP& ssp, const SolverOptions& options,
                               const AllowedFn& allowed) {
  if (!(options.tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
  const int n = ssp.num_states();
  const int m = ssp.num_actions();
  const auto mask = allowed_mask(ssp, allowed);

  for (StateId s = 0; s < n; ++s) {
    if (s == ssp.goal()) continue;
    bool any = false;
    for (ActionId a = 0; a < m; ++a) any = any || mask[static_cast<std::size_t>(s) * m + a];
    if (!any) {
      std::ostringstream msg;
      msg << "state " << s << " has no allowed action";
      throw std::invalid_argument(msg.str());
    }
  }

  const auto proper = proper_states(ssp, mask);
  const auto reach = forward_reachable(ssp, mask);
  for (StateId s = 0; s < n; ++s) {
    if (reach[static_cast<std::size_t>(s)] && !proper[static_cast<std::size_t>(s)]) {
      std::ostringstream msg;
      msg << "no proper policy within the allowed set from state " << s;
      throw NoProperPolicy(s, msg.str());
    }
  }

  std::vector<double> values(static_cast<std::size_t>(n), 0.0);
  if (options.warm_start != nullptr && options.warm_start->size() == values.size()) {
    for (std::size_t i = 0; i < values.size(); ++i)
      values[i] = std::clamp((*options.warm_start)[i], 0.0, options.value_cap);
  }
  for (StateId s = 0; s < n; ++s) {
    const auto i = static_cast<std::size_t>(s);
    if (s == ssp.goal()) values[i] = 0.0;
    else if (!proper[i]) values[i] = options.value_cap;
    else values[i] = std::min(values[i], options.value_cap * (1.0 - 1e-12));
  }

  Solution out;
  double previous = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (;;) {
    const double residual = bellman_sweep(ssp, values, options.mode, mask, options.value_cap);
    ++out.sweeps;
    out.residual = residual;
    if (residual < options.tolerance) break;

    bool at_cap = false;
    for (StateId s = 0; s < n && !at_cap; ++s)
      at_cap = proper[static_cast<std::size_t>(s)] && values[static_cast<std::size_t>(s)] >= options.value_cap;
    stalled = (at_cap && residual >= previous) ? stalled + 1 : 0;
    if (stalled >= options.stall_sweeps)
      throw NoProperPolicy(-1, "value iteration diverged: residual stalled at the value cap");
    if (out.sweeps >= options.max_sweeps)
      throw NoProperPolicy(-1, "value iteration did not converge within the sweep limit");
    previous = residual;
  }

  out.policy.actions.assign(static_cast<std::size_t>(n), 0);
  for (StateId s = 0; s < n; ++s) {
    if (s == ssp.goal()) continue;
    double best = std::numeric_limits<double>::infinity();
    ActionId best_a = -1;
    for (ActionId a = 0; a < m; ++a) {
      if (!mask[static_cast<std::size_t>(s) * m + a]) continue;
      double q = ssp.cost(s, a);
      for (const auto& o : ssp.row(s, a)) q += o.probability * values[static_cast<std::size_t>(o.state)];
      if (best_a < 0 || q < best - kTieTolerance) {
        best = q;
        best_a = a;
      }
    }
    out.policy.actions[static_cast<std::size_t>(s)] = best_a;
  }
  out.values.values = std::move(values);
  return out;
}

ValueFunction brute_force_values(const SSP& ssp, int horizon, double truncation_value) {
  const int n = ssp.num_states();
  const int m = ssp.num_actions();
  std::vector<double> current(static_cast<std::size_t>(n), truncation_value);
  current[static_cast<std::size_t>(ssp.goal())] = 0.0;
  std::vector<double> next(current.size());
  for (int k = 0; k < horizon; ++k) {
    for (StateId s = 0; s < n; ++s) {
      if (s == ssp.goal()) {
        next[static_cast<std::size_t>(s)] = 0.0;
        continue;
      }
      double best = std::numeric_limits<double>::infinity();
      for (ActionId a = 0; a < m; ++a) {
        double q = ssp.cost(s, a);
        for (const auto& o : ssp.row(s, a)) q += o.probability * current[static_cast<std::size_t>(o.state)];
        best = std::min(best, q);
      }
      next[static_cast<std::size_t>(s)] = best;
    }
    current.swap(next);
  }
  return ValueFunction{std::move(current)};
}

}  // namespace cas
