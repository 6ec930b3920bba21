#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cas {

using StateId = int;
using ActionId = int;

/// One successor of a sparse transition row.
struct Outcome {
  StateId state;
  double probability;
};

using TransitionRow = std::vector<Outcome>;

/// Raised when the allowed action set admits no policy that reaches the goal
/// with probability one from some start-reachable state.
class NoProperPolicy : public std::runtime_error {
 public:
  NoProperPolicy(StateId state, const std::string& what)
      : std::runtime_error(what), state_(state) {}
  StateId state() const noexcept { return state_; }

 private:
  StateId state_;
};

/// Stochastic shortest path problem with every action applicable in every
/// state. Rows are stored densely by (state, action) and sparsely by successor.
/// Construction validates the row sums, costs, goal absorption and goal
/// reachability from every start-reachable state.
class SSP {
 public:
  SSP(int num_states, int num_actions, std::vector<TransitionRow> rows,
      std::vector<double> costs, StateId start, StateId goal);

  int num_states() const noexcept { return num_states_; }
  int num_actions() const noexcept { return num_actions_; }
  StateId start() const noexcept { return start_; }
  StateId goal() const noexcept { return goal_; }

  const TransitionRow& row(StateId s, ActionId a) const {
    return rows_[index(s, a)];
  }
  double cost(StateId s, ActionId a) const { return costs_[index(s, a)]; }

  /// Probability of landing in `next`; linear in the row length.
  double transition(StateId s, ActionId a, StateId next) const;

  /// Same dynamics with a different start state.
  SSP with_start(StateId start) const;

 private:
  std::size_t index(StateId s, ActionId a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions_) +
           static_cast<std::size_t>(a);
  }
  void validate() const;

  int num_states_;
  int num_actions_;
  std::vector<TransitionRow> rows_;
  std::vector<double> costs_;
  StateId start_;
  StateId goal_;
};

struct ValueFunction {
  std::vector<double> values;
  double operator[](StateId s) const { return values[static_cast<std::size_t>(s)]; }
};

struct Policy {
  std::vector<ActionId> actions;
  ActionId operator[](StateId s) const { return actions[static_cast<std::size_t>(s)]; }
};

using AllowedFn = std::function<bool(StateId, ActionId)>;

enum class SweepMode {
  kGaussSeidel,  // serial, in-place backups
  kJacobi,       // snapshot backups, OpenMP-parallel over states
};

struct SolverOptions {
  double tolerance = 1e-6;
  SweepMode mode = SweepMode::kGaussSeidel;
  double value_cap = 1e9;
  int stall_sweeps = 10;
  int max_sweeps = 1000000;
  /// Optional starting point; must be sized to the state count.
  const std::vector<double>* warm_start = nullptr;
};

struct Solution {
  ValueFunction values;
  Policy policy;
  int sweeps = 0;
  double residual = 0.0;
};

double q_value(const SSP& ssp, const ValueFunction& values, StateId s, ActionId a);

/// Value iteration restricted to `allowed` pairs. Ties in the greedy policy go
/// to the lowest action index. States that are not reachable from the start
/// and have no proper policy are pinned at `value_cap`; if a start-reachable
/// state has no proper policy, NoProperPolicy is thrown.
Solution solve_value_iteration(const SSP& ssp, const SolverOptions& options = {},
                               const AllowedFn& allowed = {});

/// One Bellman sweep over all states. Returns the max absolute change.
/// Exposed for the serial/parallel benchmark.
double bellman_sweep(const SSP& ssp, std::vector<double>& values, SweepMode mode,
                     const std::vector<char>& allowed_mask, double value_cap);

/// Exact `horizon`-step expected cost by backward recursion over all action
/// sequences, with `truncation_value` charged at non-goal states when the
/// horizon runs out. Test oracle.
ValueFunction brute_force_values(const SSP& ssp, int horizon,
                                 double truncation_value = 0.0);

/// States with a policy (within `allowed`) that reaches the goal with
/// probability one.
std::vector<char> proper_states(const SSP& ssp, const std::vector<char>& allowed_mask);

/// Flattened (state, action) mask from an optional predicate.
std::vector<char> allowed_mask(const SSP& ssp, const AllowedFn& allowed);

}  // namespace cas
