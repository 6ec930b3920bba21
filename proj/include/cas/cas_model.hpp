#pragma once

#include <array>
#include <compare>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "cas/levels.hpp"
#include "cas/ssp.hpp"

namespace cas {

/// Agent-visible (or, for the oracle, hidden) feature bucket of a
/// (state, action) pair. `action` is the action feature the bucket keeps;
/// projections that share feedback across actions map them to one value.
struct FeatureKey {
  int bucket = 0;
  int action = 0;
  auto operator<=>(const FeatureKey&) const = default;
};

struct FeedbackKey {
  FeatureKey feature;
  Level level = Level::kVerified;
  auto operator<=>(const FeedbackKey&) const = default;
};

/// Deterministic, total map from (state, action) to a feature key.
class FeatureProjection {
 public:
  FeatureProjection(int num_states, int num_actions, std::vector<FeatureKey> keys);

  FeatureKey operator()(StateId s, ActionId a) const {
    return keys_[static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions_) +
                 static_cast<std::size_t>(a)];
  }
  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }

  /// All (state, action) pairs sharing `key`, in index order.
  std::vector<std::pair<StateId, ActionId>> members(const FeatureKey& key) const;

 private:
  int num_states_;
  int num_actions_;
  std::vector<FeatureKey> keys_;
};

/// lambda: per (feature key, level) distribution over the signals valid at
/// that level. Missing keys read as the per-level default, uniform unless set.
class FeedbackProfile {
 public:
  void set(const FeedbackKey& key, const SignalDistribution& dist);
  void set_default(Level level, const SignalDistribution& dist);
  SignalDistribution lookup(const FeedbackKey& key) const;
  double probability(const FeedbackKey& key, Signal signal) const {
    return lookup(key)[static_cast<std::size_t>(signal)];
  }
  const std::map<FeedbackKey, SignalDistribution>& entries() const { return table_; }

 private:
  std::map<FeedbackKey, SignalDistribution> table_;
  std::array<std::optional<SignalDistribution>, kNumLevels> defaults_{};
};

/// Throws std::invalid_argument unless `dist` sums to one over the signals
/// valid at `level` and carries no mass elsewhere.
void check_distribution(const SignalDistribution& dist, Level level);

/// kappa: allowed levels per (state, action). Level 0 is always present.
class AutonomyProfile {
 public:
  AutonomyProfile(int num_states, int num_actions, LevelMask initial);
  AutonomyProfile(int num_states, int num_actions, std::vector<LevelMask> masks);

  LevelMask allowed(StateId s, ActionId a) const { return masks_[index(s, a)]; }
  void set(StateId s, ActionId a, LevelMask mask);
  /// Returns true if the level was newly added.
  bool add(StateId s, ActionId a, Level level);

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  bool operator==(const AutonomyProfile&) const = default;

 private:
  std::size_t index(StateId s, ActionId a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions_) +
           static_cast<std::size_t>(a);
  }
  int num_states_;
  int num_actions_;
  std::vector<LevelMask> masks_;
};

/// mu(s, l, a, l') = op_cost[l'] + switch_coeff * |rank(l') - rank(l)|.
struct AutonomyCost {
  std::array<double, kNumLevels> op_cost{};
  double switch_coeff = 0.0;
  double operator()(Level from, Level to) const;
};

/// rho, charged per step at the executed level; zero at unsupervised.
struct HumanCost {
  std::array<double, kNumLevels> per_level{};
  double operator()(StateId, ActionId, Level, Level to) const {
    return per_level[static_cast<std::size_t>(rank(to))];
  }
  void validate() const;
};

/// tau: successor distribution when the human takes control.
class HumanTransition {
 public:
  HumanTransition(int num_states, int num_actions, std::vector<TransitionRow> rows);
  const TransitionRow& row(StateId s, ActionId a) const {
    return rows_[static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions_) +
                 static_cast<std::size_t>(a)];
  }
  double probability(StateId s, ActionId a, StateId next) const;
  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }

 private:
  int num_states_;
  int num_actions_;
  std::vector<TransitionRow> rows_;
};

/// Weights of the additive aggregation of domain, autonomy and human cost.
struct CostWeights {
  double domain = 1.0;
  double autonomy = 1.0;
  double human = 1.0;
};

struct CasState {
  StateId state;
  Level level;
  bool operator==(const CasState&) const = default;
};

struct CasAction {
  ActionId action;
  Level level;
  bool operator==(const CasAction&) const = default;
};

/// The competence-aware planning problem over (state, level) pairs.
/// Shared parts are immutable; kappa and lambda are value snapshots.
struct CAS {
  std::shared_ptr<const SSP> domain;
  std::shared_ptr<const FeatureProjection> projection;
  std::shared_ptr<const HumanTransition> tau;
  AutonomyProfile kappa;
  AutonomyCost mu;
  FeedbackProfile lambda;
  HumanCost rho;
  CostWeights weights;
  Level start_level = Level::kNone;

  /// Throws std::invalid_argument on shape mismatches.
  void validate() const;
  FeedbackKey feedback_key(StateId s, ActionId a, Level level) const {
    return FeedbackKey{(*projection)(s, a), level};
  }
};

/// Composed transition probability of landing on domain state `next`; the
/// landed level is the level of `action`.
double cas_transition(const CAS& cas, CasState from, CasAction action, StateId next);

/// Full composed successor row over domain states (duplicates merged).
TransitionRow cas_transition_row(const CAS& cas, CasState from, CasAction action);

double cas_cost(const CAS& cas, CasState from, CasAction action);

bool is_allowed(const AutonomyProfile& kappa, CasState from, CasAction action);

/// Bijection between (domain state, level) pairs and flat SSP states. All
/// goal copies share one flat index; flat action = action * 4 + level.
class FlatIndex {
 public:
  FlatIndex(int num_domain_states, int num_domain_actions, StateId goal);

  StateId flat(CasState s) const;
  CasState unflatten(StateId flat) const { return states_[static_cast<std::size_t>(flat)]; }
  static ActionId flat_action(CasAction a) { return a.action * kNumLevels + rank(a.level); }
  static CasAction unflatten_action(ActionId flat) {
    return {flat / kNumLevels, level_from_rank(flat % kNumLevels)};
  }
  int num_states() const { return static_cast<int>(states_.size()); }
  int num_domain_states() const { return num_domain_states_; }
  int num_domain_actions() const { return num_domain_actions_; }
  StateId goal() const { return goal_flat_; }
  StateId domain_goal() const { return domain_goal_; }

 private:
  int num_domain_states_;
  int num_domain_actions_;
  StateId domain_goal_;
  StateId goal_flat_;
  std::vector<CasState> states_;
};

struct FlatCas {
  SSP ssp;
  FlatIndex index;
  std::vector<char> allowed;  // flat (state, action) mask from kappa

  AllowedFn allowed_fn() const;
  bool allowed_at(StateId s, ActionId a) const {
    return allowed[static_cast<std::size_t>(s) * static_cast<std::size_t>(ssp.num_actions()) +
                   static_cast<std::size_t>(a)] != 0;
  }
};

FlatCas flatten_to_ssp(const CAS& cas);

struct CasSolution {
  FlatCas flat;
  Solution solution;

  CasAction action_at(CasState s) const {
    return FlatIndex::unflatten_action(solution.policy[flat.index.flat(s)]);
  }
  double value_at(CasState s) const { return solution.values[flat.index.flat(s)]; }
  /// q of a flat state under the solved values; ignores kappa.
  double q(StateId flat_state, CasAction action) const {
    return q_value(flat.ssp, solution.values, flat_state, FlatIndex::flat_action(action));
  }
};

/// Value iteration over the flattened problem restricted to kappa.
CasSolution solve_cas(const CAS& cas, const SolverOptions& options = {});

/// chi: least-cost level per (flat state, action) under `true_lambda`, with
/// kappa unrestricted. Ties go to the lowest rank.
class CompetenceTable {
 public:
  CompetenceTable(FlatIndex index, std::vector<Level> levels)
      : index_(std::move(index)), levels_(std::move(levels)) {}
  Level operator()(StateId flat_state, ActionId action) const {
    return levels_[static_cast<std::size_t>(flat_state) *
                       static_cast<std::size_t>(index_.num_domain_actions()) +
                   static_cast<std::size_t>(action)];
  }
  Level at(CasState s, ActionId action) const { return (*this)(index_.flat(s), action); }
  const FlatIndex& index() const { return index_; }

 private:
  FlatIndex index_;
  std::vector<Level> levels_;
};

CompetenceTable competence(const CAS& cas, const FeedbackProfile& true_lambda,
                           const SolverOptions& options = {});

}  // namespace cas
