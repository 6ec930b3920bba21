#pragma once

#include <array>
#include <map>
#include <random>

#include "cas/cas_model.hpp"
#include "cas/oracle.hpp"

namespace cas {

struct ExplorationConfig {
  double temperature = 2.0;
  double explore_probability = 0.1;
  int embargo_episodes = 10;
  double gate_cost = 1.0;

  void validate() const;
};

/// Softmax over negative q among the current level and its chain neighbours.
/// `q` is indexed by level rank; only adjacent entries are read.
Level propose_level(Level current, const std::array<double, kNumLevels>& q, double temperature,
                    std::mt19937_64& rng);

/// Probability of each level under propose_level (zero off the candidate set).
std::array<double, kNumLevels> proposal_probabilities(Level current,
                                                      const std::array<double, kNumLevels>& q,
                                                      double temperature);

/// Per-trial bookkeeping for gated exploration.
class ExplorationState {
 public:
  bool embargoed(const FeatureKey& feature, Level level, int episode) const;
  void embargo(const FeatureKey& feature, Level level, int until_episode);

  int denials(const FeatureKey& feature, Level level) const;
  int queries() const { return queries_; }
  double human_cost() const { return human_cost_; }

  /// Charges the gate cost and forwards the query to the human.
  bool gate_query(const HumanOracle& oracle, StateId s, ActionId a, Level proposed,
                  double gate_cost, std::mt19937_64& rng);

  void note_denial(const FeatureKey& feature, Level level) { ++denials_[{feature, level}]; }

 private:
  std::map<FeedbackKey, int> embargo_until_;
  std::map<FeedbackKey, int> denials_;
  int queries_ = 0;
  double human_cost_ = 0.0;
};

/// Approved: adds `level` to kappa at every member of the feature bucket and
/// returns how many sets grew. Denied: kappa is untouched, the (bucket,
/// level) pair is embargoed until `episode + embargo_episodes`.
int update_autonomy_profile(AutonomyProfile& kappa, const FeatureProjection& projection,
                            const FeatureKey& feature, Level level, bool approved,
                            ExplorationState& state, int episode, int embargo_episodes);

}  // namespace cas
