#pragma once

#include <memory>
#include <random>
#include <vector>

#include "cas/cas_model.hpp"

namespace cas {

/// Ground truth of the simulated human authority. `true_lambda` is keyed by
/// the hidden projection, which may see features the agent cannot.
struct OracleSpec {
  std::shared_ptr<const FeatureProjection> hidden_projection;
  FeedbackProfile true_lambda;
  std::vector<LevelMask> kappa_h;  // per (state, action)
  std::shared_ptr<const HumanTransition> tau;
  double epsilon = 0.0;

  void validate() const;
};

/// Stationary simulated human. All methods are const; randomness comes from
/// the caller's stream so one oracle can serve a trial deterministically.
class HumanOracle {
 public:
  explicit HumanOracle(OracleSpec spec);

  /// Draws from lambda^H at the hidden key, then flips to the other valid
  /// signal with probability epsilon. Throws at levels without feedback.
  Signal sample_feedback(StateId s, ActionId a, Level level, std::mt19937_64& rng) const;

  StateId human_takeover(StateId s, ActionId a, std::mt19937_64& rng) const;

  /// Approves iff `level` is in kappa^H(s, a), flipped with probability epsilon.
  bool answer_gate_query(StateId s, ActionId a, Level level, std::mt19937_64& rng) const;

  /// The distribution the agent actually observes at (s, a, level), noise
  /// included.
  SignalDistribution effective_distribution(StateId s, ActionId a, Level level) const;

  /// lambda^H projected onto the agent's buckets: equal-weight mixture of the
  /// effective distributions of every member pair.
  FeedbackProfile projected_lambda(const FeatureProjection& agent) const;

  LevelMask kappa_h(StateId s, ActionId a) const {
    return spec_.kappa_h[static_cast<std::size_t>(s) *
                             static_cast<std::size_t>(spec_.tau->num_actions()) +
                         static_cast<std::size_t>(a)];
  }
  const OracleSpec& spec() const { return spec_; }

 private:
  OracleSpec spec_;
};

}  // namespace cas
