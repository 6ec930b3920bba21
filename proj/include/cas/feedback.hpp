#pragma once

#include <array>
#include <deque>
#include <functional>
#include <map>
#include <random>
#include <span>

#include "cas/cas_model.hpp"

namespace cas {

/// Dirichlet pseudo-count store over feedback signals, one categorical per
/// (feature key, level). Also tracks a sticky convergence gate: a key is
/// converged once its posterior mean moved less than `threshold` (max norm)
/// across the last `window` updates.
class FeedbackCounts {
 public:
  struct Entry {
    std::array<double, kNumSignals> counts{};
    long long total = 0;
    std::deque<SignalDistribution> history;
    bool converged = false;
  };

  explicit FeedbackCounts(double alpha = 1.0, int window = 20, double threshold = 0.01);

  /// Override the pseudo-counts at `level` (used to start from a skewed lambda).
  void set_prior(Level level, const std::array<double, kNumSignals>& pseudo_counts);
  const std::array<double, kNumSignals>& prior(Level level) const {
    return prior_[static_cast<std::size_t>(rank(level))];
  }

  /// Throws std::invalid_argument if `signal` is not valid at the key's level.
  void record(const FeedbackKey& key, Signal signal);

  long long count(const FeedbackKey& key, Signal signal) const;
  long long total(const FeedbackKey& key) const;
  SignalDistribution posterior_mean(const FeedbackKey& key) const;
  bool converged(const FeedbackKey& key) const;
  long long total_feedback() const { return total_feedback_; }

  const std::map<FeedbackKey, Entry>& entries() const { return entries_; }
  int window() const { return window_; }
  double threshold() const { return threshold_; }

 private:
  SignalDistribution mean_of(const Entry* entry, Level level) const;

  std::array<std::array<double, kNumSignals>, kNumLevels> prior_{};
  int window_;
  double threshold_;
  std::map<FeedbackKey, Entry> entries_;
  long long total_feedback_ = 0;
};

/// Posterior-mean feedback profile; keys without data read as the prior mean.
FeedbackProfile estimate_lambda(const FeedbackCounts& counts);

struct EvsiEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// U(lambda, l) for every level l, given the verified and supervised signal
/// distributions at the key being assessed (all other keys held fixed).
using LevelValueFn =
    std::function<std::array<double, kNumLevels>(const SignalDistribution& verified,
                                                  const SignalDistribution& supervised)>;

/// Monte-Carlo expected value of one more feedback sample at `feature`.
/// Costs are minimised, so the value of information is
///   min_l E[U(l)] - sum_sigma min_l E[U(l) lambda(sigma)]
/// with sigma ranging over the signals of one feedback level; the larger of
/// the two feedback levels is returned. The standard error comes from ten
/// batch means.
EvsiEstimate evsi(const FeedbackCounts& counts, const FeatureKey& feature,
                  const LevelValueFn& level_values, int samples, std::mt19937_64& rng);

/// Builds U(lambda, l) for (flat state, action) by re-solving `cas` with the
/// sampled distributions substituted at the pair's feature key.
LevelValueFn cas_level_values(const CAS& cas, StateId flat_state, ActionId action,
                              const SolverOptions& options = {});

/// True iff every estimate is below epsilon (vacuously true when empty).
bool is_lambda_stationary(std::span<const double> evsi_values, double epsilon);

}  // namespace cas
