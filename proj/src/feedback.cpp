#include "cas/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cas {

FeedbackCounts::FeedbackCounts(double alpha, int window, double threshold)
    : window_(window), threshold_(threshold) {
  if (!(alpha > 0.0)) throw std::invalid_argument("prior pseudo-count must be positive");
  if (window < 1) throw std::invalid_argument("convergence window must be positive");
  for (Level l : kAllLevels)
    for (Signal s : valid_signals(l))
      prior_[static_cast<std::size_t>(rank(l))][static_cast<std::size_t>(s)] = alpha;
}

void FeedbackCounts::set_prior(Level level, const std::array<double, kNumSignals>& pseudo_counts) {
  for (int i = 0; i < kNumSignals; ++i) {
    const double c = pseudo_counts[static_cast<std::size_t>(i)];
    const bool valid = signal_valid(static_cast<Signal>(i), level);
    if (valid && !(c > 0.0)) throw std::invalid_argument("prior pseudo-count must be positive");
    if (!valid && c != 0.0) throw std::invalid_argument("prior on a signal invalid at this level");
  }
  prior_[static_cast<std::size_t>(rank(level))] = pseudo_counts;
}

SignalDistribution FeedbackCounts::mean_of(const Entry* entry, Level level) const {
  const auto& alpha = prior_[static_cast<std::size_t>(rank(level))];
  SignalDistribution d{};
  double total = 0.0;
  for (Signal s : valid_signals(level)) {
    const auto i = static_cast<std::size_t>(s);
    d[i] = alpha[i] + (entry ? entry->counts[i] : 0.0);
    total += d[i];
  }
  if (total > 0.0)
    for (double& p : d) p /= total;
  return d;
}

void FeedbackCounts::record(const FeedbackKey& key, Signal signal) {
  if (!signal_valid(signal, key.level))
    throw std::invalid_argument("signal " + std::string(to_string(signal)) +
                                " is not valid at level " + std::string(to_string(key.level)));
  auto [it, inserted] = entries_.try_emplace(key);
  Entry& e = it->second;
  if (inserted) e.history.push_back(mean_of(nullptr, key.level));
  e.counts[static_cast<std::size_t>(signal)] += 1.0;
  ++e.total;
  ++total_feedback_;

  e.history.push_back(mean_of(&e, key.level));
  while (static_cast<int>(e.history.size()) > window_ + 1) e.history.pop_front();
  if (!e.converged && static_cast<int>(e.history.size()) == window_ + 1) {
    double change = 0.0;
    for (int i = 0; i < kNumSignals; ++i)
      change = std::max(change, std::abs(e.history.back()[static_cast<std::size_t>(i)] -
                                         e.history.front()[static_cast<std::size_t>(i)]));
    e.converged = change < threshold_;
  }
}

long long FeedbackCounts::count(const FeedbackKey& key, Signal signal) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? 0
                              : static_cast<long long>(it->second.counts[static_cast<std::size_t>(signal)]);
}

long long FeedbackCounts::total(const FeedbackKey& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.total;
}

SignalDistribution FeedbackCounts::posterior_mean(const FeedbackKey& key) const {
  const auto it = entries_.find(key);
  return mean_of(it == entries_.end() ? nullptr : &it->second, key.level);
}

bool FeedbackCounts::converged(const FeedbackKey& key) const {
  const auto it = entries_.find(key);
  return it != entries_.end() && it->second.converged;
}

FeedbackProfile estimate_lambda(const FeedbackCounts& counts) {
  FeedbackProfile profile;
  for (Level l : {Level::kVerified, Level::kSupervised})
    profile.set_default(l, counts.posterior_mean(FeedbackKey{FeatureKey{-1, -1}, l}));
  for (const auto& [key, entry] : counts.entries()) profile.set(key, counts.posterior_mean(key));
  return profile;
}

namespace {

SignalDistribution sample_dirichlet(const FeedbackCounts& counts, const FeedbackKey& key,
                                    std::mt19937_64& rng) {
  const auto& alpha = counts.prior(key.level);
  SignalDistribution d{};
  double total = 0.0;
  for (Signal s : valid_signals(key.level)) {
    const auto i = static_cast<std::size_t>(s);
    std::gamma_distribution<double> gamma(alpha[i] + static_cast<double>(counts.count(key, s)), 1.0);
    d[i] = gamma(rng);
    total += d[i];
  }
  for (double& p : d) p /= total;
  return d;
}

struct Draw {
  std::array<double, kNumLevels> u;
  SignalDistribution verified;
  SignalDistribution supervised;
};

double evsi_of(std::span<const Draw> draws) {
  const double n = static_cast<double>(draws.size());
  double best_prior = std::numeric_limits<double>::infinity();
  for (int l = 0; l < kNumLevels; ++l) {
    double mean = 0.0;
    for (const auto& d : draws) mean += d.u[static_cast<std::size_t>(l)];
    best_prior = std::min(best_prior, mean / n);
  }
  double best = 0.0;
  for (Level feedback_level : {Level::kVerified, Level::kSupervised}) {
    double preposterior = 0.0;
    for (Signal sigma : valid_signals(feedback_level)) {
      double best_given = std::numeric_limits<double>::infinity();
      for (int l = 0; l < kNumLevels; ++l) {
        double weighted = 0.0;
        for (const auto& d : draws) {
          const auto& lam = feedback_level == Level::kVerified ? d.verified : d.supervised;
          weighted += d.u[static_cast<std::size_t>(l)] * lam[static_cast<std::size_t>(sigma)];
        }
        best_given = std::min(best_given, weighted / n);
      }
      preposterior += best_given;
    }
    best = std::max(best, best_prior - preposterior);
  }
  return std::max(best, 0.0);
}

}  // namespace

EvsiEstimate evsi(const FeedbackCounts& counts, const FeatureKey& feature,
                  const LevelValueFn& level_values, int samples, std::mt19937_64& rng) {
  if (samples < 1) throw std::invalid_argument("evsi needs at least one sample");
  std::vector<Draw> draws;
  draws.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    Draw d;
    d.verified = sample_dirichlet(counts, {feature, Level::kVerified}, rng);
    d.supervised = sample_dirichlet(counts, {feature, Level::kSupervised}, rng);
    d.u = level_values(d.verified, d.supervised);
    draws.push_back(d);
  }

  EvsiEstimate out;
  out.value = evsi_of(draws);
  constexpr int kBatches = 10;
  if (samples >= 2 * kBatches) {
    const std::size_t size = draws.size() / kBatches;
    std::array<double, kBatches> batch{};
    for (int b = 0; b < kBatches; ++b)
      batch[static_cast<std::size_t>(b)] =
          evsi_of(std::span<const Draw>(draws).subspan(static_cast<std::size_t>(b) * size, size));
    const double mean = std::accumulate(batch.begin(), batch.end(), 0.0) / kBatches;
    double var = 0.0;
    for (double v : batch) var += (v - mean) * (v - mean);
    var /= (kBatches - 1);
    out.std_error = std::sqrt(var / kBatches);
  }
  return out;
}

LevelValueFn cas_level_values(const CAS& cas, StateId flat_state, ActionId action,
                              const SolverOptions& options) {
  return [cas, flat_state, action, options](const SignalDistribution& verified,
                                            const SignalDistribution& supervised) {
    CAS view = cas;
    const FlatIndex index(cas.domain->num_states(), cas.domain->num_actions(), cas.domain->goal());
    const CasState s = index.unflatten(flat_state);
    const FeatureKey feature = (*cas.projection)(s.state, action);
    view.lambda.set({feature, Level::kVerified}, verified);
    view.lambda.set({feature, Level::kSupervised}, supervised);
    const CasSolution sol = solve_cas(view, options);
    std::array<double, kNumLevels> u{};
    for (Level l : kAllLevels) u[static_cast<std::size_t>(rank(l))] = sol.q(flat_state, {action, l});
    return u;
  };
}

bool is_lambda_stationary(std::span<const double> evsi_values, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  return std::all_of(evsi_values.begin(), evsi_values.end(),
                     [epsilon](double v) { return v < epsilon; });
}

}  // namespace cas
