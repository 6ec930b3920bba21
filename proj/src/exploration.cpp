#include "cas/exploration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cas {

void ExplorationConfig::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (!(explore_probability >= 0.0 && explore_probability <= 1.0))
    throw std::invalid_argument("exploration probability must be in [0, 1]");
  if (embargo_episodes < 0) throw std::invalid_argument("embargo must be nonnegative");
  if (!(gate_cost >= 0.0)) throw std::invalid_argument("gate cost must be nonnegative");
}

std::array<double, kNumLevels> proposal_probabilities(Level current,
                                                      const std::array<double, kNumLevels>& q,
                                                      double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  const auto candidates = adjacent_levels(current);
  double lowest = std::numeric_limits<double>::infinity();
  for (Level l : candidates) lowest = std::min(lowest, q[static_cast<std::size_t>(rank(l))]);
  std::array<double, kNumLevels> p{};
  double total = 0.0;
  for (Level l : candidates) {
    const auto i = static_cast<std::size_t>(rank(l));
    p[i] = std::exp(-(q[i] - lowest) / temperature);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

Level propose_level(Level current, const std::array<double, kNumLevels>& q, double temperature,
                    std::mt19937_64& rng) {
  const auto p = proposal_probabilities(current, q, temperature);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double u = unit(rng);
  Level last = current;
  for (Level l : adjacent_levels(current)) {
    const double w = p[static_cast<std::size_t>(rank(l))];
    if (w <= 0.0) continue;
    last = l;
    if (u < w) return l;
    u -= w;
  }
  return last;
}

bool ExplorationState::embargoed(const FeatureKey& feature, Level level, int episode) const {
  const auto it = embargo_until_.find({feature, level});
  return it != embargo_until_.end() && episode < it->second;
}

void ExplorationState::embargo(const FeatureKey& feature, Level level, int until_episode) {
  embargo_until_[{feature, level}] = until_episode;
}

int ExplorationState::denials(const FeatureKey& feature, Level level) const {
  const auto it = denials_.find({feature, level});
  return it == denials_.end() ? 0 : it->second;
}

bool ExplorationState::gate_query(const HumanOracle& oracle, StateId s, ActionId a,
                                  Level proposed, double gate_cost, std::mt19937_64& rng) {
  ++queries_;
  human_cost_ += gate_cost;
  return oracle.answer_gate_query(s, a, proposed, rng);
}

int update_autonomy_profile(AutonomyProfile& kappa, const FeatureProjection& projection,
                            const FeatureKey& feature, Level level, bool approved,
                            ExplorationState& state, int episode, int embargo_episodes) {
  if (!approved) {
    state.note_denial(feature, level);
    state.embargo(feature, level, episode + embargo_episodes);
    return 0;
  }
  int grown = 0;
  for (const auto& [s, a] : projection.members(feature))
    if (kappa.add(s, a, level)) ++grown;
  return grown;
}

}  // namespace cas
