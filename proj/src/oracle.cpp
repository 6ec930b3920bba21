#include "cas/oracle.hpp"

#include <map>
#include <stdexcept>

namespace cas {

void OracleSpec::validate() const {
  if (!hidden_projection || !tau) throw std::invalid_argument("oracle is missing a component");
  const auto pairs = static_cast<std::size_t>(tau->num_states()) *
                     static_cast<std::size_t>(tau->num_actions());
  if (kappa_h.size() != pairs || hidden_projection->num_states() != tau->num_states() ||
      hidden_projection->num_actions() != tau->num_actions())
    throw std::invalid_argument("oracle tables disagree on the state/action space");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in [0, 1)");
}

HumanOracle::HumanOracle(OracleSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

SignalDistribution HumanOracle::effective_distribution(StateId s, ActionId a, Level level) const {
  if (!has_feedback(level))
    throw std::invalid_argument("no feedback exists at level " + std::string(to_string(level)));
  const SignalDistribution truth =
      spec_.true_lambda.lookup({(*spec_.hidden_projection)(s, a), level});
  const auto valid = valid_signals(level);
  SignalDistribution out{};
  const auto first = static_cast<std::size_t>(valid[0]);
  const auto second = static_cast<std::size_t>(valid[1]);
  out[first] = (1.0 - spec_.epsilon) * truth[first] + spec_.epsilon * truth[second];
  out[second] = (1.0 - spec_.epsilon) * truth[second] + spec_.epsilon * truth[first];
  return out;
}

Signal HumanOracle::sample_feedback(StateId s, ActionId a, Level level,
                                    std::mt19937_64& rng) const {
  if (!has_feedback(level))
    throw std::invalid_argument("no feedback exists at level " + std::string(to_string(level)));
  const SignalDistribution truth =
      spec_.true_lambda.lookup({(*spec_.hidden_projection)(s, a), level});
  const auto valid = valid_signals(level);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  const bool first = u < truth[static_cast<std::size_t>(valid[0])];
  const bool flip = unit(rng) < spec_.epsilon;
  return (first != flip) ? valid[0] : valid[1];
}

StateId HumanOracle::human_takeover(StateId s, ActionId a, std::mt19937_64& rng) const {
  const auto& row = spec_.tau->row(s, a);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double u = unit(rng);
  for (const auto& o : row) {
    if (u < o.probability) return o.state;
    u -= o.probability;
  }
  return row.back().state;
}

bool HumanOracle::answer_gate_query(StateId s, ActionId a, Level level,
                                    std::mt19937_64& rng) const {
  const bool allowed = kappa_h(s, a).contains(level);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return (unit(rng) < spec_.epsilon) ? !allowed : allowed;
}

FeedbackProfile HumanOracle::projected_lambda(const FeatureProjection& agent) const {
  std::map<FeedbackKey, std::pair<SignalDistribution, int>> sums;
  for (StateId s = 0; s < agent.num_states(); ++s) {
    for (ActionId a = 0; a < agent.num_actions(); ++a) {
      for (Level l : {Level::kVerified, Level::kSupervised}) {
        auto& [sum, n] = sums[FeedbackKey{agent(s, a), l}];
        const auto d = effective_distribution(s, a, l);
        for (int i = 0; i < kNumSignals; ++i) sum[static_cast<std::size_t>(i)] += d[static_cast<std::size_t>(i)];
        ++n;
      }
    }
  }
  FeedbackProfile out;
  for (auto& [key, acc] : sums) {
    auto [sum, n] = acc;
    for (double& p : sum) p /= n;
    out.set(key, sum);
  }
  return out;
}

}  // namespace cas
