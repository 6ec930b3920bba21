#include "cas/cas_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace cas {

namespace {

constexpr double kRowTolerance = 1e-9;

void check_row(const TransitionRow& row, int num_states, const char* what) {
  double total = 0.0;
  for (const auto& o : row) {
    if (o.state < 0 || o.state >= num_states || !(o.probability >= 0.0))
      throw std::invalid_argument(std::string(what) + ": bad successor");
    total += o.probability;
  }
  if (std::abs(total - 1.0) > kRowTolerance)
    throw std::invalid_argument(std::string(what) + ": row does not sum to one");
}

void accumulate(TransitionRow& out, const TransitionRow& row, double weight) {
  if (weight <= 0.0) return;
  for (const auto& o : row) out.push_back({o.state, weight * o.probability});
}

TransitionRow merge(TransitionRow row) {
  std::sort(row.begin(), row.end(),
            [](const Outcome& a, const Outcome& b) { return a.state < b.state; });
  TransitionRow out;
  for (const auto& o : row) {
    if (o.probability <= 0.0) continue;
    if (!out.empty() && out.back().state == o.state) out.back().probability += o.probability;
    else out.push_back(o);
  }
  return out;
}

}  // namespace

FeatureProjection::FeatureProjection(int num_states, int num_actions, std::vector<FeatureKey> keys)
    : num_states_(num_states), num_actions_(num_actions), keys_(std::move(keys)) {
  if (keys_.size() != static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions))
    throw std::invalid_argument("feature projection must cover every (state, action)");
}

std::vector<std::pair<StateId, ActionId>> FeatureProjection::members(const FeatureKey& key) const {
  std::vector<std::pair<StateId, ActionId>> out;
  for (StateId s = 0; s < num_states_; ++s)
    for (ActionId a = 0; a < num_actions_; ++a)
      if ((*this)(s, a) == key) out.emplace_back(s, a);
  return out;
}

void check_distribution(const SignalDistribution& dist, Level level) {
  double total = 0.0;
  for (int i = 0; i < kNumSignals; ++i) {
    const double p = dist[static_cast<std::size_t>(i)];
    if (!(p >= 0.0)) throw std::invalid_argument("negative signal probability");
    if (p > 0.0 && !signal_valid(static_cast<Signal>(i), level))
      throw std::invalid_argument("probability mass on a signal invalid at this level");
    total += p;
  }
  if (!has_feedback(level)) {
    if (total != 0.0) throw std::invalid_argument("no signals exist at this level");
    return;
  }
  if (std::abs(total - 1.0) > kRowTolerance)
    throw std::invalid_argument("signal distribution does not sum to one");
}

void FeedbackProfile::set(const FeedbackKey& key, const SignalDistribution& dist) {
  check_distribution(dist, key.level);
  table_[key] = dist;
}

void FeedbackProfile::set_default(Level level, const SignalDistribution& dist) {
  check_distribution(dist, level);
  defaults_[static_cast<std::size_t>(rank(level))] = dist;
}

SignalDistribution FeedbackProfile::lookup(const FeedbackKey& key) const {
  const auto it = table_.find(key);
  if (it != table_.end()) return it->second;
  const auto& fallback = defaults_[static_cast<std::size_t>(rank(key.level))];
  return fallback ? *fallback : uniform_distribution(key.level);
}

AutonomyProfile::AutonomyProfile(int num_states, int num_actions, LevelMask initial)
    : AutonomyProfile(num_states, num_actions,
                      std::vector<LevelMask>(static_cast<std::size_t>(num_states) *
                                                 static_cast<std::size_t>(num_actions),
                                             initial)) {}

AutonomyProfile::AutonomyProfile(int num_states, int num_actions, std::vector<LevelMask> masks)
    : num_states_(num_states), num_actions_(num_actions), masks_(std::move(masks)) {
  if (masks_.size() != static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions))
    throw std::invalid_argument("autonomy profile must cover every (state, action)");
  for (const auto& m : masks_)
    if (!m.contains(Level::kNone))
      throw std::invalid_argument("autonomy profile must always allow level 0");
}

void AutonomyProfile::set(StateId s, ActionId a, LevelMask mask) {
  if (!mask.contains(Level::kNone))
    throw std::invalid_argument("autonomy profile must always allow level 0");
  masks_[index(s, a)] = mask;
}

bool AutonomyProfile::add(StateId s, ActionId a, Level level) {
  auto& m = masks_[index(s, a)];
  if (m.contains(level)) return false;
  m.insert(level);
  return true;
}

double AutonomyCost::operator()(Level from, Level to) const {
  return op_cost[static_cast<std::size_t>(rank(to))] +
         switch_coeff * std::abs(rank(to) - rank(from));
}

void HumanCost::validate() const {
  for (double c : per_level)
    if (!(c >= 0.0) || !std::isfinite(c)) throw std::invalid_argument("human cost must be nonnegative");
  if (per_level[static_cast<std::size_t>(rank(Level::kUnsupervised))] != 0.0)
    throw std::invalid_argument("human cost at unsupervised autonomy must be zero");
}

HumanTransition::HumanTransition(int num_states, int num_actions, std::vector<TransitionRow> rows)
    : num_states_(num_states), num_actions_(num_actions), rows_(std::move(rows)) {
  if (rows_.size() != static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions))
    throw std::invalid_argument("human transition must cover every (state, action)");
  for (const auto& r : rows_) check_row(r, num_states, "human transition");
}

double HumanTransition::probability(StateId s, ActionId a, StateId next) const {
  double p = 0.0;
  for (const auto& o : row(s, a))
    if (o.state == next) p += o.probability;
  return p;
}

void CAS::validate() const {
  if (!domain || !projection || !tau) throw std::invalid_argument("CAS is missing a component");
  const int n = domain->num_states();
  const int m = domain->num_actions();
  if (projection->num_states() != n || projection->num_actions() != m ||
      tau->num_states() != n || tau->num_actions() != m || kappa.num_states() != n ||
      kappa.num_actions() != m)
    throw std::invalid_argument("CAS components disagree on the state/action space");
  rho.validate();
  for (double w : {weights.domain, weights.autonomy, weights.human})
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("cost weights must be nonnegative");
}

TransitionRow cas_transition_row(const CAS& cas, CasState from, CasAction action) {
  const StateId s = from.state;
  const ActionId a = action.action;
  const auto& domain_row = cas.domain->row(s, a);
  const auto& human_row = cas.tau->row(s, a);
  TransitionRow out;
  switch (action.level) {
    case Level::kNone:
      accumulate(out, human_row, 1.0);
      break;
    case Level::kVerified: {
      const auto d = cas.lambda.lookup(cas.feedback_key(s, a, action.level));
      accumulate(out, domain_row, d[static_cast<std::size_t>(Signal::kApprove)]);
      const double stay = d[static_cast<std::size_t>(Signal::kDisapprove)];
      if (stay > 0.0) out.push_back({s, stay});
      break;
    }
    case Level::kSupervised: {
      const auto d = cas.lambda.lookup(cas.feedback_key(s, a, action.level));
      accumulate(out, domain_row, d[static_cast<std::size_t>(Signal::kNone)]);
      accumulate(out, human_row, d[static_cast<std::size_t>(Signal::kOverride)]);
      break;
    }
    case Level::kUnsupervised:
      accumulate(out, domain_row, 1.0);
      break;
    default:
      throw std::invalid_argument("invalid level");
  }
  return merge(std::move(out));
}

double cas_transition(const CAS& cas, CasState from, CasAction action, StateId next) {
  if (rank(action.level) < 0 || rank(action.level) >= kNumLevels)
    throw std::invalid_argument("invalid level");
  double p = 0.0;
  for (const auto& o : cas_transition_row(cas, from, action))
    if (o.state == next) p += o.probability;
  return p;
}

double cas_cost(const CAS& cas, CasState from, CasAction action) {
  if (from.state == cas.domain->goal()) return 0.0;
  const StateId s = from.state;
  const ActionId a = action.action;
  return cas.weights.domain * cas.domain->cost(s, a) +
         cas.weights.autonomy * cas.mu(from.level, action.level) +
         cas.weights.human * cas.rho(s, a, from.level, action.level);
}

bool is_allowed(const AutonomyProfile& kappa, CasState from, CasAction action) {
  return kappa.allowed(from.state, action.action).contains(action.level);
}

FlatIndex::FlatIndex(int num_domain_states, int num_domain_actions, StateId goal)
    : num_domain_states_(num_domain_states),
      num_domain_actions_(num_domain_actions),
      domain_goal_(goal) {
  for (StateId s = 0; s < num_domain_states; ++s) {
    if (s == goal) continue;
    for (Level l : kAllLevels) states_.push_back({s, l});
  }
  goal_flat_ = static_cast<StateId>(states_.size());
  states_.push_back({goal, Level::kNone});
}

StateId FlatIndex::flat(CasState s) const {
  if (s.state == domain_goal_) return goal_flat_;
  const StateId compact = s.state < domain_goal_ ? s.state : s.state - 1;
  return compact * kNumLevels + rank(s.level);
}

AllowedFn FlatCas::allowed_fn() const {
  return [this](StateId s, ActionId a) { return allowed_at(s, a); };
}

FlatCas flatten_to_ssp(const CAS& cas) {
  cas.validate();
  const SSP& domain = *cas.domain;
  FlatIndex index(domain.num_states(), domain.num_actions(), domain.goal());
  const int n = index.num_states();
  const int m = domain.num_actions() * kNumLevels;

  std::vector<TransitionRow> rows(static_cast<std::size_t>(n) * static_cast<std::size_t>(m));
  std::vector<double> costs(rows.size(), 0.0);
  std::vector<char> allowed(rows.size(), 1);

  for (StateId fs = 0; fs < n; ++fs) {
    const CasState from = index.unflatten(fs);
    for (ActionId fa = 0; fa < m; ++fa) {
      const auto idx = static_cast<std::size_t>(fs) * static_cast<std::size_t>(m) +
                       static_cast<std::size_t>(fa);
      const CasAction action = FlatIndex::unflatten_action(fa);
      if (fs == index.goal()) {
        rows[idx] = {{fs, 1.0}};
        continue;
      }
      TransitionRow row;
      for (const auto& o : cas_transition_row(cas, from, action))
        row.push_back({index.flat({o.state, action.level}), o.probability});
      row = merge(std::move(row));
      double total = 0.0;
      for (const auto& o : row) total += o.probability;
      if (std::abs(total - 1.0) > kRowTolerance) {
        std::ostringstream msg;
        msg << "composed transition row (" << from.state << ", " << to_string(from.level) << ", "
            << action.action << ", " << to_string(action.level) << ") sums to " << total;
        throw std::invalid_argument(msg.str());
      }
      rows[idx] = std::move(row);
      costs[idx] = cas_cost(cas, from, action);
      allowed[idx] = is_allowed(cas.kappa, from, action) ? 1 : 0;
    }
  }
  const StateId start = index.flat({domain.start(), cas.start_level});
  return FlatCas{SSP(n, m, std::move(rows), std::move(costs), start, index.goal()),
                 std::move(index), std::move(allowed)};
}

CasSolution solve_cas(const CAS& cas, const SolverOptions& options) {
  FlatCas flat = flatten_to_ssp(cas);
  Solution solution = solve_value_iteration(flat.ssp, options, flat.allowed_fn());
  return CasSolution{std::move(flat), std::move(solution)};
}

CompetenceTable competence(const CAS& cas, const FeedbackProfile& true_lambda,
                           const SolverOptions& options) {
  CAS oracle_view = cas;
  oracle_view.lambda = true_lambda;
  oracle_view.kappa = AutonomyProfile(cas.domain->num_states(), cas.domain->num_actions(),
                                      LevelMask::all());
  const FlatCas flat = flatten_to_ssp(oracle_view);
  const Solution sol = solve_value_iteration(flat.ssp, options);

  const int n = flat.index.num_states();
  const int actions = cas.domain->num_actions();
  std::vector<Level> chi(static_cast<std::size_t>(n) * static_cast<std::size_t>(actions),
                         Level::kNone);
  for (StateId fs = 0; fs < n; ++fs) {
    if (fs == flat.index.goal()) continue;
    for (ActionId a = 0; a < actions; ++a) {
      double best = std::numeric_limits<double>::infinity();
      Level best_level = Level::kNone;
      for (Level l : kAllLevels) {
        const double q = q_value(flat.ssp, sol.values, fs, FlatIndex::flat_action({a, l}));
        if (q < best - 1e-9) {
          best = q;
          best_level = l;
        }
      }
      chi[static_cast<std::size_t>(fs) * static_cast<std::size_t>(actions) +
          static_cast<std::size_t>(a)] = best_level;
    }
  }
  return CompetenceTable(flat.index, std::move(chi));
}

}  // namespace cas
