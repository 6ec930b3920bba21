#include "cas/harness.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cas {

using nlohmann::json;

void ExperimentConfig::validate() const {
  if (episodes < 1) throw std::invalid_argument("episodes must be at least 1");
  if (trials < 1) throw std::invalid_argument("trials must be at least 1");
  if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
  if (step_cap < 1) throw std::invalid_argument("step cap must be at least 1");
  if (!(prior_strength >= 1.0)) throw std::invalid_argument("prior strength must be at least 1");
  if (convergence_window < 1 || !(convergence_threshold > 0.0))
    throw std::invalid_argument("convergence gate settings must be positive");
  exploration.validate();
}

std::optional<double> level_optimality(const CasSolution& solution, const CompetenceTable& chi,
                                       const std::vector<StateId>& subset) {
  long long total = 0, hits = 0;
  for (StateId fs : subset) {
    if (fs == solution.flat.index.goal()) continue;
    const CasAction a = FlatIndex::unflatten_action(solution.solution.policy[fs]);
    ++total;
    if (chi(fs, a.action) == a.level) ++hits;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<StateId> reachable_states(const CasSolution& solution, StateId start) {
  const SSP& ssp = solution.flat.ssp;
  std::vector<char> seen(static_cast<std::size_t>(ssp.num_states()), 0);
  std::vector<StateId> stack{start}, out;
  seen[static_cast<std::size_t>(start)] = 1;
  while (!stack.empty()) {
    const StateId s = stack.back();
    stack.pop_back();
    if (s == ssp.goal()) continue;
    out.push_back(s);
    for (const auto& o : ssp.row(s, solution.solution.policy[s])) {
      if (o.probability <= 0.0 || seen[static_cast<std::size_t>(o.state)]) continue;
      seen[static_cast<std::size_t>(o.state)] = 1;
      stack.push_back(o.state);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

FeedbackCounts make_counts(const ExperimentConfig& config) {
  FeedbackCounts counts(1.0, config.convergence_window, config.convergence_threshold);
  const double k = config.prior_strength;
  auto skew = [&](double good, double bad) {
    std::array<double, kNumSignals> verified{}, supervised{};
    verified[static_cast<std::size_t>(Signal::kApprove)] = good;
    verified[static_cast<std::size_t>(Signal::kDisapprove)] = bad;
    supervised[static_cast<std::size_t>(Signal::kNone)] = good;
    supervised[static_cast<std::size_t>(Signal::kOverride)] = bad;
    counts.set_prior(Level::kVerified, verified);
    counts.set_prior(Level::kSupervised, supervised);
  };
  if (config.prior == PriorKind::kOptimistic) skew(k, 1.0);
  if (config.prior == PriorKind::kPessimistic) skew(1.0, k);
  return counts;
}

namespace {

StateId sample(const TransitionRow& row, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double u = unit(rng);
  for (const auto& o : row) {
    if (u < o.probability) return o.state;
    u -= o.probability;
  }
  return row.back().state;
}

std::uint64_t trial_seed(std::uint64_t master, int trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(trial), 0x5eedu};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

}  // namespace

Trial::Trial(const DomainBundle& bundle, const ExperimentConfig& config, int trial_index)
    : bundle_(bundle),
      config_(config),
      trial_(trial_index),
      rng_(trial_seed(config.seed, trial_index)),
      kappa_(bundle.initial_kappa()),
      counts_(make_counts(config)) {
  config_.validate();
}

Trial::GoalCache& Trial::cache_for(StateId goal) {
  auto it = caches_.find(goal);
  if (it != caches_.end()) return it->second;
  GoalCache c;
  c.ssp = bundle_.make_ssp({goal, goal});
  c.tau = bundle_.make_tau({goal, goal});
  OracleSpec spec = bundle_.make_oracle_spec({goal, goal});
  spec.tau = c.tau;
  c.oracle = std::make_unique<HumanOracle>(std::move(spec));
  return caches_.emplace(goal, std::move(c)).first->second;
}

const HumanOracle& Trial::oracle_for(const Task& task) { return *cache_for(task.goal).oracle; }

const CompetenceTable& Trial::competence_for(const Task& task) {
  GoalCache& c = cache_for(task.goal);
  if (!c.chi) {
    CAS full{c.ssp, bundle_.projection, c.tau, kappa_, bundle_.mu, {}, bundle_.rho,
             bundle_.weights, bundle_.start_level};
    const FeedbackProfile truth = c.oracle->projected_lambda(*bundle_.projection);
    SolverOptions options;
    options.tolerance = config_.tolerance;
    options.mode = config_.sweep;
    c.chi = std::make_unique<CompetenceTable>(competence(full, truth, options));
  }
  return *c.chi;
}

CasSolution Trial::solve(const Task& task, const std::vector<double>* warm) {
  GoalCache& c = cache_for(task.goal);
  auto ssp = std::make_shared<const SSP>(c.ssp->with_start(task.start));
  CAS model{ssp, bundle_.projection, c.tau, kappa_, bundle_.mu, estimate_lambda(counts_),
            bundle_.rho, bundle_.weights, bundle_.start_level};
  SolverOptions options;
  options.tolerance = config_.tolerance;
  options.mode = config_.sweep;
  if (warm == nullptr && warm_task_.goal == task.goal && !warm_.empty()) warm = &warm_;
  options.warm_start = warm;
  CasSolution sol = [&] {
    try {
      return solve_cas(model, options);
    } catch (const NoProperPolicy& e) {
      const CasState bad = FlatIndex(bundle_.num_states, bundle_.num_actions, task.goal)
                               .unflatten(e.state());
      throw std::runtime_error("no proper policy under the current autonomy profile at " +
                               bundle_.state_names[static_cast<std::size_t>(bad.state)] + "/" +
                               std::string(to_string(bad.level)) + ": " + e.what());
    }
  }();
  warm_ = sol.solution.values.values;
  warm_task_ = task;
  audit_plan(sol);
  return sol;
}

void Trial::audit_plan(const CasSolution& sol) {
  const FlatIndex& index = sol.flat.index;
  for (StateId fs = 0; fs < index.num_states(); ++fs) {
    if (fs == index.goal()) continue;
    ++audit_.planned;
    if (!is_allowed(kappa_, index.unflatten(fs), FlatIndex::unflatten_action(sol.solution.policy[fs])))
      ++audit_.planned_violations;
  }
}

void Trial::log(int episode, int step, CasState s, CasAction a, std::string kind,
                std::string detail) {
  if (!config_.record_events) return;
  events_.push_back(Event{trial_, episode, step, s.state, a.action, a.level, std::move(kind),
                          std::move(detail)});
}

bool Trial::gate_open(const FeatureKey& feature, LevelMask allowed, Level current,
                      int episode) const {
  if (has_feedback(current) && !counts_.converged({feature, current})) return true;
  for (Level l : adjacent_levels(current)) {
    if (l == current) continue;
    if (!allowed.contains(l)) {
      if (!exploration_.embargoed(feature, l, episode)) return true;
    } else if (rank(l) > rank(current) && has_feedback(l) && !counts_.converged({feature, l})) {
      return true;
    }
  }
  return false;
}

Task Trial::next_task() {
  if (config_.task_mode == TaskMode::kSingle) return bundle_.default_task;
  const auto& cells = bundle_.task_cells;
  if (cells.size() < 2) throw std::runtime_error(bundle_.name + " has no random-task cells");
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  const StateId start = cells[pick(rng_)];
  StateId goal = start;
  while (goal == start) goal = cells[pick(rng_)];
  return {start, goal};
}

EpisodeRecord Trial::run_episode(int episode, const Task& task) {
  const auto clock_start = std::chrono::steady_clock::now();
  const HumanOracle& oracle = oracle_for(task);
  const CompetenceTable& chi = competence_for(task);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const ExplorationConfig& ex = config_.exploration;

  EpisodeRecord rec;
  rec.trial = trial_;
  rec.episode = episode;
  rec.task = task;

  CasSolution sol = solve(task);
  GoalCache& cache = cache_for(task.goal);
  // Cost accounting only; kappa and lambda are not consulted.
  const CAS model{cache.ssp, bundle_.projection, cache.tau, kappa_, bundle_.mu, {},
                  bundle_.rho, bundle_.weights, bundle_.start_level};
  CasState current{task.start, bundle_.start_level};
  rec.expected_cost = sol.value_at(current);

  std::array<long long, kNumLevels> level_steps{};
  const double human_cost_before = exploration_.human_cost();
  double rho_cost = 0.0;
  int step = 0;
  for (; step < config_.step_cap && current.state != task.goal; ++step) {
    visited_.insert({current.state, rank(current.level)});
    const StateId fs = sol.flat.index.flat(current);
    CasAction act = sol.action_at(current);
    const FeatureKey feature = (*bundle_.projection)(current.state, act.action);

    if (unit(rng_) < ex.explore_probability &&
        gate_open(feature, kappa_.allowed(current.state, act.action), act.level, episode)) {
      std::array<double, kNumLevels> q{};
      for (Level l : kAllLevels) q[static_cast<std::size_t>(rank(l))] = sol.q(fs, {act.action, l});
      const Level proposed = propose_level(act.level, q, ex.temperature, rng_);
      if (proposed != act.level) {
        if (!kappa_.allowed(current.state, act.action).contains(proposed)) {
          if (!exploration_.embargoed(feature, proposed, episode)) {
            const bool approved =
                exploration_.gate_query(oracle, current.state, act.action, proposed, ex.gate_cost, rng_);
            log(episode, step, current, {act.action, proposed}, "query", approved ? "approved" : "denied");
            const int grown = update_autonomy_profile(kappa_, *bundle_.projection, feature, proposed,
                                                      approved, exploration_, episode,
                                                      ex.embargo_episodes);
            if (grown > 0) {
              sol = solve(task);
              act = sol.action_at(current);
            }
          }
        } else if (rank(proposed) > rank(act.level)) {
          act.level = proposed;
          log(episode, step, current, act, "explore", std::string(to_string(proposed)));
        }
      }
    }

    ++audit_.executed;
    if (!is_allowed(kappa_, current, act)) ++audit_.executed_violations;
    if (bundle_.epsilon == 0.0) {
      const auto i = bundle_.pair_index(current.state, act.action);
      if (!(bundle_.kappa_h[i] | bundle_.kappa0[i]).contains(act.level)) ++audit_.kappa_violations;
    }

    rec.realized_cost += cas_cost(model, current, act);
    rho_cost += bundle_.rho.per_level[static_cast<std::size_t>(rank(act.level))];
    ++level_steps[static_cast<std::size_t>(rank(act.level))];

    const auto& domain_row = cache.ssp->row(current.state, act.action);
    StateId next = current.state;
    bool replan = false;
    switch (act.level) {
      case Level::kNone:
        next = oracle.human_takeover(current.state, act.action, rng_);
        break;
      case Level::kVerified: {
        const Signal sig = oracle.sample_feedback(current.state, act.action, act.level, rng_);
        counts_.record({feature, act.level}, sig);
        log(episode, step, current, act, "feedback", std::string(to_string(sig)));
        if (sig == Signal::kApprove) {
          next = sample(domain_row, rng_);
        } else {
          replan = true;
        }
        break;
      }
      case Level::kSupervised: {
        const Signal sig = oracle.sample_feedback(current.state, act.action, act.level, rng_);
        counts_.record({feature, act.level}, sig);
        log(episode, step, current, act, "feedback", std::string(to_string(sig)));
        next = sig == Signal::kOverride ? oracle.human_takeover(current.state, act.action, rng_)
                                        : sample(domain_row, rng_);
        break;
      }
      case Level::kUnsupervised:
        next = sample(domain_row, rng_);
        break;
    }
    current = {next, act.level};
    if (replan) sol = solve(task);
  }
  rec.steps = step;
  rec.capped = current.state != task.goal;
  if (rec.capped) log(episode, step, current, {0, current.level}, "cap", "step cap reached");

  // Metrics under the policy re-solved with everything learned this episode.
  sol = solve(task);
  std::vector<StateId> all, visited;
  const FlatIndex& index = sol.flat.index;
  for (StateId fs = 0; fs < index.num_states(); ++fs)
    if (fs != index.goal()) all.push_back(fs);
  for (const auto& [s, l] : visited_)
    if (s != task.goal) visited.push_back(index.flat({s, level_from_rank(l)}));
  const StateId start_flat = index.flat({task.start, bundle_.start_level});
  rec.lo_all = level_optimality(sol, chi, all);
  rec.lo_visited = level_optimality(sol, chi, visited);
  rec.lo_reachable = level_optimality(sol, chi, reachable_states(sol, start_flat));
  rec.start_action = FlatIndex::unflatten_action(sol.solution.policy[start_flat]);
  rec.start_chi = chi(start_flat, rec.start_action.action);

  rec.cum_feedback = counts_.total_feedback();
  if (step > 0)
    for (int l = 0; l < kNumLevels; ++l)
      rec.pct[static_cast<std::size_t>(l)] =
          100.0 * static_cast<double>(level_steps[static_cast<std::size_t>(l)]) / step;
  rec.human_cost = rho_cost + (exploration_.human_cost() - human_cost_before);
  if (config_.timing)
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            clock_start)
                      .count();
  return rec;
}

namespace {

json model_dump(const DomainBundle& bundle, const Trial& trial, const CasSolution& sol) {
  json kappa = json::array();
  for (StateId s = 0; s < bundle.num_states; ++s)
    for (ActionId a = 0; a < bundle.num_actions; ++a) {
      const LevelMask m = trial.kappa().allowed(s, a);
      if (m == bundle.kappa0[bundle.pair_index(s, a)]) continue;
      json levels = json::array();
      for (Level l : m.levels()) levels.push_back(rank(l));
      kappa.push_back({{"state", bundle.state_names[static_cast<std::size_t>(s)]},
                       {"action", bundle.action_names[static_cast<std::size_t>(a)]},
                       {"levels", levels}});
    }
  json lambda = json::array();
  for (const auto& [key, entry] : trial.counts().entries()) {
    const auto mean = trial.counts().posterior_mean(key);
    json dist = json::object(), counts = json::object();
    for (Signal sig : valid_signals(key.level)) {
      dist[std::string(to_string(sig))] = mean[static_cast<std::size_t>(sig)];
      counts[std::string(to_string(sig))] = entry.counts[static_cast<std::size_t>(sig)];
    }
    lambda.push_back({{"bucket", key.feature.bucket},
                      {"action", key.feature.action},
                      {"level", std::string(to_string(key.level))},
                      {"posterior_mean", dist},
                      {"counts", counts},
                      {"converged", entry.converged}});
  }
  json policy = json::array();
  const FlatIndex& index = sol.flat.index;
  for (StateId fs = 0; fs < index.num_states(); ++fs) {
    if (fs == index.goal()) continue;
    const CasState st = index.unflatten(fs);
    const CasAction a = FlatIndex::unflatten_action(sol.solution.policy[fs]);
    policy.push_back({{"state", bundle.state_names[static_cast<std::size_t>(st.state)]},
                      {"from_level", std::string(to_string(st.level))},
                      {"action", bundle.action_names[static_cast<std::size_t>(a.action)]},
                      {"level", std::string(to_string(a.level))},
                      {"value", sol.solution.values[fs]}});
  }
  const auto& audit = trial.audit();
  return {{"domain", bundle.name},
          {"kappa_changes", kappa},
          {"lambda", lambda},
          {"policy", policy},
          {"total_feedback", trial.counts().total_feedback()},
          {"gate_queries", trial.exploration().queries()},
          {"audit",
           {{"planned", audit.planned},
            {"planned_violations", audit.planned_violations},
            {"executed", audit.executed},
            {"executed_violations", audit.executed_violations}}}};
}

}  // namespace

TrialResult run_trial(const DomainBundle& bundle, const ExperimentConfig& config, int trial) {
  Trial t(bundle, config, trial);
  TrialResult result;
  Task task = bundle.default_task;
  for (int e = 0; e < config.episodes; ++e) {
    task = t.next_task();
    result.records.push_back(t.run_episode(e, task));
  }
  result.events = t.events();
  result.audit = t.audit();
  result.model = model_dump(bundle, t, t.solve(task));
  return result;
}

std::vector<TrialResult> run_experiment(const DomainBundle& bundle, const ExperimentConfig& config) {
  config.validate();
  std::vector<TrialResult> results(static_cast<std::size_t>(config.trials));
  std::vector<std::exception_ptr> errors(results.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < config.trials; ++k) {
    try {
      results[static_cast<std::size_t>(k)] = run_trial(bundle, config, k);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

namespace {

std::string number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string optional_number(const std::optional<double>& v) { return v ? number(*v) : "NA"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

std::string format_csv_row(const EpisodeRecord& r) {
  std::ostringstream os;
  os << r.trial << ',' << r.episode << ',' << number(r.expected_cost) << ','
     << number(r.realized_cost) << ',' << optional_number(r.lo_all) << ','
     << optional_number(r.lo_visited) << ',' << optional_number(r.lo_reachable) << ','
     << r.cum_feedback;
  for (double p : r.pct) os << ',' << number(p);
  os << ',' << number(r.human_cost) << ',' << number(r.wall_ms);
  return os.str();
}

std::string episodes_csv(const std::vector<TrialResult>& results) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& t : results)
    for (const auto& r : t.records) out += format_csv_row(r) + "\n";
  return out;
}

std::string events_csv(const std::vector<TrialResult>& results) {
  std::string out = "trial,episode,step,state,action,level,kind,detail\n";
  for (const auto& t : results)
    for (const auto& e : t.events) {
      std::ostringstream os;
      os << e.trial << ',' << e.episode << ',' << e.step << ',' << e.state << ',' << e.action << ','
         << to_string(e.level) << ',' << csv_field(e.kind) << ',' << csv_field(e.detail) << '\n';
      out += os.str();
    }
  return out;
}

json summary_json(const std::vector<TrialResult>& results) {
  static const char* const columns[] = {"expected_cost", "realized_cost", "lo_all",  "lo_visited",
                                        "lo_reachable",  "cum_feedback",  "pct_l0",  "pct_l1",
                                        "pct_l2",        "pct_l3",        "human_cost", "wall_ms"};
  auto column = [](const EpisodeRecord& r, int c) -> std::optional<double> {
    switch (c) {
      case 0: return r.expected_cost;
      case 1: return r.realized_cost;
      case 2: return r.lo_all;
      case 3: return r.lo_visited;
      case 4: return r.lo_reachable;
      case 5: return static_cast<double>(r.cum_feedback);
      case 6: case 7: case 8: case 9: return r.pct[static_cast<std::size_t>(c - 6)];
      case 10: return r.human_cost;
      default: return r.wall_ms;
    }
  };
  std::size_t episodes = 0;
  for (const auto& t : results) episodes = std::max(episodes, t.records.size());
  json rows = json::array();
  for (std::size_t e = 0; e < episodes; ++e) {
    json mean = json::object(), se = json::object();
    for (int c = 0; c < 12; ++c) {
      std::vector<double> xs;
      for (const auto& t : results)
        if (e < t.records.size())
          if (auto v = column(t.records[e], c)) xs.push_back(*v);
      if (xs.empty()) {
        mean[columns[c]] = nullptr;
        se[columns[c]] = nullptr;
        continue;
      }
      double m = 0.0;
      for (double x : xs) m += x;
      m /= static_cast<double>(xs.size());
      double var = 0.0;
      for (double x : xs) var += (x - m) * (x - m);
      const double n = static_cast<double>(xs.size());
      mean[columns[c]] = m;
      se[columns[c]] = xs.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
    }
    rows.push_back({{"episode", e}, {"mean", mean}, {"se", se}});
  }
  return {{"trials", results.size()},
          {"columns", json(std::vector<std::string>(std::begin(columns), std::end(columns)))},
          {"episodes", rows}};
}

void write_outputs(const std::vector<TrialResult>& results, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir + ": " + ec.message());
  const fs::path dir(out_dir);
  write_file(dir / "episodes.csv", episodes_csv(results));
  write_file(dir / "events.csv", events_csv(results));
  write_file(dir / "summary.json", summary_json(results).dump(2) + "\n");
  for (std::size_t k = 0; k < results.size(); ++k)
    write_file(dir / ("trial_" + std::to_string(k) + "_model.json"),
               results[k].model.dump(2) + "\n");
}

}  // namespace cas
