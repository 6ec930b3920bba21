#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cas/domains.hpp"
#include "cas/exploration.hpp"
#include "cas/feedback.hpp"
#include "cas/oracle.hpp"

namespace cas {

enum class TaskMode { kSingle, kRandom };

/// Starting belief over lambda.
enum class PriorKind { kUniform, kOptimistic, kPessimistic };

struct ExperimentConfig {
  TaskMode task_mode = TaskMode::kSingle;
  int episodes = 500;
  int trials = 10;
  std::uint64_t seed = 1;
  double tolerance = 1e-6;
  SweepMode sweep = SweepMode::kGaussSeidel;
  ExplorationConfig exploration;
  PriorKind prior = PriorKind::kUniform;
  double prior_strength = 3.0;  // pseudo-count on the favoured signal for skewed priors
  int step_cap = 500;
  int convergence_window = 20;
  double convergence_threshold = 0.01;
  bool timing = false;
  bool record_events = true;

  /// Throws std::invalid_argument on out-of-range settings.
  void validate() const;
};

struct EpisodeRecord {
  int trial = 0;
  int episode = 0;
  double expected_cost = 0.0;
  double realized_cost = 0.0;
  std::optional<double> lo_all;
  std::optional<double> lo_visited;
  std::optional<double> lo_reachable;
  long long cum_feedback = 0;
  std::array<double, kNumLevels> pct{};
  double human_cost = 0.0;
  double wall_ms = 0.0;
  int steps = 0;
  bool capped = false;
  Task task;
  CasAction start_action{0, Level::kNone};  // policy at the start state after the episode
  Level start_chi = Level::kNone;           // competence for that action
};

struct Event {
  int trial = 0;
  int episode = 0;
  int step = 0;
  StateId state = 0;
  ActionId action = 0;
  Level level = Level::kNone;
  std::string kind;
  std::string detail;
};

/// Counts of policy entries and executed steps checked against kappa.
struct AuditCounters {
  long long planned = 0;
  long long planned_violations = 0;
  long long executed = 0;
  long long executed_violations = 0;
  long long kappa_violations = 0;  // levels outside kappa^H and kappa_0 (epsilon = 0 only)
};

/// Fraction of `subset` where the policy's level equals chi for the policy's
/// own action; empty subsets give nullopt.
std::optional<double> level_optimality(const CasSolution& solution, const CompetenceTable& chi,
                                       const std::vector<StateId>& subset);

/// Forward closure from `start` (flat) under the policy's positive-probability
/// transitions, goal excluded, sorted.
std::vector<StateId> reachable_states(const CasSolution& solution, StateId start);

/// Initial Dirichlet store for a prior kind.
FeedbackCounts make_counts(const ExperimentConfig& config);

/// One learning agent paired with one simulated human across episodes.
class Trial {
 public:
  Trial(const DomainBundle& bundle, const ExperimentConfig& config, int trial_index);

  EpisodeRecord run_episode(int episode, const Task& task);
  Task next_task();

  const AutonomyProfile& kappa() const { return kappa_; }
  const FeedbackCounts& counts() const { return counts_; }
  const ExplorationState& exploration() const { return exploration_; }
  const AuditCounters& audit() const { return audit_; }
  const std::vector<Event>& events() const { return events_; }
  std::mt19937_64& rng() { return rng_; }

  /// Solution under the current kappa and lambda estimate.
  CasSolution solve(const Task& task, const std::vector<double>* warm = nullptr);
  const CompetenceTable& competence_for(const Task& task);
  const HumanOracle& oracle_for(const Task& task);

 private:
  // Dynamics, oracle and competence depend on the goal only.
  struct GoalCache {
    std::shared_ptr<const SSP> ssp;
    std::shared_ptr<const HumanTransition> tau;
    std::unique_ptr<HumanOracle> oracle;
    std::unique_ptr<CompetenceTable> chi;
  };
  GoalCache& cache_for(StateId goal);
  bool gate_open(const FeatureKey& feature, LevelMask allowed, Level current, int episode) const;
  void audit_plan(const CasSolution& solution);
  void log(int episode, int step, CasState s, CasAction a, std::string kind, std::string detail);

  const DomainBundle& bundle_;
  ExperimentConfig config_;
  int trial_;
  std::mt19937_64 rng_;
  AutonomyProfile kappa_;
  FeedbackCounts counts_;
  ExplorationState exploration_;
  AuditCounters audit_;
  std::vector<Event> events_;
  std::set<std::pair<StateId, int>> visited_;  // (domain state, level rank)
  std::map<StateId, GoalCache> caches_;
  std::vector<double> warm_;
  Task warm_task_{-1, -1};
};

struct TrialResult {
  std::vector<EpisodeRecord> records;
  std::vector<Event> events;
  AuditCounters audit;
  nlohmann::json model;
};

TrialResult run_trial(const DomainBundle& bundle, const ExperimentConfig& config, int trial);

/// Runs every trial (OpenMP-parallel); results are ordered by trial.
std::vector<TrialResult> run_experiment(const DomainBundle& bundle, const ExperimentConfig& config);

inline constexpr const char* kCsvHeader =
    "trial,episode,expected_cost,realized_cost,lo_all,lo_visited,lo_reachable,cum_feedback,"
    "pct_l0,pct_l1,pct_l2,pct_l3,human_cost,wall_ms";

std::string format_csv_row(const EpisodeRecord& r);
std::string episodes_csv(const std::vector<TrialResult>& results);
std::string events_csv(const std::vector<TrialResult>& results);

/// Per-episode across-trial mean and standard error of every CSV column.
nlohmann::json summary_json(const std::vector<TrialResult>& results);

/// Writes episodes.csv, events.csv, summary.json and trial_K_model.json.
void write_outputs(const std::vector<TrialResult>& results, const std::string& out_dir);

}  // namespace cas
