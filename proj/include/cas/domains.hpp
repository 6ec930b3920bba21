#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cas/cas_model.hpp"
#include "cas/exploration.hpp"
#include "cas/oracle.hpp"

namespace cas {

/// Malformed or inconsistent domain configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Placeholder successor in bundle rows, replaced by the task goal.
inline constexpr StateId kTaskGoal = -1;

struct Task {
  StateId start = 0;
  StateId goal = 0;
  auto operator<=>(const Task&) const = default;
};

/// Role of a domain state for autonomy-profile initialisation and reporting.
enum class StateRole { kFree, kObstacle, kLane, kTerminal };

/// Everything needed to instantiate CAS planning problems and the simulated
/// human for one domain. Dynamics are goal-independent; `make_ssp` closes
/// them over a task.
struct DomainBundle {
  std::string name;
  int num_states = 0;
  int num_actions = 0;
  std::vector<std::string> state_names;
  std::vector<std::string> action_names;
  std::vector<StateRole> roles;

  std::vector<TransitionRow> rows;      // per (s, a); may reference kTaskGoal
  std::vector<double> costs;            // per (s, a)
  std::vector<TransitionRow> tau_rows;  // per (s, a); may reference kTaskGoal

  std::shared_ptr<const FeatureProjection> projection;
  std::shared_ptr<const FeatureProjection> hidden_projection;
  std::vector<LevelMask> kappa0;   // per (s, a)
  std::vector<LevelMask> kappa_h;  // per (s, a)
  FeedbackProfile true_lambda;     // keyed by the hidden projection
  double epsilon = 0.0;

  AutonomyCost mu;
  HumanCost rho;
  CostWeights weights;
  Level start_level = Level::kNone;
  ExplorationConfig exploration;

  Task default_task;
  std::vector<StateId> task_cells;  // candidate start/goal states for random tasks

  std::shared_ptr<const SSP> make_ssp(const Task& task) const;
  std::shared_ptr<const HumanTransition> make_tau(const Task& task) const;
  OracleSpec make_oracle_spec(const Task& task) const;
  AutonomyProfile initial_kappa() const;
  CAS make_cas(const Task& task, const AutonomyProfile& kappa,
               const FeedbackProfile& lambda) const;
  /// Throws ConfigError when the bundle is inconsistent or the task unsolvable.
  void validate(const Task& task) const;

  std::size_t pair_index(StateId s, ActionId a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions) +
           static_cast<std::size_t>(a);
  }
};

nlohmann::json default_campus_config();
nlohmann::json default_av_config();

DomainBundle build_campus(const nlohmann::json& config);
DomainBundle build_av(const nlohmann::json& config);

/// Dispatches on the config's "domain" field.
DomainBundle build_domain(const nlohmann::json& config);

/// Reads and parses a JSON file; throws ConfigError on failure.
nlohmann::json load_config(const std::string& path);

}  // namespace cas
