#include "cas/domains.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace cas {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw ConfigError(what); }

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(std::string("field '") + key + "': " + e.what());
  }
}

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) fail(std::string("missing field '") + key + "'");
  return j.at(key);
}

LevelMask parse_mask(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where + ": level set must be an array of ranks");
  LevelMask mask;
  for (const auto& v : j) {
    if (!v.is_number_integer() || v.get<int>() < 0 || v.get<int>() >= kNumLevels)
      fail(where + ": level ranks are 0..3");
    mask.insert(level_from_rank(v.get<int>()));
  }
  if (!mask.contains(Level::kNone)) fail(where + ": level 0 must always be allowed");
  return mask;
}

double probability_field(const json& j, const char* key, double fallback, const std::string& where) {
  const double p = get_or<double>(j, key, fallback);
  if (!(p >= 0.0 && p <= 1.0)) fail(where + ": '" + key + "' must be a probability");
  return p;
}

/// Approve rate at verified and override rate at supervised, plus kappa^H.
struct HumanRule {
  double approve = 1.0;
  double override_rate = 0.0;
  LevelMask allowed = LevelMask::all();
};

HumanRule parse_rule(const json& j, const std::string& where) {
  HumanRule r;
  r.approve = probability_field(j, "approve", 1.0, where);
  r.override_rate = probability_field(j, "override", 0.0, where);
  if (j.contains("allowed")) r.allowed = parse_mask(j.at("allowed"), where);
  return r;
}

void set_rule_lambda(FeedbackProfile& lambda, const FeatureKey& key, const HumanRule& r) {
  SignalDistribution verified{};
  verified[static_cast<std::size_t>(Signal::kApprove)] = r.approve;
  verified[static_cast<std::size_t>(Signal::kDisapprove)] = 1.0 - r.approve;
  SignalDistribution supervised{};
  supervised[static_cast<std::size_t>(Signal::kNone)] = 1.0 - r.override_rate;
  supervised[static_cast<std::size_t>(Signal::kOverride)] = r.override_rate;
  lambda.set({key, Level::kVerified}, verified);
  lambda.set({key, Level::kSupervised}, supervised);
}

void parse_costs(const json& config, DomainBundle& b) {
  const json costs = config.value("costs", json::object());
  const auto rho = get_or<std::vector<double>>(costs, "rho", {5.0, 2.0, 1.0, 0.0});
  const auto op = get_or<std::vector<double>>(costs, "mu_op", {0.0, 0.0, 0.0, 0.0});
  if (rho.size() != kNumLevels || op.size() != kNumLevels)
    fail("costs: 'rho' and 'mu_op' need one entry per level");
  for (int i = 0; i < kNumLevels; ++i) {
    b.rho.per_level[static_cast<std::size_t>(i)] = rho[static_cast<std::size_t>(i)];
    b.mu.op_cost[static_cast<std::size_t>(i)] = op[static_cast<std::size_t>(i)];
  }
  b.mu.switch_coeff = get_or<double>(costs, "mu_switch", 0.1);
  const json w = costs.value("weights", json::object());
  b.weights.domain = get_or<double>(w, "domain", 1.0);
  b.weights.autonomy = get_or<double>(w, "autonomy", 1.0);
  b.weights.human = get_or<double>(w, "human", 1.0);
  try {
    b.rho.validate();
  } catch (const std::invalid_argument& e) {
    fail(std::string("costs: ") + e.what());
  }
  if (b.weights.domain <= 0.0 || b.weights.autonomy < 0.0 || b.weights.human < 0.0)
    fail("costs: weights must be nonnegative with a positive domain weight");
  for (double c : op)
    if (c < 0.0) fail("costs: 'mu_op' must be nonnegative");
  if (b.mu.switch_coeff < 0.0) fail("costs: 'mu_switch' must be nonnegative");
}

void parse_common(const json& config, DomainBundle& b) {
  parse_costs(config, b);
  const json human = config.value("human", json::object());
  b.epsilon = get_or<double>(human, "epsilon", 0.0);
  if (!(b.epsilon >= 0.0 && b.epsilon < 1.0)) fail("human: epsilon must be in [0, 1)");
  const int start_level = get_or<int>(config, "start_level", 0);
  if (start_level < 0 || start_level >= kNumLevels) fail("start_level must be a rank 0..3");
  b.start_level = level_from_rank(start_level);

  const json ex = config.value("exploration", json::object());
  b.exploration.temperature = get_or<double>(ex, "temperature", b.exploration.temperature);
  b.exploration.explore_probability =
      get_or<double>(ex, "explore_probability", b.exploration.explore_probability);
  b.exploration.embargo_episodes = get_or<int>(ex, "embargo_episodes", b.exploration.embargo_episodes);
  b.exploration.gate_cost = get_or<double>(ex, "gate_cost", b.exploration.gate_cost);
  try {
    b.exploration.validate();
  } catch (const std::invalid_argument& e) {
    fail(std::string("exploration: ") + e.what());
  }
}

TransitionRow resolve(const TransitionRow& row, StateId goal) {
  TransitionRow out;
  for (const auto& o : row) {
    const StateId s = o.state == kTaskGoal ? goal : o.state;
    auto it = std::find_if(out.begin(), out.end(), [&](const Outcome& x) { return x.state == s; });
    if (it != out.end()) it->probability += o.probability;
    else out.push_back({s, o.probability});
  }
  return out;
}

void add_outcome(TransitionRow& row, StateId s, double p) {
  if (p <= 0.0) return;
  for (auto& o : row)
    if (o.state == s) {
      o.probability += p;
      return;
    }
  row.push_back({s, p});
}

// ---------------------------------------------------------------- campus

constexpr int kDr[4] = {-1, 0, 1, 0};
constexpr int kDc[4] = {0, 1, 0, -1};

const char* const kTrafficNames[3] = {"none", "light", "heavy"};
const char* const kVisibilityNames[2] = {"good", "poor"};
const char* const kColorNames[3] = {"blue", "green", "red"};

int index_of(const char* const* names, int n, const std::string& value, const std::string& where) {
  for (int i = 0; i < n; ++i)
    if (value == names[i]) return i;
  fail(where + ": unknown value '" + value + "'");
}

std::pair<int, int> parse_cell(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    fail(where + ": cells are [row, col]");
  return {j[0].get<int>(), j[1].get<int>()};
}

bool passable(char c) { return c == '.' || c == 'R' || c == 'P' || c == 'D' || c == 'X'; }

}  // namespace

// ---------------------------------------------------------------- bundle

std::shared_ptr<const SSP> DomainBundle::make_ssp(const Task& task) const {
  if (task.start < 0 || task.start >= num_states || task.goal < 0 || task.goal >= num_states)
    fail("task start/goal out of range");
  std::vector<TransitionRow> r(rows.size());
  std::vector<double> c(costs);
  for (StateId s = 0; s < num_states; ++s) {
    for (ActionId a = 0; a < num_actions; ++a) {
      const auto i = pair_index(s, a);
      if (s == task.goal) {
        r[i] = {{s, 1.0}};
        c[i] = 0.0;
      } else {
        r[i] = resolve(rows[i], task.goal);
      }
    }
  }
  try {
    return std::make_shared<const SSP>(num_states, num_actions, std::move(r), std::move(c),
                                       task.start, task.goal);
  } catch (const std::invalid_argument& e) {
    fail(name + ": " + e.what());
  }
}

std::shared_ptr<const HumanTransition> DomainBundle::make_tau(const Task& task) const {
  std::vector<TransitionRow> r(tau_rows.size());
  for (StateId s = 0; s < num_states; ++s)
    for (ActionId a = 0; a < num_actions; ++a) {
      const auto i = pair_index(s, a);
      r[i] = s == task.goal ? TransitionRow{{s, 1.0}} : resolve(tau_rows[i], task.goal);
    }
  return std::make_shared<const HumanTransition>(num_states, num_actions, std::move(r));
}

OracleSpec DomainBundle::make_oracle_spec(const Task& task) const {
  OracleSpec spec;
  spec.hidden_projection = hidden_projection;
  spec.true_lambda = true_lambda;
  spec.kappa_h = kappa_h;
  spec.tau = make_tau(task);
  spec.epsilon = epsilon;
  return spec;
}

AutonomyProfile DomainBundle::initial_kappa() const {
  return AutonomyProfile(num_states, num_actions, kappa0);
}

CAS DomainBundle::make_cas(const Task& task, const AutonomyProfile& kappa,
                           const FeedbackProfile& lambda) const {
  return CAS{make_ssp(task), projection, make_tau(task), kappa, mu, lambda, rho, weights,
             start_level};
}

void DomainBundle::validate(const Task& task) const {
  const auto pairs = static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions);
  if (rows.size() != pairs || costs.size() != pairs || tau_rows.size() != pairs ||
      kappa0.size() != pairs || kappa_h.size() != pairs)
    fail(name + ": tables do not cover every (state, action)");
  for (std::size_t i = 0; i < pairs; ++i)
    if (!kappa0[i].contains(Level::kNone)) fail(name + ": level 0 missing from the initial profile");
  const auto ssp = make_ssp(task);
  try {
    make_tau(task);
    make_oracle_spec(task).validate();
  } catch (const std::invalid_argument& e) {
    fail(name + ": " + e.what());
  }
}

// ---------------------------------------------------------------- campus

json default_campus_config() {
  return json::parse(R"json(
{
  "domain": "campus",
  "map": [
    "####################",
    "#..T.....#RRRR#RRRR#",
    "#........#RRRR#RRRR#",
    "#..T.....#RRRRDRRRR#",
    "#........##D####D###",
    "#..................#",
    "#PPP=========X=====#",
    "#PPP....T..........#",
    "#PPP..........T....#",
    "#PPP=========X=====#",
    "#..................#",
    "#.....T............#",
    "###########D####D###",
    "#TTTTTTTT#RRRR#RRRR#",
    "#TTTTTTTT#RRRRDRRRR#",
    "#TTTTTTTT#RRRR#RRRR#",
    "#TTTTTTTT#RRRR#RRRR#",
    "####################"
  ],
  "start": [3, 11],
  "goal": [13, 16],
  "doors": [
    {"at": [4, 11], "building": "north", "color": "blue", "openable": true, "human": "routine"},
    {"at": [3, 14], "building": "north", "color": "blue", "openable": true, "human": "routine"},
    {"at": [4, 16], "building": "north", "color": "red", "openable": false, "human": "stuck", "human_out": "routine"},
    {"at": [12, 11], "building": "south", "color": "red", "openable": true, "human": "routine"},
    {"at": [12, 16], "building": "south", "color": "blue", "openable": true, "hazard": 0.015, "human": "cautious"},
    {"at": [14, 14], "building": "south", "color": "green", "openable": true, "human": "routine"}
  ],
  "crosswalks": [
    {"at": [6, 13], "traffic": "light", "visibility": "good"},
    {"at": [9, 13], "traffic": "light", "visibility": "poor"}
  ],
  "hazard": {"none": 0.0, "light": 0.0, "heavy": 0.05},
  "costs": {
    "move": 1.0,
    "incident_penalty": 200.0,
    "rho": [10.0, 2.0, 1.0, 0.0],
    "mu_op": [0.0, 0.0, 0.0, 0.0],
    "mu_switch": 0.1,
    "weights": {"domain": 1.0, "autonomy": 1.0, "human": 1.0}
  },
  "kappa0": {"free": [0, 1, 2, 3], "obstacle": [0, 1]},
  "human": {
    "epsilon": 0.01,
    "free": {"approve": 1.0, "override": 0.0, "allowed": [0, 1, 2, 3]},
    "door": {
      "routine": {"approve": 1.0, "override": 0.0, "allowed": [0, 1, 2, 3]},
      "cautious": {"approve": 0.7, "override": 0.5, "allowed": [0, 1, 2]},
      "stuck": {"approve": 0.0, "override": 0.0, "allowed": [0, 1]}
    },
    "crosswalk": {
      "none/good": {"approve": 1.0, "override": 0.0, "allowed": [0, 1, 2, 3]},
      "none/poor": {"approve": 1.0, "override": 0.1, "allowed": [0, 1, 2, 3]},
      "light/good": {"approve": 1.0, "override": 0.05, "allowed": [0, 1, 2, 3]},
      "light/poor": {"approve": 0.9, "override": 0.4, "allowed": [0, 1, 2, 3]},
      "heavy/good": {"approve": 0.5, "override": 0.6, "allowed": [0, 1, 2]},
      "heavy/poor": {"approve": 0.2, "override": 0.9, "allowed": [0, 1, 2]}
    }
  },
  "start_level": 0,
  "exploration": {"temperature": 2.0, "explore_probability": 0.1, "embargo_episodes": 10, "gate_cost": 1.0}
}
)json");
}

DomainBundle build_campus(const json& config) {
  if (!config.is_object()) fail("campus config must be a JSON object");
  DomainBundle b;
  b.name = "campus";
  parse_common(config, b);

  const auto map = get_or<std::vector<std::string>>(config, "map", {});
  if (map.empty()) fail("campus: empty map");
  const int height = static_cast<int>(map.size());
  const int width = static_cast<int>(map[0].size());
  for (int r = 0; r < height; ++r) {
    if (static_cast<int>(map[static_cast<std::size_t>(r)].size()) != width)
      fail("campus: map rows differ in length");
    for (int c = 0; c < width; ++c) {
      const char ch = map[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (std::string("#T=.RPDX").find(ch) == std::string::npos)
        fail("campus: unknown map symbol '" + std::string(1, ch) + "' at row " +
             std::to_string(r) + ", col " + std::to_string(c));
      const bool border = r == 0 || c == 0 || r == height - 1 || c == width - 1;
      if (border && passable(ch)) fail("campus: map must be enclosed by impassable cells");
    }
  }
  auto at = [&](int r, int c) {
    return map[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  };
  auto in_map = [&](std::pair<int, int> rc) {
    return rc.first >= 0 && rc.first < height && rc.second >= 0 && rc.second < width;
  };

  // Cell states in row-major order, then the incident state.
  std::map<std::pair<int, int>, StateId> cell_state;
  std::vector<std::pair<int, int>> cells;
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      if (passable(at(r, c))) {
        cell_state[{r, c}] = static_cast<StateId>(cells.size());
        cells.push_back({r, c});
      }
  const StateId incident = static_cast<StateId>(cells.size());
  b.num_states = incident + 1;
  b.num_actions = 4;
  b.action_names = {"north", "east", "south", "west"};

  struct Door {
    int building;
    int color;
    bool openable;
    int index;
    double hazard;         // incident chance when entering
    std::string rule;      // moves into the building
    std::string rule_out;  // moves out of it
  };
  struct Crosswalk {
    int traffic;
    int visibility;
  };
  std::map<StateId, Door> doors;
  std::map<StateId, Crosswalk> crosswalks;
  std::map<std::string, int> buildings;

  const json door_list = config.value("doors", json::array());
  for (const auto& d : door_list) {
    const auto rc = parse_cell(require(d, "at"), "door");
    if (!in_map(rc) || at(rc.first, rc.second) != 'D') fail("campus: door entry not on a 'D' cell");
    const std::string building = require(d, "building").get<std::string>();
    const int bid = buildings.emplace(building, static_cast<int>(buildings.size())).first->second;
    const int color = index_of(kColorNames, 3, require(d, "color").get<std::string>(), "door color");
    const StateId s = cell_state.at(rc);
    if (doors.count(s)) fail("campus: duplicate door entry");
    const bool openable = require(d, "openable").get<bool>();
    const std::string rule = d.value("human", std::string(openable ? "routine" : "stuck"));
    const std::string rule_out = d.value("human_out", rule);
    const double hazard = probability_field(d, "hazard", 0.0, "door");
    doors[s] = Door{bid, color, openable, static_cast<int>(doors.size()), hazard, rule, rule_out};
  }
  const json cross_list = config.value("crosswalks", json::array());
  for (const auto& x : cross_list) {
    const auto rc = parse_cell(require(x, "at"), "crosswalk");
    if (!in_map(rc) || at(rc.first, rc.second) != 'X')
      fail("campus: crosswalk entry not on an 'X' cell");
    const StateId s = cell_state.at(rc);
    if (crosswalks.count(s)) fail("campus: duplicate crosswalk entry");
    crosswalks[s] = Crosswalk{
        index_of(kTrafficNames, 3, require(x, "traffic").get<std::string>(), "traffic"),
        index_of(kVisibilityNames, 2, require(x, "visibility").get<std::string>(), "visibility")};
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const char ch = at(cells[i].first, cells[i].second);
    const auto s = static_cast<StateId>(i);
    if (ch == 'D' && !doors.count(s)) fail("campus: door cell without attributes");
    if (ch == 'X' && !crosswalks.count(s)) fail("campus: crosswalk cell without attributes");
  }

  const json hazard = config.value("hazard", json::object());
  double hazard_rate[3];
  for (int t = 0; t < 3; ++t)
    hazard_rate[t] = probability_field(hazard, kTrafficNames[t], t == 2 ? 0.05 : 0.0, "hazard");

  const json costs = config.value("costs", json::object());
  const double move_cost = get_or<double>(costs, "move", 1.0);
  const double penalty = get_or<double>(costs, "incident_penalty", 200.0);
  if (!(move_cost > 0.0) || !(penalty > 0.0)) fail("campus: costs must be positive");

  const json human = config.value("human", json::object());
  const HumanRule free_rule = parse_rule(human.value("free", json::object()), "human.free");
  const json door_rules = human.value("door", json::object());
  std::map<std::string, HumanRule> door_rule;
  for (const auto& [s, d] : doors)
    for (const std::string& name : {d.rule, d.rule_out}) {
      if (door_rule.count(name)) continue;
      if (!door_rules.contains(name)) fail("campus: no human rule '" + name + "' for doors");
      door_rule[name] = parse_rule(door_rules.at(name), "human.door." + name);
    }
  const json cross_rules = human.value("crosswalk", json::object());
  HumanRule cross_rule[3][2];
  for (int t = 0; t < 3; ++t)
    for (int v = 0; v < 2; ++v) {
      const std::string key = std::string(kTrafficNames[t]) + "/" + kVisibilityNames[v];
      cross_rule[t][v] = parse_rule(cross_rules.value(key, json::object()), "human.crosswalk." + key);
    }

  const json k0 = config.value("kappa0", json::object());
  const LevelMask free_mask =
      k0.contains("free") ? parse_mask(k0.at("free"), "kappa0.free") : LevelMask::all();
  const LevelMask obstacle_mask = k0.contains("obstacle")
                                      ? parse_mask(k0.at("obstacle"), "kappa0.obstacle")
                                      : LevelMask{Level::kNone, Level::kVerified};

  const auto pairs = static_cast<std::size_t>(b.num_states) * 4U;
  b.rows.resize(pairs);
  b.tau_rows.resize(pairs);
  b.costs.assign(pairs, move_cost);
  b.kappa0.assign(pairs, free_mask);
  b.kappa_h.assign(pairs, LevelMask::all());
  b.roles.assign(static_cast<std::size_t>(b.num_states), StateRole::kFree);
  std::vector<FeatureKey> agent_keys(pairs), hidden_keys(pairs);

  // Agent buckets: 0 free, 1 incident, 2 + traffic, 5 + 3 * building + color.
  // Hidden buckets: 0 free, 1 incident, 2 + 2 * traffic + visibility, 8 + door index.
  constexpr int kFreeBucket = 0, kIncidentBucket = 1;
  auto agent_cross = [](int t) { return 2 + t; };
  auto agent_door = [](const Door& d) { return 5 + 3 * d.building + d.color; };
  auto hidden_cross = [](int t, int v) { return 2 + 2 * t + v; };
  auto hidden_door = [](const Door& d) { return 8 + d.index; };

  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto s = static_cast<StateId>(i);
    const auto [r, c] = cells[i];
    const char ch = at(r, c);
    std::ostringstream name;
    name << ch << "(" << r << "," << c << ")";
    b.state_names.push_back(name.str());
    if (ch == 'R') b.task_cells.push_back(s);
    const bool is_door = doors.count(s) > 0;
    const bool is_cross = crosswalks.count(s) > 0;
    if (is_door || is_cross) b.roles[i] = StateRole::kObstacle;

    for (int a = 0; a < 4; ++a) {
      const auto idx = b.pair_index(s, a);
      const int nr = r + kDr[a], nc = c + kDc[a];
      const bool open = passable(at(nr, nc));
      const StateId target = open ? cell_state.at({nr, nc}) : s;
      b.tau_rows[idx] = {{target, 1.0}};
      if (is_door) {
        const Door& d = doors.at(s);
        // A door that cannot be opened only blocks the way in (pull side).
        const bool inward = open && at(nr, nc) == 'R';
        if (d.openable && inward) {
          TransitionRow row;
          add_outcome(row, target, 1.0 - d.hazard);
          add_outcome(row, incident, d.hazard);
          b.rows[idx] = row;
        } else {
          b.rows[idx] = {{inward ? s : target, 1.0}};
        }
        b.kappa0[idx] = obstacle_mask;
        const HumanRule& rule = door_rule.at(inward ? d.rule : d.rule_out);
        b.kappa_h[idx] = rule.allowed | obstacle_mask;
        agent_keys[idx] = {agent_door(d), inward ? 1 : 0};
        hidden_keys[idx] = {hidden_door(d), inward ? 1 : 0};
      } else if (is_cross) {
        const Crosswalk& x = crosswalks.at(s);
        const double h = open ? hazard_rate[x.traffic] : 0.0;
        TransitionRow row;
        add_outcome(row, target, 1.0 - h);
        add_outcome(row, incident, h);
        b.rows[idx] = row;
        b.kappa0[idx] = obstacle_mask;
        b.kappa_h[idx] = cross_rule[x.traffic][x.visibility].allowed | obstacle_mask;
        agent_keys[idx] = {agent_cross(x.traffic), 0};
        hidden_keys[idx] = {hidden_cross(x.traffic, x.visibility), 0};
      } else {
        b.rows[idx] = {{target, 1.0}};
        b.kappa_h[idx] = free_rule.allowed | free_mask;
        agent_keys[idx] = {kFreeBucket, 0};
        hidden_keys[idx] = {kFreeBucket, 0};
      }
    }
  }
  b.state_names.push_back("incident");
  b.roles[static_cast<std::size_t>(incident)] = StateRole::kTerminal;
  for (int a = 0; a < 4; ++a) {
    const auto idx = b.pair_index(incident, a);
    b.rows[idx] = {{kTaskGoal, 1.0}};
    b.tau_rows[idx] = {{kTaskGoal, 1.0}};
    b.costs[idx] = penalty;
    b.kappa0[idx] = LevelMask::all();
    agent_keys[idx] = {kIncidentBucket, 0};
    hidden_keys[idx] = {kIncidentBucket, 0};
  }

  set_rule_lambda(b.true_lambda, {kFreeBucket, 0}, free_rule);
  set_rule_lambda(b.true_lambda, {kIncidentBucket, 0}, HumanRule{});
  for (int t = 0; t < 3; ++t)
    for (int v = 0; v < 2; ++v) set_rule_lambda(b.true_lambda, {hidden_cross(t, v), 0}, cross_rule[t][v]);
  for (const auto& [s, d] : doors) {
    set_rule_lambda(b.true_lambda, {hidden_door(d), 0}, door_rule.at(d.rule_out));
    set_rule_lambda(b.true_lambda, {hidden_door(d), 1}, door_rule.at(d.rule));
  }

  b.projection = std::make_shared<const FeatureProjection>(b.num_states, 4, std::move(agent_keys));
  b.hidden_projection =
      std::make_shared<const FeatureProjection>(b.num_states, 4, std::move(hidden_keys));

  auto task_cell = [&](const char* key) {
    const auto rc = parse_cell(require(config, key), key);
    if (!in_map(rc) || !passable(at(rc.first, rc.second)))
      fail(std::string("campus: '") + key + "' is not a passable cell");
    return cell_state.at(rc);
  };
  b.default_task = {task_cell("start"), task_cell("goal")};
  if (b.default_task.start == b.default_task.goal) fail("campus: start equals goal");
  if (b.task_cells.size() < 2) fail("campus: random tasks need at least two room cells");
  b.validate(b.default_task);
  return b;
}

// ---------------------------------------------------------------- AV

namespace {

enum AvPosition { kApproach, kBehind, kEdging, kOncoming };
enum AvAction { kWait, kGo, kBack };
enum Oncoming { kNoVehicle, kFar, kNear, kWaiting };
const char* const kPositionNames[4] = {"approach", "behind", "edging", "oncoming"};
const char* const kObstacleNames[2] = {"stopped", "moving"};
const char* const kOncomingNames[4] = {"none", "far", "near", "waiting"};
const char* const kRearNames[2] = {"empty", "filled"};
const char* const kAvActionNames[3] = {"wait", "go", "back"};

struct AvState {
  int location = 0;
  int position = kApproach;
  int obstacle = 0;  // behind and later
  int oncoming = 0;  // edging and later
  int rear = 0;      // edging and later
};

std::array<double, 4> parse_distribution4(const json& j, const std::array<double, 4>& fallback,
                                          const std::string& where) {
  if (j.is_null()) return fallback;
  std::array<double, 4> out{};
  double total = 0.0;
  for (int i = 0; i < 4; ++i) {
    out[static_cast<std::size_t>(i)] = probability_field(j, kOncomingNames[i], 0.0, where);
    total += out[static_cast<std::size_t>(i)];
  }
  if (std::abs(total - 1.0) > 1e-9) fail(where + ": probabilities must sum to one");
  return out;
}

bool rule_matches(const json& rule, const char* field, const char* value) {
  if (!rule.contains(field)) return true;
  const auto& v = rule.at(field);
  if (v.is_string()) return v.get<std::string>() == "*" || v.get<std::string>() == value;
  if (v.is_array()) {
    for (const auto& x : v)
      if (x.is_string() && x.get<std::string>() == value) return true;
    return false;
  }
  fail(std::string("human.rules: field '") + field + "' must be a string or list");
}

}  // namespace

json default_av_config() {
  return json::parse(R"json(
{
  "domain": "av",
  "locations": 2,
  "moving_probability": 0.5,
  "moving_clears": 0.2,
  "moving_pass": 0.6,
  "rear_fill": 0.2,
  "crash": {"near": 0.9, "far": 0.3},
  "reveal": {"none": 0.5, "far": 0.2, "near": 0.1, "waiting": 0.2},
  "oncoming": {
    "none": {"none": 0.85, "far": 0.15},
    "far": {"far": 0.2, "near": 0.5, "waiting": 0.3},
    "near": {"none": 0.6, "waiting": 0.4},
    "waiting": {"none": 0.2, "waiting": 0.8}
  },
  "costs": {
    "move": 1.0,
    "crash_penalty": 300.0,
    "rho": [5.0, 2.0, 1.0, 0.0],
    "mu_op": [0.0, 0.0, 0.0, 0.0],
    "mu_switch": 0.1,
    "weights": {"domain": 1.0, "autonomy": 1.0, "human": 1.0}
  },
  "kappa0": {"approach": [0, 1, 2, 3], "behind": [0, 1], "edging": [0, 1], "oncoming": [0, 2]},
  "human": {
    "epsilon": 0.01,
    "rules": [
      {"position": "edging", "action": "go", "oncoming": "near", "approve": 0.0, "override": 1.0, "allowed": [0, 1, 2]},
      {"position": "edging", "action": "go", "oncoming": "far", "approve": 0.0, "override": 1.0, "allowed": [0, 1, 2]},
      {"position": "oncoming", "oncoming": "near", "approve": 0.0, "override": 0.8, "allowed": [0, 2]},
      {"position": "oncoming", "action": "back", "rear": "filled", "approve": 0.0, "override": 1.0, "allowed": [0, 2]},
      {"position": "oncoming", "action": "wait", "approve": 0.0, "override": 0.3, "allowed": [0, 2, 3]},
      {"position": "oncoming", "approve": 0.0, "override": 0.0, "allowed": [0, 2, 3]},
      {"approve": 1.0, "override": 0.0, "allowed": [0, 1, 2, 3]}
    ]
  },
  "agent_features": [],
  "start_level": 0,
  "exploration": {"temperature": 1.0, "explore_probability": 0.6, "embargo_episodes": 10, "gate_cost": 1.0}
}
)json");
}

DomainBundle build_av(const json& config) {
  if (!config.is_object()) fail("av config must be a JSON object");
  DomainBundle b;
  b.name = "av";
  parse_common(config, b);

  const int locations = get_or<int>(config, "locations", 2);
  if (locations < 1) fail("av: at least one location is required");
  const double p_moving = probability_field(config, "moving_probability", 0.5, "av");
  const double clears = probability_field(config, "moving_clears", 0.2, "av");
  const double moving_pass = probability_field(config, "moving_pass", 0.6, "av");
  const double rear_fill = probability_field(config, "rear_fill", 0.2, "av");
  if (moving_pass <= 0.0) fail("av: moving_pass must be positive");
  const json crash = config.value("crash", json::object());
  const double crash_near = probability_field(crash, "near", 0.9, "av.crash");
  const double crash_far = probability_field(crash, "far", 0.3, "av.crash");
  const auto reveal = parse_distribution4(config.value("reveal", json()), {0.5, 0.2, 0.1, 0.2}, "av.reveal");
  const json onc = config.value("oncoming", json::object());
  const std::array<std::array<double, 4>, 4> fallback_evolution{{
      {0.85, 0.15, 0.0, 0.0}, {0.0, 0.2, 0.5, 0.3}, {0.6, 0.0, 0.0, 0.4}, {0.2, 0.0, 0.0, 0.8}}};
  std::array<std::array<double, 4>, 4> evolution{};
  for (int o = 0; o < 4; ++o)
    evolution[static_cast<std::size_t>(o)] =
        parse_distribution4(onc.value(kOncomingNames[o], json()),
                            fallback_evolution[static_cast<std::size_t>(o)],
                            std::string("av.oncoming.") + kOncomingNames[o]);

  const json costs = config.value("costs", json::object());
  const double move_cost = get_or<double>(costs, "move", 1.0);
  const double crash_penalty = get_or<double>(costs, "crash_penalty", 300.0);
  if (!(move_cost > 0.0) || !(crash_penalty > 0.0)) fail("av: costs must be positive");

  const json k0 = config.value("kappa0", json::object());
  LevelMask kappa_by_position[4] = {
      LevelMask::all(), {Level::kNone, Level::kVerified}, {Level::kNone, Level::kVerified},
      {Level::kNone, Level::kSupervised}};
  for (int p = 0; p < 4; ++p)
    if (k0.contains(kPositionNames[p]))
      kappa_by_position[p] = parse_mask(k0.at(kPositionNames[p]), std::string("kappa0.") + kPositionNames[p]);

  // Enumerate states: per location approach, behind x obstacle, edging and
  // oncoming x obstacle x oncoming x rear; then passed (goal), crash, safe stop.
  std::vector<AvState> states;
  std::map<std::tuple<int, int, int, int, int>, StateId> lookup;
  auto add = [&](AvState st) {
    lookup[{st.location, st.position, st.obstacle, st.oncoming, st.rear}] =
        static_cast<StateId>(states.size());
    states.push_back(st);
  };
  for (int loc = 0; loc < locations; ++loc) {
    add({loc, kApproach, 0, 0, 0});
    for (int k = 0; k < 2; ++k) add({loc, kBehind, k, 0, 0});
    for (int pos : {kEdging, kOncoming})
      for (int k = 0; k < 2; ++k)
        for (int o = 0; o < 4; ++o)
          for (int r = 0; r < 2; ++r) add({loc, pos, k, o, r});
  }
  const StateId passed = static_cast<StateId>(states.size());
  const StateId crashed = passed + 1;
  const StateId safe_stop = passed + 2;
  b.num_states = passed + 3;
  b.num_actions = 3;
  for (const char* a : kAvActionNames) b.action_names.emplace_back(a);
  auto id = [&](int loc, int pos, int k, int o, int r) { return lookup.at({loc, pos, k, o, r}); };

  const json human = config.value("human", json::object());
  const json rules = human.value("rules", json::array());
  if (!rules.is_array()) fail("human.rules must be a list");

  const auto pairs = static_cast<std::size_t>(b.num_states) * 3U;
  b.rows.resize(pairs);
  b.tau_rows.resize(pairs);
  b.costs.assign(pairs, move_cost);
  b.kappa0.assign(pairs, LevelMask::all());
  b.kappa_h.assign(pairs, LevelMask::all());
  b.roles.assign(static_cast<std::size_t>(b.num_states), StateRole::kTerminal);
  std::vector<FeatureKey> keys(pairs), agent_keys(pairs);
  std::map<std::tuple<int, int, int, int>, int> bucket_ids;  // location excluded
  std::map<std::tuple<int, int, int, int>, int> agent_ids;
  bool sees_obstacle = false, sees_rear = false;
  for (const auto& f : config.value("agent_features", json::array())) {
    const auto name = f.get<std::string>();
    if (name == "obstacle") sees_obstacle = true;
    else if (name == "rear") sees_rear = true;
    else fail("av: unknown agent feature '" + name + "'");
  }
  std::map<FeatureKey, HumanRule> rule_of_key;

  for (std::size_t i = 0; i < states.size(); ++i) {
    const AvState& st = states[i];
    const auto s = static_cast<StateId>(i);
    std::ostringstream name;
    name << "loc" << st.location << ":" << kPositionNames[st.position];
    if (st.position != kApproach) name << ":" << kObstacleNames[st.obstacle];
    if (st.position >= kEdging) name << ":" << kOncomingNames[st.oncoming] << ":rear-" << kRearNames[st.rear];
    b.state_names.push_back(name.str());
    b.roles[i] = st.position == kApproach ? StateRole::kFree
                 : st.position == kOncoming ? StateRole::kLane
                                            : StateRole::kObstacle;
    if (st.location == 0 && st.position == kApproach) b.default_task.start = s;

    const int bucket = bucket_ids
                           .emplace(std::make_tuple(st.position, st.obstacle, st.oncoming, st.rear),
                                    static_cast<int>(bucket_ids.size()))
                           .first->second;

    // Successor distribution for the side lane after one step.
    auto evolve = [&](TransitionRow& row, double mass, int pos, int k, int rear_now) {
      const auto& ev = evolution[static_cast<std::size_t>(st.oncoming)];
      for (int o2 = 0; o2 < 4; ++o2) {
        const double po = ev[static_cast<std::size_t>(o2)];
        if (po <= 0.0) continue;
        if (rear_now == 1) {
          add_outcome(row, id(st.location, pos, k, o2, 1), mass * po);
        } else {
          add_outcome(row, id(st.location, pos, k, o2, 0), mass * po * (1.0 - rear_fill));
          add_outcome(row, id(st.location, pos, k, o2, 1), mass * po * rear_fill);
        }
      }
    };

    for (int a = 0; a < 3; ++a) {
      const auto idx = b.pair_index(s, a);
      TransitionRow row, tau;
      switch (st.position) {
        case kApproach:
          add_outcome(row, id(st.location, kBehind, 0, 0, 0), 1.0 - p_moving);
          add_outcome(row, id(st.location, kBehind, 1, 0, 0), p_moving);
          tau = row;
          break;
        case kBehind:
          if (a == kGo) {
            for (int o = 0; o < 4; ++o)
              add_outcome(row, id(st.location, kEdging, st.obstacle, o, 0),
                          reveal[static_cast<std::size_t>(o)]);
          } else if (st.obstacle == 1) {
            add_outcome(row, passed, clears);
            add_outcome(row, s, 1.0 - clears);
          } else {
            add_outcome(row, s, 1.0);
          }
          tau = row;
          break;
        case kEdging: {
          const double risk = a == kGo ? (st.oncoming == kNear ? crash_near
                                          : st.oncoming == kFar ? crash_far
                                                                : 0.0)
                                       : 0.0;
          add_outcome(row, crashed, risk);
          if (a == kGo) evolve(row, 1.0 - risk, kOncoming, st.obstacle, st.rear);
          else if (a == kBack && st.rear == 0) add_outcome(row, id(st.location, kBehind, st.obstacle, 0, 0), 1.0);
          else evolve(row, 1.0, kEdging, st.obstacle, st.rear);
          // The human never proceeds into danger: they hold position instead.
          if (risk > 0.0) evolve(tau, 1.0, kEdging, st.obstacle, st.rear);
          else tau = row;
          break;
        }
        case kOncoming: {
          const double risk = st.oncoming == kNear ? crash_near : 0.0;
          add_outcome(row, crashed, risk);
          const double rest = 1.0 - risk;
          if (a == kGo) {
            const double pass = st.obstacle == 0 ? 1.0 : moving_pass;
            add_outcome(row, passed, rest * pass);
            if (pass < 1.0) evolve(row, rest * (1.0 - pass), kOncoming, st.obstacle, st.rear);
          } else if (a == kBack && st.rear == 0) {
            evolve(row, rest, kEdging, st.obstacle, st.rear);
          } else {
            evolve(row, rest, kOncoming, st.obstacle, st.rear);
          }
          // With a vehicle close the human pulls over; otherwise they carry
          // out the intended manoeuvre.
          if (st.oncoming == kNear) {
            tau = {{safe_stop, 1.0}};
          } else if (a == kGo) {
            tau = {{passed, 1.0}};
          } else {
            tau = row;
          }
          break;
        }
        default:
          break;
      }
      b.rows[idx] = row;
      b.tau_rows[idx] = tau;
      b.kappa0[idx] = kappa_by_position[st.position];

      const FeatureKey key{bucket, a};
      keys[idx] = key;
      // The rear slot only matters to the agent when reversing.
      const auto agent_tuple = std::make_tuple(st.position, sees_obstacle ? st.obstacle : 0,
                                               st.oncoming, (sees_rear || a == kBack) ? st.rear : 0);
      agent_keys[idx] = {agent_ids.emplace(agent_tuple, static_cast<int>(agent_ids.size())).first->second, a};
      HumanRule matched;
      bool found = false;
      for (const auto& rule : rules) {
        if (rule_matches(rule, "position", kPositionNames[st.position]) &&
            rule_matches(rule, "action", kAvActionNames[a]) &&
            (st.position == kApproach || rule_matches(rule, "obstacle", kObstacleNames[st.obstacle])) &&
            (st.position < kEdging || (rule_matches(rule, "oncoming", kOncomingNames[st.oncoming]) &&
                                       rule_matches(rule, "rear", kRearNames[st.rear]))) &&
            (st.position >= kEdging || (!rule.contains("oncoming") && !rule.contains("rear")))) {
          matched = parse_rule(rule, "human.rules");
          found = true;
          break;
        }
      }
      if (!found) matched = HumanRule{};
      b.kappa_h[idx] = matched.allowed | b.kappa0[idx];
      rule_of_key[key] = matched;
    }
  }

  b.state_names.push_back("passed");
  b.state_names.push_back("crash");
  b.state_names.push_back("safe-stop");
  const int terminal_bucket = static_cast<int>(bucket_ids.size());
  for (StateId s : {passed, crashed, safe_stop}) {
    for (int a = 0; a < 3; ++a) {
      const auto idx = b.pair_index(s, a);
      const StateId next = s == passed ? passed : kTaskGoal;
      b.rows[idx] = {{next, 1.0}};
      b.tau_rows[idx] = {{next, 1.0}};
      if (s == crashed) b.costs[idx] = crash_penalty;
      keys[idx] = {terminal_bucket + (s == crashed ? 1 : 0), a};
      agent_keys[idx] = {static_cast<int>(agent_ids.size()) + (s == crashed ? 1 : 0), a};
      rule_of_key[keys[idx]] = HumanRule{};
    }
  }
  for (const auto& [key, rule] : rule_of_key) set_rule_lambda(b.true_lambda, key, rule);
  b.projection = std::make_shared<const FeatureProjection>(b.num_states, 3, std::move(agent_keys));
  b.hidden_projection = std::make_shared<const FeatureProjection>(b.num_states, 3, std::move(keys));
  b.default_task.goal = passed;
  b.task_cells = {b.default_task.start};
  b.validate(b.default_task);
  return b;
}

DomainBundle build_domain(const json& config) {
  if (!config.is_object() || !config.contains("domain") || !config.at("domain").is_string())
    fail("config needs a string 'domain' field");
  const auto domain = config.at("domain").get<std::string>();
  try {
    if (domain == "campus") return build_campus(config);
    if (domain == "av") return build_av(config);
  } catch (const json::exception& e) {
    fail(domain + " config: " + e.what());
  }
  fail("unknown domain '" + domain + "'");
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail("cannot parse " + path + ": " + e.what());
  }
}

}  // namespace cas
