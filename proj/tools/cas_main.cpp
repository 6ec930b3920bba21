// cas: run competence-aware planning experiments and inspect domain configs.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include "cas/domains.hpp"
#include "cas/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

cas::DomainBundle load_bundle(const std::string& domain, const std::string& path) {
  nlohmann::json config;
  if (path.empty()) {
    if (domain == "campus") config = cas::default_campus_config();
    else if (domain == "av") config = cas::default_av_config();
    else throw cas::ConfigError("unknown domain '" + domain + "'");
  } else {
    config = cas::load_config(path);
    if (!domain.empty() && config.value("domain", std::string()) != domain)
      throw cas::ConfigError("config " + path + " does not describe domain '" + domain + "'");
  }
  return cas::build_domain(config);
}

int run(const std::string& domain, const std::string& config_path, const std::string& task,
        int episodes, int trials, std::uint64_t seed, const std::string& out_dir,
        const std::string& prior, bool timing, bool jacobi) {
  cas::DomainBundle bundle;
  cas::ExperimentConfig cfg;
  try {
    bundle = load_bundle(domain, config_path);
    cfg.task_mode = task == "random" ? cas::TaskMode::kRandom : cas::TaskMode::kSingle;
    cfg.episodes = episodes;
    cfg.trials = trials;
    cfg.seed = seed;
    cfg.timing = timing;
    cfg.exploration = bundle.exploration;
    cfg.sweep = jacobi ? cas::SweepMode::kJacobi : cas::SweepMode::kGaussSeidel;
    static const std::map<std::string, cas::PriorKind> priors{
        {"uniform", cas::PriorKind::kUniform},
        {"optimistic", cas::PriorKind::kOptimistic},
        {"pessimistic", cas::PriorKind::kPessimistic}};
    cfg.prior = priors.at(prior);
    cfg.validate();
    if (cfg.task_mode == cas::TaskMode::kRandom && bundle.task_cells.size() < 2)
      throw cas::ConfigError(bundle.name + " does not support random tasks");
  } catch (const cas::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  try {
    const auto results = cas::run_experiment(bundle, cfg);
    cas::write_outputs(results, out_dir);
    const auto& last = results.front().records.back();
    double lo = 0.0, fb = 0.0;
    int n = 0;
    for (const auto& r : results) {
      const auto& rec = r.records.back();
      if (rec.lo_all) {
        lo += *rec.lo_all;
        ++n;
      }
      fb += static_cast<double>(rec.cum_feedback);
    }
    std::printf("%s/%s: %d trials x %d episodes -> %s (final all-states level-optimality %.3f, "
                "feedback %.1f)\n",
                bundle.name.c_str(), task.c_str(), trials, last.episode + 1, out_dir.c_str(),
                n ? lo / n : 0.0, fb / static_cast<double>(results.size()));
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}

int validate(const std::string& path) {
  try {
    const auto bundle = cas::build_domain(cas::load_config(path));
    std::printf("%s: %d states, %d actions, start %s, goal %s\n", bundle.name.c_str(),
                bundle.num_states, bundle.num_actions,
                bundle.state_names[static_cast<std::size_t>(bundle.default_task.start)].c_str(),
                bundle.state_names[static_cast<std::size_t>(bundle.default_task.goal)].c_str());
  } catch (const cas::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}

int dump_competence(const std::string& path) {
  cas::DomainBundle bundle;
  try {
    bundle = cas::build_domain(cas::load_config(path));
  } catch (const cas::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  try {
    cas::ExperimentConfig cfg;
    cfg.trials = 1;
    cfg.episodes = 1;
    cas::Trial trial(bundle, cfg, 0);
    const auto& chi = trial.competence_for(bundle.default_task);
    const auto& index = chi.index();
    std::printf("state,from_level,action,competence\n");
    for (cas::StateId fs = 0; fs < index.num_states(); ++fs) {
      if (fs == index.goal()) continue;
      const auto st = index.unflatten(fs);
      for (cas::ActionId a = 0; a < bundle.num_actions; ++a)
        std::printf("\"%s\",%s,%s,%s\n", bundle.state_names[static_cast<std::size_t>(st.state)].c_str(),
                    std::string(cas::to_string(st.level)).c_str(),
                    bundle.action_names[static_cast<std::size_t>(a)].c_str(),
                    std::string(cas::to_string(chi(fs, a))).c_str());
    }
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Competence-aware planning experiments"};
  app.require_subcommand(1);

  std::string domain, config_path, task = "single", out_dir = "out", prior = "uniform";
  int episodes = 500, trials = 10;
  std::uint64_t seed = 1;
  bool timing = false, jacobi = false;
  auto* run_cmd = app.add_subcommand("run", "Run an episodic learning experiment");
  run_cmd->add_option("--domain", domain, "Domain name")
      ->required()
      ->check(CLI::IsMember({"campus", "av"}));
  run_cmd->add_option("--task", task, "Task mode")->check(CLI::IsMember({"single", "random"}));
  run_cmd->add_option("--episodes", episodes, "Episodes per trial")->check(CLI::PositiveNumber);
  run_cmd->add_option("--trials", trials, "Independent trials")->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", seed, "Master seed");
  run_cmd->add_option("--config", config_path, "Domain config (JSON); built-in default if omitted");
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_option("--prior", prior, "Initial feedback belief")
      ->check(CLI::IsMember({"uniform", "optimistic", "pessimistic"}));
  run_cmd->add_flag("--timing", timing, "Record wall-clock time per episode");
  run_cmd->add_flag("--jacobi", jacobi, "Use parallel Jacobi sweeps in the solver");

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a domain config");
  validate_cmd->add_option("--config", validate_path, "Domain config (JSON)")->required();

  std::string competence_path;
  auto* competence_cmd = app.add_subcommand("competence", "Print the competence table as CSV");
  competence_cmd->add_option("--config", competence_path, "Domain config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*run_cmd)
    return run(domain, config_path, task, episodes, trials, seed, out_dir, prior, timing, jacobi);
  if (*validate_cmd) return validate(validate_path);
  if (*competence_cmd) return dump_competence(competence_path);
  return kConfigError;
}
