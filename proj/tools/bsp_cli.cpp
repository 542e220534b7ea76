#include "bsp/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

struct Common {
  std::string scenario;
  std::string map;
  std::string out = "out";
  std::string mode;
  std::string visibility;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--scenario", c.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--map", c.map, "Map file overriding the scenario's map")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--mode", c.mode, "Solver mode")->check(CLI::IsMember({"constrained", "unconstrained"}));
  cmd->add_option("--visibility", c.visibility, "Visibility model")->check(CLI::IsMember({"smooth", "hard"}));
}

bsp::ScenarioConfig load(const Common& c) {
  std::optional<bsp::FeatureMap> map;
  if (!c.map.empty()) map = bsp::load_map(c.map);
  bsp::ScenarioConfig cfg = bsp::load_scenario(c.scenario, map);
  if (!c.map.empty()) cfg.map_path = c.map;
  if (!c.mode.empty()) cfg.constrained = bsp::parse_constrained(c.mode);
  if (!c.visibility.empty()) cfg.visibility = bsp::parse_visibility(c.visibility);
  return cfg;
}

void print_report(const char* label, const bsp::SolveReport& r) {
  std::cout << label << "cost " << r.final_cost << ", outer " << r.outer_iterations << ", inner " << r.inner_iterations
            << (r.converged ? ", converged" : ", not converged") << (r.feasible ? ", feasible" : ", infeasible");
  if (r.max_violation_per_constraint.size() > 0) std::cout << ", max violation " << r.max_violation_per_constraint.maxCoeff();
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Belief-space trajectory optimization with visibility-aware stereo sensing"};
  app.require_subcommand(1);
  std::cout.precision(12);

  Common c;
  std::string policy_path;
  std::uint64_t seed = 1;
  int runs = 500;
  std::string detection = "bernoulli";
  bool no_noise = false;

  auto* plan = app.add_subcommand("plan", "Solve a scenario and write policy, report and plan table");
  add_common(plan, c);

  auto exec_opts = [&](CLI::App* cmd) {
    add_common(cmd, c);
    cmd->add_option("--policy", policy_path, "Policy file written by plan")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Random seed");
    cmd->add_option("--detection", detection, "Feature detection at execution")->check(CLI::IsMember({"bernoulli", "expected"}));
    cmd->add_flag("--no-noise", no_noise, "Disable process, pixel and initial-state noise");
  };
  auto* execute = app.add_subcommand("execute", "Run a policy once in closed loop");
  exec_opts(execute);
  auto* mc = app.add_subcommand("montecarlo", "Run a seeded batch of closed-loop executions");
  exec_opts(mc);
  mc->add_option("--runs", runs, "Number of executions");

  auto* abl = app.add_subcommand("ablation", "Solve with smooth and hard visibility and compare costs");
  add_common(abl, c);
  auto* sweep = app.add_subcommand("sweep", "Solve the loose, medium and tight constraint regimes");
  add_common(sweep, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : bsp::kExitError;
  }

  try {
    const bsp::ScenarioConfig cfg = load(c);
    bsp::ExecutionOptions opt;
    opt.sample_noise = !no_noise;
    opt.detection = detection == "expected" ? bsp::DetectionModel::expected : bsp::DetectionModel::bernoulli;

    if (*plan) {
      const bsp::PlanOutput p = bsp::run_plan(cfg, c.out);
      print_report("", p.result.report);
      return bsp::exit_code(p.result.report);
    }
    if (*execute) {
      const bsp::ExecutionTrace t = bsp::run_execute(cfg, bsp::load_policy(policy_path), seed, c.out, opt);
      std::cout << "seed " << t.seed << ", steps " << t.applied_controls.size() << (t.diverged ? ", diverged" : "") << "\n";
      return t.diverged ? bsp::kExitError : bsp::kExitFeasible;
    }
    if (*mc) {
      if (runs < 1) {
        std::cerr << "error: --runs must be at least 1\n";
        return bsp::kExitError;
      }
      const bsp::MonteCarloSummary s = bsp::run_monte_carlo(cfg, bsp::load_policy(policy_path), runs, seed, c.out, opt);
      std::cout << bsp::summary_to_json(s).dump(2) << "\n";
      return bsp::kExitFeasible;
    }
    if (*abl) {
      const bsp::AblationResult a = bsp::run_ablation(cfg, c.out);
      print_report("smooth: ", a.smooth.result.report);
      print_report("hard:   ", a.hard.result.report);
      std::cout << "evaluated under smooth model: smooth " << a.smooth_under_smooth << ", hard " << a.hard_under_smooth << "\n"
                << "evaluated under hard model:   smooth " << a.smooth_under_hard << ", hard " << a.hard_under_hard << "\n";
      return bsp::kExitFeasible;
    }
    if (*sweep) {
      const auto outs = bsp::run_sweep(cfg, c.out);
      bool all = true;
      for (std::size_t i = 0; i < outs.size(); ++i) {
        print_report((std::string(bsp::kRegimes[i].name) + ": ").c_str(), outs[i].result.report);
        all = all && bsp::exit_code(outs[i].result.report) == bsp::kExitFeasible;
      }
      return all ? bsp::kExitFeasible : bsp::kExitInfeasible;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bsp::kExitError;
  }
  return bsp::kExitError;
}
