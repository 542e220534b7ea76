#pragma once

#include "bsp/io.hpp"

#include <array>
#include <filesystem>
#include <string>

namespace bsp {

inline constexpr int kExitFeasible = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitInfeasible = 2;

inline int exit_code(const SolveReport& r) { return r.feasible && r.converged ? kExitFeasible : kExitInfeasible; }

struct PlanOutput {
  SolverProblem problem;
  SolveResult result;
};

inline PlanOutput plan(const ScenarioConfig& config) {
  PlanOutput out{to_problem(config), {}};
  out.result = solve(out.problem, config.schedule, config.inner);
  return out;
}

/// Solves and writes policy.json, report.json and plan.csv into out_dir.
inline PlanOutput run_plan(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  PlanOutput p = plan(config);
  write_json(out_dir / "policy.json", policy_to_json(p.result.policy));
  write_json(out_dir / "report.json", report_to_json(p.result, p.problem));
  write_plan_table(out_dir / "plan.csv", p.result.policy, p.problem.constraints);
  return p;
}

inline ExecutionTrace run_execute(const ScenarioConfig& config, const Policy& policy, std::uint64_t seed,
                                  const std::filesystem::path& out_dir, const ExecutionOptions& opt = {}) {
  const SolverProblem problem = to_problem(config);
  check_policy_matches(policy, problem);
  ExecutionTrace t = execute_once(problem, policy, seed, opt);
  std::filesystem::create_directories(out_dir);
  write_json(out_dir / "trace.json", trace_to_json(t));
  write_trace_table(out_dir / "trace.csv", t);
  return t;
}

inline MonteCarloSummary run_monte_carlo(const ScenarioConfig& config, const Policy& policy, int runs, std::uint64_t seed,
                                         const std::filesystem::path& out_dir, const ExecutionOptions& opt = {}) {
  if (runs < 1) throw Error("--runs must be at least 1");
  const SolverProblem problem = to_problem(config);
  check_policy_matches(policy, problem);
  const MonteCarloSummary s = monte_carlo(problem, policy, runs, seed, config_constraints(config), opt);
  std::filesystem::create_directories(out_dir);
  write_json(out_dir / "summary.json", summary_to_json(s));
  write_trace_table(out_dir / "first_run.csv", execute_once(problem, policy, seed, opt));
  return s;
}

/// Paired smooth and hard visibility solves from the same initial trajectory. Each plan's controls
/// are also rolled out open loop under both belief models so the costs share a common yardstick.
struct AblationResult {
  PlanOutput smooth;
  PlanOutput hard;
  double smooth_under_smooth = 0.0;
  double hard_under_smooth = 0.0;
  double smooth_under_hard = 0.0;
  double hard_under_hard = 0.0;

  bool smooth_not_worse() const { return smooth_under_smooth <= hard_under_smooth && smooth_under_hard <= hard_under_hard; }
};

inline AblationResult ablation(const ScenarioConfig& config) {
  ScenarioConfig s = config;
  s.visibility = VisibilityMode::smooth;
  ScenarioConfig h = config;
  h.visibility = VisibilityMode::hard;
  AblationResult a{plan(s), plan(h)};
  if (trajectory_hash(a.smooth.problem.initial_controls) != trajectory_hash(a.hard.problem.initial_controls))
    throw Error("ablation: initial trajectories differ");
  a.smooth_under_smooth = evaluate_controls(a.smooth.problem, a.smooth.result.policy.nominal_controls);
  a.hard_under_smooth = evaluate_controls(a.smooth.problem, a.hard.result.policy.nominal_controls);
  a.smooth_under_hard = evaluate_controls(a.hard.problem, a.smooth.result.policy.nominal_controls);
  a.hard_under_hard = evaluate_controls(a.hard.problem, a.hard.result.policy.nominal_controls);
  return a;
}

inline Json ablation_to_json(const AblationResult& a) {
  Json j;
  j["smooth"] = report_to_json(a.smooth.result, a.smooth.problem);
  j["hard"] = report_to_json(a.hard.result, a.hard.problem);
  j["evaluated_under_smooth"] = {{"smooth", a.smooth_under_smooth}, {"hard", a.hard_under_smooth}};
  j["evaluated_under_hard"] = {{"smooth", a.smooth_under_hard}, {"hard", a.hard_under_hard}};
  j["smooth_not_worse"] = a.smooth_not_worse();
  return j;
}

inline AblationResult run_ablation(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
  AblationResult a = ablation(config);
  std::filesystem::create_directories(out_dir);
  write_json(out_dir / "ablation.json", ablation_to_json(a));
  write_json(out_dir / "policy_smooth.json", policy_to_json(a.smooth.result.policy));
  write_json(out_dir / "policy_hard.json", policy_to_json(a.hard.result.policy));
  write_plan_table(out_dir / "plan_smooth.csv", a.smooth.result.policy, a.smooth.problem.constraints);
  write_plan_table(out_dir / "plan_hard.csv", a.hard.result.policy, a.hard.problem.constraints);
  return a;
}

/// Loose, medium and tight 3-sigma limits as (xy metres, theta radians).
struct Regime {
  const char* name;
  double xy;
  double theta;
};

inline constexpr std::array<Regime, 3> kRegimes{{{"loose", 0.36, 0.25}, {"medium", 0.25, 0.2}, {"tight", 0.15, 0.15}}};

inline ScenarioConfig with_regime(ScenarioConfig c, const Regime& r) {
  c.three_sigma_xy = r.xy;
  c.three_sigma_theta = r.theta;
  c.constrained = true;
  return c;
}

/// Constrained solves for every regime, each written to out_dir/<regime>/, plus sweep.csv.
inline std::vector<PlanOutput> run_sweep(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
  std::vector<PlanOutput> outs;
  std::filesystem::create_directories(out_dir);
  CsvWriter csv(out_dir / "sweep.csv");
  csv.header({"regime", "three_sigma_xy", "three_sigma_theta", "final_cost", "feasible", "converged", "outer_iterations", "max_violation"});
  for (std::size_t i = 0; i < kRegimes.size(); ++i) {
    const Regime& r = kRegimes[i];
    outs.push_back(run_plan(with_regime(config, r), out_dir / r.name));
    const SolveReport& rep = outs.back().result.report;
    const double mv = rep.max_violation_per_constraint.size() ? rep.max_violation_per_constraint.maxCoeff() : 0.0;
    csv.row({static_cast<double>(i), r.xy, r.theta, rep.final_cost, rep.feasible ? 1.0 : 0.0, rep.converged ? 1.0 : 0.0,
             static_cast<double>(rep.outer_iterations), mv});
  }
  return outs;
}

}  // namespace bsp
