#include "bsp/commands.hpp"
#include "test_support.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace bsp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("bsp_acceptance_" + name);
  std::filesystem::remove_all(p);
  return p;
}

Outcome lq_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  const ALState no_al = ALState::uniform(0, 0, 1, 1, 1);
  double worst_gain = 0.0;
  double worst_cost = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 4;
    const int m = 1 + (trial / 4) % 3;
    const int horizon = 10 + trial;
    const test::LinearQuadraticModel lq = test::random_lq(rng, n, m);
    const VectorXd x0 = test::random_matrix(rng, n, 1);
    const test::RiccatiSolution ref = test::riccati(lq, horizon);
    const Trajectory nominal = rollout(lq, x0, std::vector<VectorXd>(horizon, VectorXd::Zero(m)));
    const BackwardPassResult bp = backward_pass(lq, nominal, no_al, 0.0);
    if (!bp.ok) return {false, "backward pass failed on trial " + std::to_string(trial)};
    for (int k = 0; k < horizon; ++k) worst_gain = std::max(worst_gain, test::max_rel_diff(-bp.feedback[k], ref.gains[k]));
    const auto fp = forward_pass(lq, nominal, bp, no_al, 1.0);
    if (!fp) return {false, "forward pass failed on trial " + std::to_string(trial)};
    const double optimal = 0.5 * x0.dot(ref.P0 * x0);
    worst_cost = std::max(worst_cost, std::abs(fp->cost - optimal) / std::max(1.0, std::abs(optimal)));
  }
  const double t = seconds_since(t0);
  return {worst_gain <= 1e-6 && worst_cost <= 1e-6 && t < 5.0,
          "gain rel err " + fmt(worst_gain) + ", cost rel err " + fmt(worst_cost) + ", " + fmt(t) + " s"};
}

Outcome ekf_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4048);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 4;
    const int rows = 1 + trial % 3;
    test::LinearGaussianSystem s;
    s.F = 0.9 * MatrixXd::Identity(n, n) + test::random_matrix(rng, n, n, 0.1);
    s.G = test::random_matrix(rng, n, 2);
    s.Q = test::random_spd(rng, n, 0.01);
    s.H = test::random_matrix(rng, rows, n);
    s.R = test::random_spd(rng, rows, 0.05);
    const VectorXd mean = test::random_matrix(rng, n, 1);
    const MatrixXd cov = test::random_spd(rng, n, 0.05);
    const VectorXd u = test::random_matrix(rng, 2, 1);

    const MatrixXd p = s.F * cov * s.F.transpose() + s.Q;
    const MatrixXd k = p * s.H.transpose() * (s.H * p * s.H.transpose() + s.R).inverse();
    const MatrixXd ref_cov = (MatrixXd::Identity(n, n) - k * s.H) * p;
    const VectorXd ref_mean = s.F * mean + s.G * u;

    const Belief next = propagate(s, Belief(mean, cov), u);
    worst = std::max(worst, test::max_rel_diff(next.mean, ref_mean));
    worst = std::max(worst, test::max_rel_diff(next.covariance(), 0.5 * (ref_cov + ref_cov.transpose())));
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-10 && t < 5.0, "max rel err " + fmt(worst) + ", " + fmt(t) + " s"};
}

Outcome penalty_analytics() {
  const double t = -0.5;
  const double below = std::nextafter(t, -1.0);
  const double phi_err = std::max(std::abs(penalty_phi(t) + 0.375), std::abs(penalty_phi(below) + 0.375));
  const double dphi_err = std::max(std::abs(penalty_phi_prime(t) - 0.5), std::abs(penalty_phi_prime(below) - 0.5));

  double min_slope = std::numeric_limits<double>::infinity();
  const int grid = 1000000;
  for (int i = 0; i < grid; ++i) {
    const double x = -1e6 + 2e6 * static_cast<double>(i) / (grid - 1);
    min_slope = std::min(min_slope, penalty_phi_prime(x));
  }

  std::mt19937_64 rng(77);
  int nonpositive = 0;
  for (int i = 0; i < 10000; ++i) {
    const double lambda = std::pow(10.0, test::uniform(rng, -10, 6));
    const double mu = std::pow(10.0, test::uniform(rng, -3, 8));
    const double psi = test::uniform(rng, -1e4, 1e4);
    if (!(updated_multiplier(lambda, mu, psi) > 0.0)) ++nonpositive;
  }
  return {phi_err <= 1e-12 && dphi_err <= 1e-12 && min_slope > 0.0 && nonpositive == 0,
          "phi err " + fmt(phi_err) + ", phi' err " + fmt(dphi_err) + ", min phi' " + fmt(min_slope) + ", nonpositive " +
              std::to_string(nonpositive)};
}

Outcome visibility_continuity() {
  const double smooth = test::cone_sweep(VisibilityMode::smooth).max_jump();
  const double hard = test::cone_sweep(VisibilityMode::hard).max_jump();
  return {smooth < 1e-3 && hard >= 1e-2, "smooth max jump " + fmt(smooth) + ", hard max jump " + fmt(hard)};
}

Outcome regime_ordering() {
  const ScenarioConfig base = load_scenario(test::scenario_path("map1_holonomic.json"));
  std::vector<double> costs;
  std::string detail;
  bool ok = true;
  for (const Regime& r : kRegimes) {
    const auto t0 = Clock::now();
    const PlanOutput p = plan(with_regime(base, r));
    const double t = seconds_since(t0);
    costs.push_back(p.result.report.final_cost);
    ok = ok && p.result.report.converged && p.result.report.feasible && t < 600.0;
    detail += std::string(r.name) + " " + fmt(costs.back()) + " (" + fmt(t) + " s" +
              (p.result.report.feasible ? "" : ", infeasible") + ") ";
  }
  // kRegimes is ordered loose, medium, tight.
  ok = ok && costs[2] > costs[1] && costs[1] > costs[0];
  return {ok, detail};
}

Outcome feasibility_certificate() {
  const ScenarioConfig medium = load_scenario(test::scenario_path("map1_holonomic.json"));
  const PlanOutput p = plan(medium);
  const double scale = p.problem.constraints.bounds.maxCoeff();
  const double worst = p.result.constraint_values.maxCoeff();
  const bool certified = p.result.report.feasible && worst <= 1e-6 * scale;

  const ScenarioConfig bad = load_scenario(test::scenario_path("infeasible_no_features.json"));
  const PlanOutput q = plan(bad);
  MatrixXd sigma = bad.start.covariance();
  StateVector x(bad.start.mean);
  double floor_x = sigma(0, 0);
  for (int k = 0; k < q.problem.horizon; ++k) {
    const VectorXd& u = q.result.policy.nominal_controls[k];
    const MatrixXd f = state_jacobian(bad.motion, x, u);
    sigma = f * sigma * f.transpose() + state_process_noise(bad.motion, x, u);
    x = step(bad.motion, x, u);
    floor_x = std::max(floor_x, sigma(0, 0));
  }
  const double bound = q.problem.constraints.bounds(0);
  const double reported = q.result.report.max_violation_per_constraint(0);
  const bool flagged = !q.result.report.feasible && reported > 0.0 && floor_x > bound &&
                       std::abs(reported - (floor_x - bound)) <= 1e-9;
  return {certified && flagged, "medium max psi " + fmt(worst) + " vs " + fmt(1e-6 * scale) + "; infeasible reported " +
                                    fmt(reported) + ", oracle floor excess " + fmt(floor_x - bound)};
}

Outcome ablation_direction() {
  bool ok = true;
  std::string detail;
  for (const char* name : {"map1_holonomic_ablation.json", "map2_holonomic_ablation.json", "map1_unicycle_ablation.json",
                           "map2_unicycle_ablation.json"}) {
    const AblationResult a = ablation(load_scenario(test::scenario_path(name)));
    ok = ok && a.smooth_not_worse();
    detail += std::string(name).substr(0, std::string(name).find("_ablation")) + " smooth/hard " +
              fmt(a.smooth_under_smooth) + "/" + fmt(a.hard_under_smooth) + " (smooth model), " + fmt(a.smooth_under_hard) +
              "/" + fmt(a.hard_under_hard) + " (hard model); ";
  }
  return {ok, detail};
}

Outcome monte_carlo_consistency() {
  const auto t0 = Clock::now();
  const ScenarioConfig medium = load_scenario(test::scenario_path("map1_holonomic.json"));
  ScenarioConfig unconstrained = medium;
  unconstrained.constrained = false;
  unconstrained.weights.S_I.setZero();
  const PlanOutput al = plan(medium);
  const PlanOutput plain = plan(unconstrained);
  const ConstraintSpec audit = config_constraints(medium);
  const MonteCarloSummary a = monte_carlo(al.problem, al.result.policy, 500, 1, audit);
  const MonteCarloSummary b = monte_carlo(plain.problem, plain.result.policy, 500, 1, audit);
  const double t = seconds_since(t0);
  const int va = std::accumulate(a.violation_counts.begin(), a.violation_counts.end(), 0);
  const int vb = std::accumulate(b.violation_counts.begin(), b.violation_counts.end(), 0);
  const double within = a.within_3sigma_fraction.minCoeff();
  return {al.result.report.feasible && within >= 0.95 && va < vb && a.diverged_runs == 0 && t < 600.0,
          "min within-3sigma " + fmt(within) + ", violations AL " + std::to_string(va) + " vs unconstrained " +
              std::to_string(vb) + ", " + fmt(t) + " s"};
}

Outcome gradient_hygiene() {
  double worst = 0.0;
  const Belief prior(Eigen::Vector3d(0.2, -0.1, 0.05),
                     (MatrixXd(3, 3) << 0.02, 0.003, 0.001, 0.003, 0.015, -0.002, 0.001, -0.002, 0.01).finished());

  {
    BeliefModel bm;
    bm.motion = {MotionKind::holonomic, 0.4, Eigen::Vector3d(0.004, 0.004, 0.002).asDiagonal()};
    const BeliefJacobians j = belief_jacobians(bm, prior, Eigen::Vector3d(0.5, -0.2, 0.1));
    MatrixXd g_u = MatrixXd::Zero(9, 3);
    g_u.topRows(3) = 0.4 * MatrixXd::Identity(3, 3);
    worst = std::max(worst, (j.g_b - MatrixXd::Identity(9, 9)).cwiseAbs().maxCoeff());
    worst = std::max(worst, (j.g_u - g_u).cwiseAbs().maxCoeff());
  }
  {
    BeliefModel bm;
    bm.motion = {MotionKind::unicycle, 0.4, Eigen::Vector2d(0.004, 0.002).asDiagonal()};
    const Eigen::Vector2d u(0.8, 0.2);
    const double dt = 0.4;
    const double th = prior.mean(2);
    auto fx = [&](double t) {
      MatrixXd f = MatrixXd::Identity(3, 3);
      f(0, 2) = -dt * std::sin(t) * u(0);
      f(1, 2) = dt * std::cos(t) * u(0);
      return f;
    };
    auto fv = [&](double t) {
      MatrixXd g = MatrixXd::Zero(3, 2);
      g(0, 0) = dt * std::cos(t);
      g(1, 0) = dt * std::sin(t);
      g(2, 1) = dt;
      return g;
    };
    const BeliefJacobians j = belief_jacobians(bm, prior, u);
    const MatrixXd f = fx(th);
    worst = std::max(worst, (j.g_b.topLeftCorner(3, 3) - f).cwiseAbs().maxCoeff());
    MatrixXd mean_u = MatrixXd::Zero(3, 2);
    mean_u(0, 0) = dt * std::cos(th);
    mean_u(1, 0) = dt * std::sin(th);
    mean_u(2, 1) = dt;
    worst = std::max(worst, (j.g_u.topRows(3) - mean_u).cwiseAbs().maxCoeff());
    for (int i = 0; i < 6; ++i) {
      VectorXd e = VectorXd::Zero(6);
      e(i) = 1.0;
      worst = std::max(worst, (j.g_b.block(3, 3 + i, 6, 1) - vech(f * unvech(e, 3) * f.transpose(), 1e-12)).cwiseAbs().maxCoeff());
    }
    MatrixXd dft = MatrixXd::Zero(3, 3);
    dft(0, 2) = -dt * std::cos(th) * u(0);
    dft(1, 2) = -dt * std::sin(th) * u(0);
    MatrixXd dfv = MatrixXd::Zero(3, 2);
    dfv(0, 0) = -dt * std::sin(th);
    dfv(1, 0) = dt * std::cos(th);
    const MatrixXd sig = prior.covariance();
    const MatrixXd& q = bm.motion.process_noise_cov;
    const MatrixXd d_sigma = dft * sig * f.transpose() + f * sig * dft.transpose() + dfv * q * fv(th).transpose() +
                             fv(th) * q * dfv.transpose();
    worst = std::max(worst, (j.g_b.block(3, 2, 6, 1) - vech(d_sigma, 1e-12)).cwiseAbs().maxCoeff());
  }
  {
    const ConstraintSpec spec = three_sigma_bounds(Eigen::Vector3d(0.25, 0.25, 0.2));
    std::mt19937_64 rng(91);
    for (int trial = 0; trial < 50; ++trial) {
      const Belief b(test::random_matrix(rng, 3, 1), test::random_spd(rng, 3, 0.001) * 0.01);
      const VectorXd lambda = (test::random_matrix(rng, 3, 1).array().abs() + 0.1).matrix();
      const VectorXd mu = (test::random_matrix(rng, 3, 1).array().abs() * 10 + 1).matrix();
      const VectorXd analytic = spec.selector.transpose() * penalty_gradient(constraint_eval(b, spec), lambda, mu);
      const MatrixXd fd = numeric_jacobian(
          [&](const VectorXd& z) -> VectorXd {
            return VectorXd::Constant(1, penalty_total(Belief::from_stacked(z, 3), lambda, mu, spec));
          },
          b.stacked(), 1e-7);
      worst = std::max(worst, (fd.transpose() - analytic).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= 1e-6, "max abs err " + fmt(worst)};
}

Outcome determinism() {
  const ScenarioConfig c = load_scenario(test::scenario_path("map1_unicycle.json"));
  const auto a = scratch("plan_a");
  const auto b = scratch("plan_b");
  const PlanOutput p = run_plan(c, a);
  run_plan(c, b);
  std::vector<std::string> differing;
  for (const char* f : {"policy.json", "report.json", "plan.csv"})
    if (read_text(a / f) != read_text(b / f)) differing.push_back(f);
  const Policy policy = load_policy(a / "policy.json");
  const auto ea = scratch("exec_a");
  const auto eb = scratch("exec_b");
  run_execute(c, policy, 42, ea);
  run_execute(c, policy, 42, eb);
  for (const char* f : {"trace.json", "trace.csv"})
    if (read_text(ea / f) != read_text(eb / f)) differing.push_back(f);
  std::string detail = differing.empty() ? "plan and execute outputs identical" : "differing:";
  for (const auto& f : differing) detail += " " + f;
  return {differing.empty() && read_text(a / "plan.csv").size() > 0, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"LQ oracle", lq_oracle},
      {"EKF oracle", ekf_oracle},
      {"Penalty analytics", penalty_analytics},
      {"Visibility continuity", visibility_continuity},
      {"Constraint-regime ordering", regime_ordering},
      {"Feasibility certificate", feasibility_certificate},
      {"Ablation direction", ablation_direction},
      {"Monte Carlo consistency", monte_carlo_consistency},
      {"Gradient hygiene", gradient_hygiene},
      {"Determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
