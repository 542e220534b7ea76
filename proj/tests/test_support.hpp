#pragma once

#include "bsp/io.hpp"

#include <random>
#include <string>

namespace bsp::test {

inline std::string scenario_path(const std::string& name) { return std::string(BSP_SOURCE_DIR) + "/scenarios/" + name; }

inline MatrixXd random_matrix(std::mt19937_64& rng, int r, int c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

inline MatrixXd random_spd(std::mt19937_64& rng, int n, double floor = 0.1) {
  const MatrixXd a = random_matrix(rng, n, n);
  return a * a.transpose() / n + floor * MatrixXd::Identity(n, n);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline double max_rel_diff(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

/// Time-invariant linear dynamics x' = A x + B u with quadratic costs and optional constant noise columns.
struct LinearQuadraticModel {
  MatrixXd A, B, Q, R, Qf;
  MatrixXd W;  // state_dim x p, constant
  MatrixXd C;  // constraint rows on the state: C x - d <= 0
  VectorXd d;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int control_dim() const { return static_cast<int>(B.cols()); }
  VectorXd dynamics(const VectorXd& x, const VectorXd& u) const { return A * x + B * u; }
  DynamicsExpansion expand_dynamics(int, const VectorXd&, const VectorXd&) const {
    const int p = static_cast<int>(W.cols());
    return {A, B, W, std::vector<MatrixXd>(p, MatrixXd::Zero(state_dim(), state_dim())),
            std::vector<MatrixXd>(p, MatrixXd::Zero(state_dim(), control_dim()))};
  }
  double stage_cost(int, const VectorXd& x, const VectorXd& u) const { return 0.5 * x.dot(Q * x) + 0.5 * u.dot(R * u); }
  CostExpansion expand_stage_cost(int k, const VectorXd& x, const VectorXd& u) const {
    return {stage_cost(k, x, u), Q * x, R * u, Q, R, MatrixXd::Zero(control_dim(), state_dim())};
  }
  double terminal_cost(const VectorXd& x) const { return 0.5 * x.dot(Qf * x); }
  CostExpansion expand_terminal_cost(const VectorXd& x) const {
    return {terminal_cost(x), Qf * x, VectorXd(), Qf, MatrixXd(), MatrixXd()};
  }
  int constraint_count() const { return static_cast<int>(d.size()); }
  VectorXd constraints(int, const VectorXd& x) const { return C * x - d; }
  MatrixXd constraint_jacobian(int, const VectorXd&) const { return C; }
};

inline LinearQuadraticModel random_lq(std::mt19937_64& rng, int n, int m) {
  LinearQuadraticModel lq;
  lq.A = MatrixXd::Identity(n, n) + random_matrix(rng, n, n, 0.2);
  lq.B = random_matrix(rng, n, m);
  lq.Q = random_spd(rng, n);
  lq.R = random_spd(rng, m);
  lq.Qf = random_spd(rng, n);
  lq.W = MatrixXd::Zero(n, 0);
  lq.C = MatrixXd::Zero(0, n);
  lq.d = VectorXd::Zero(0);
  return lq;
}

/// Textbook finite-horizon discrete Riccati recursion: gains K_k (u = -K_k x) and cost-to-go P_0.
struct RiccatiSolution {
  std::vector<MatrixXd> gains;
  MatrixXd P0;
};

inline RiccatiSolution riccati(const LinearQuadraticModel& lq, int horizon) {
  RiccatiSolution s;
  s.gains.resize(horizon);
  MatrixXd P = lq.Qf;
  for (int k = horizon - 1; k >= 0; --k) {
    const MatrixXd K = (lq.R + lq.B.transpose() * P * lq.B).ldlt().solve(lq.B.transpose() * P * lq.A);
    s.gains[k] = K;
    P = lq.Q + lq.A.transpose() * P * (lq.A - lq.B * K);
    P = 0.5 * (P + P.transpose());
  }
  s.P0 = P;
  return s;
}

/// Linear-Gaussian system exposed through the belief-system interface.
struct LinearGaussianSystem {
  MatrixXd F, G, Q, H, R;

  LinearizedStep linearize(const Belief& b, const VectorXd& u) const {
    return {F * b.mean + G * u, F, Q, H, R};
  }
};

/// Map1 scenario with a chosen regime, model and mode.
inline ScenarioConfig map_scenario(const std::string& file) { return load_scenario(scenario_path(file)); }

}  // namespace bsp::test

namespace bsp::test {

/// Sweeps the robot sideways past the edge of one feature's field-of-view cone and records the trace
/// of the propagated covariance at each step.
struct ConeSweep {
  std::vector<double> offsets;
  std::vector<double> traces;

  double max_jump() const {
    double j = 0.0;
    for (std::size_t i = 1; i < traces.size(); ++i) j = std::max(j, std::abs(traces[i] - traces[i - 1]));
    return j;
  }
};

inline ConeSweep cone_sweep(VisibilityMode mode, double resolution = 1e-4, double prior_var = 0.03) {
  BeliefModel bm;
  bm.motion = {MotionKind::holonomic, 0.1, Eigen::Vector3d(1e-3, 1e-3, 1e-3).asDiagonal()};
  bm.map.features.push_back({1, {3.0, 0.0}, std::numbers::pi});
  bm.visibility = mode;
  const double edge = 3.0 * std::tan(bm.cam.alpha_max);
  const Belief prior(Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(prior_var, prior_var, prior_var / 2).asDiagonal().toDenseMatrix());
  ConeSweep s;
  const int steps = static_cast<int>(std::round(0.2 / resolution));
  for (int i = 0; i <= steps; ++i) {
    Belief b = prior;
    b.mean(1) = edge - 0.1 + i * resolution;
    s.offsets.push_back(b.mean(1) - edge);
    s.traces.push_back(propagate(bm, b, VectorXd::Zero(3)).covariance().trace());
  }
  return s;
}

}  // namespace bsp::test

namespace bsp::test {

/// A short version of the bundled Map1 scenario that solves in well under a second.
inline ScenarioConfig short_scenario(const std::string& file = "map1_holonomic.json", int horizon = 15) {
  ScenarioConfig c = load_scenario(scenario_path(file));
  c.horizon = horizon;
  c.goal = StateVector(7, 4, 0);
  c.weights.goal = c.goal;
  c.initial_controls.clear();
  return c;
}

}  // namespace bsp::test
