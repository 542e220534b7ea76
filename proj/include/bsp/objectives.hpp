#pragma once

#include "bsp/belief.hpp"
#include "bsp/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace bsp {

/// Diagonal weights of the stage and terminal costs plus the goal state.
struct CostWeights {
  VectorXd S_K = VectorXd::Zero(3);
  VectorXd S_I = VectorXd::Zero(3);
  VectorXd S_u = VectorXd::Zero(3);
  double s_c = 0.0;
  StateVector goal = StateVector::Zero();

  void validate(int control_dim) const {
    if (S_K.size() != 3 || S_I.size() != 3) throw Error("CostWeights: S_K and S_I must have 3 entries");
    if (S_u.size() != control_dim) throw Error("CostWeights: S_u size must equal the control dimension");
    if ((S_K.array() < 0).any() || (S_I.array() < 0).any() || (S_u.array() < 0).any() || s_c < 0)
      throw Error("CostWeights: weights must be non-negative");
  }
};

/// Linear covariance bounds psi(b) = A b - sigma_max. Each selector row picks one diagonal of Sigma.
struct ConstraintSpec {
  MatrixXd selector;  // J x belief_dim
  VectorXd bounds;    // J variances

  int count() const { return static_cast<int>(bounds.size()); }
  bool empty() const { return bounds.size() == 0; }
};

/// Bounds on the variances of the listed state axes. Inputs are variances, not standard deviations.
inline ConstraintSpec covariance_bounds(const std::vector<int>& axes, const VectorXd& variance_bounds, int n = kStateDim) {
  if (static_cast<Eigen::Index>(axes.size()) != variance_bounds.size())
    throw Error("covariance_bounds: one bound per axis required");
  ConstraintSpec spec;
  const int j = static_cast<int>(axes.size());
  spec.selector = MatrixXd::Zero(j, belief_dim(n));
  spec.bounds = variance_bounds;
  for (int r = 0; r < j; ++r) {
    if (axes[r] < 0 || axes[r] >= n) throw Error("covariance_bounds: axis out of range");
    if (!(variance_bounds(r) > 0)) throw Error("covariance_bounds: bounds must be positive");
    spec.selector(r, n + vech_index(n, axes[r], axes[r])) = 1.0;
  }
  return spec;
}

/// Converts per-axis 3-sigma limits (m, m, rad) into variance bounds on x, y and theta.
inline ConstraintSpec three_sigma_bounds(const Eigen::Vector3d& three_sigma) {
  const VectorXd var = (three_sigma / 3.0).array().square();
  return covariance_bounds({0, 1, 2}, var);
}

inline VectorXd constraint_eval(const Belief& b, const ConstraintSpec& spec) {
  if (spec.empty()) return VectorXd::Zero(0);
  return spec.selector * b.stacked() - spec.bounds;
}

/// Distance from the mean position to each obstacle surface divided by the largest covariance eigenvalue.
inline VectorXd collision_distances(const Belief& b, const FeatureMap& map) {
  VectorXd d(map.obstacles.size());
  const double lmax = std::max(max_eigenvalue(b.covariance()), 1e-300);
  for (std::size_t i = 0; i < map.obstacles.size(); ++i) {
    const Obstacle& o = map.obstacles[i];
    d(static_cast<Eigen::Index>(i)) = ((b.mean.head<2>() - o.center).norm() - o.radius) / lmax;
  }
  return d;
}

inline double collision_cost(const Belief& b, const CostWeights& w, const FeatureMap& map) {
  if (w.s_c == 0.0 || map.obstacles.empty()) return 0.0;
  return w.s_c * (-collision_distances(b, map)).array().exp().sum();
}

inline double information_cost(const Belief& b, const CostWeights& w) {
  double t = 0.0;
  const int n = b.state_dim();
  for (int i = 0; i < n; ++i) t += w.S_I(i) * b.cov_vech(vech_index(n, i, i));
  return t;
}

inline double control_cost(const VectorXd& u, const CostWeights& w) { return u.dot(w.S_u.asDiagonal() * u); }

inline double stage_cost(const Belief& b, const VectorXd& u, const CostWeights& w, const FeatureMap& map) {
  return control_cost(u, w) + information_cost(b, w) + collision_cost(b, w, map);
}

inline StateVector goal_error(const Belief& b, const CostWeights& w) {
  StateVector e = w.goal - StateVector(b.mean);
  e(2) = wrap_angle(e(2));
  return e;
}

inline double terminal_cost(const Belief& b, const CostWeights& w) {
  const StateVector e = goal_error(b, w);
  return e.dot(w.S_K.asDiagonal() * e) + information_cost(b, w);
}

// Smooth PHR penalty: quadratic for t >= -1/2, logarithmic below.

inline double penalty_phi(double t) {
  if (t >= -0.5) return 0.5 * t * t + t;
  return -0.25 * std::log(-2.0 * t) - 0.375;
}

inline double penalty_phi_prime(double t) {
  if (t >= -0.5) return t + 1.0;
  return -1.0 / (4.0 * t);
}

inline double penalty_phi_second(double t) {
  if (t >= -0.5) return 1.0;
  return 1.0 / (4.0 * t * t);
}

/// sum_j lambda_j^2 / mu_j * phi(mu_j / lambda_j * psi_j)
inline double penalty_total(const VectorXd& psi, const VectorXd& lambda, const VectorXd& mu) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < psi.size(); ++j)
    total += lambda(j) * lambda(j) / mu(j) * penalty_phi(mu(j) / lambda(j) * psi(j));
  return total;
}

inline double penalty_total(const Belief& b, const VectorXd& lambda, const VectorXd& mu, const ConstraintSpec& spec) {
  return penalty_total(constraint_eval(b, spec), lambda, mu);
}

/// d P / d psi_j = lambda_j * phi'(mu_j / lambda_j * psi_j)
inline VectorXd penalty_gradient(const VectorXd& psi, const VectorXd& lambda, const VectorXd& mu) {
  VectorXd g(psi.size());
  for (Eigen::Index j = 0; j < psi.size(); ++j) g(j) = lambda(j) * penalty_phi_prime(mu(j) / lambda(j) * psi(j));
  return g;
}

/// d^2 P / d psi_j^2 = mu_j * phi''(mu_j / lambda_j * psi_j)
inline VectorXd penalty_curvature(const VectorXd& psi, const VectorXd& lambda, const VectorXd& mu) {
  VectorXd h(psi.size());
  for (Eigen::Index j = 0; j < psi.size(); ++j) h(j) = mu(j) * penalty_phi_second(mu(j) / lambda(j) * psi(j));
  return h;
}

/// Multiplier estimates, penalty parameters and violation thresholds, one row per timestep 0..K.
struct ALState {
  MatrixXd lambda;
  MatrixXd mu;
  MatrixXd threshold;

  static ALState uniform(int rows, int constraints, double lambda0, double mu0, double threshold0) {
    return {MatrixXd::Constant(rows, constraints, lambda0), MatrixXd::Constant(rows, constraints, mu0),
            MatrixXd::Constant(rows, constraints, threshold0)};
  }

  int rows() const { return static_cast<int>(lambda.rows()); }
  int constraints() const { return static_cast<int>(lambda.cols()); }
};

/// Multipliers of long-inactive constraints decay quadratically; this floor keeps them representable.
inline constexpr double kMinMultiplier = 1e-20;

inline double updated_multiplier(double lambda, double mu, double psi) {
  return std::max(lambda * penalty_phi_prime(mu / lambda * psi), kMinMultiplier);
}

/// lambda <- lambda * phi'(mu / lambda * psi) for every entry; psi is (K+1) x J.
inline ALState multiplier_update(const ALState& al, const MatrixXd& psi) {
  ALState out = al;
  for (Eigen::Index k = 0; k < psi.rows(); ++k)
    for (Eigen::Index j = 0; j < psi.cols(); ++j) out.lambda(k, j) = updated_multiplier(al.lambda(k, j), al.mu(k, j), psi(k, j));
  return out;
}

}  // namespace bsp
