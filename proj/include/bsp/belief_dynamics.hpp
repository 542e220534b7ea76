#pragma once

#include "bsp/belief.hpp"
#include "bsp/sensing.hpp"
#include "bsp/vehicle.hpp"

#include <optional>
#include <sstream>
#include <vector>

namespace bsp {

/// Everything one EKF step needs, linearized about the current belief.
struct LinearizedStep {
  VectorXd predicted_mean;
  MatrixXd F;
  MatrixXd Q_state;
  MatrixXd H;  // rows = stacked measurement dimension, possibly zero
  MatrixXd R;
};

/// Anything that can linearize its motion and measurement model about (b, u).
template <typename S>
concept BeliefSystem = requires(const S& s, const Belief& b, const VectorXd& u) {
  { s.linearize(b, u) } -> std::convertible_to<LinearizedStep>;
};

struct EkfStep {
  MatrixXd predicted_cov;
  MatrixXd gain;  // n x rows, empty when there is no measurement
  MatrixXd cov;
};

inline constexpr double kMaxInnovationCondition = 1e12;

inline EkfStep ekf_covariance_step(const LinearizedStep& lin, const MatrixXd& cov) {
  EkfStep out;
  const auto n = cov.rows();
  out.predicted_cov = lin.F * cov * lin.F.transpose() + lin.Q_state;
  if (lin.H.rows() == 0) {
    out.gain = MatrixXd::Zero(n, 0);
    out.cov = symmetrize_and_clamp(out.predicted_cov);
    return out;
  }
  const MatrixXd ph = out.predicted_cov * lin.H.transpose();
  const MatrixXd s = lin.H * ph + lin.R;
  Eigen::LLT<MatrixXd> llt(0.5 * (s + s.transpose()));
  if (llt.info() != Eigen::Success || !(llt.rcond() * kMaxInnovationCondition >= 1.0)) {
    std::ostringstream os;
    os << "EKF update: innovation covariance numerically singular (rcond " << llt.rcond() << ", "
       << s.rows() << " measurement rows)";
    throw Error(os.str());
  }
  out.gain = llt.solve(ph.transpose()).transpose();
  out.cov = symmetrize_and_clamp((MatrixXd::Identity(n, n) - out.gain * lin.H) * out.predicted_cov);
  return out;
}

/// Deterministic belief dynamics g(b, u).
template <BeliefSystem S>
Belief propagate(const S& sys, const Belief& b, const VectorXd& u) {
  const LinearizedStep lin = sys.linearize(b, u);
  const EkfStep ekf = ekf_covariance_step(lin, b.covariance());
  Belief next;
  next.mean = lin.predicted_mean;
  next.cov_vech = vech(ekf.cov, 1e-9);
  return next;
}

inline MatrixXd sqrt_noise(const MatrixXd& r) {
  if (r.isDiagonal(0.0)) return r.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  return psd_sqrt(r);
}

/// Whitened stochastic part w(b, u): [K H F Sigma^1/2, K H Q^1/2, K R^1/2] over zero covariance rows.
inline MatrixXd noise_matrix_from(const LinearizedStep& lin, const MatrixXd& cov, const EkfStep& ekf) {
  const auto n = cov.rows();
  const auto rows = lin.H.rows();
  const auto total = n + vech_size(static_cast<int>(n));
  MatrixXd w = MatrixXd::Zero(total, 2 * n + rows);
  if (rows == 0) return w;
  const MatrixXd kh = ekf.gain * lin.H;
  w.block(0, 0, n, n) = kh * lin.F * psd_sqrt(cov);
  w.block(0, n, n, n) = kh * psd_sqrt(lin.Q_state);
  w.block(0, 2 * n, n, rows) = ekf.gain * sqrt_noise(lin.R);
  return w;
}

template <BeliefSystem S>
MatrixXd noise_matrix(const S& sys, const Belief& b, const VectorXd& u) {
  const LinearizedStep lin = sys.linearize(b, u);
  const MatrixXd cov = b.covariance();
  return noise_matrix_from(lin, cov, ekf_covariance_step(lin, cov));
}

/// Belief dynamics of a robot with a stereo camera over a known feature map.
struct BeliefModel {
  MotionModel motion;
  FeatureMap map;
  CameraParams cam;
  VisibilityMode visibility = VisibilityMode::smooth;
  double p_min = kDefaultPMin;

  int state_dim() const { return kStateDim; }
  int control_dim() const { return motion.input_dim(); }
  int belief_dim() const { return bsp::belief_dim(kStateDim); }

  /// Active feature ids at the predicted mean of (b, u).
  std::vector<int> active_set(const Belief& b, const VectorXd& u) const {
    return active_features(step(motion, StateVector(b.mean), u), map, cam, p_min, visibility);
  }

  LinearizedStep linearize(const Belief& b, const VectorXd& u) const { return linearize(b, u, std::nullopt); }

  /// Linearization with an optionally frozen active feature set.
  LinearizedStep linearize(const Belief& b, const VectorXd& u, const std::optional<std::vector<int>>& frozen) const {
    const StateVector x(b.mean);
    LinearizedStep lin;
    const StateVector pred = step(motion, x, u);
    lin.predicted_mean = pred;
    lin.F = motion_state_jacobian(x, u);
    const MatrixXd fv = motion_noise_jacobian(x);
    lin.Q_state = fv * motion.process_noise_cov * fv.transpose();
    const std::vector<int> ids = frozen ? *frozen : active_features(pred, map, cam, p_min, visibility);
    const Measurement m = measurement_for(pred, map, cam, ids, p_min, visibility);
    lin.H = m.H;
    lin.R = m.R;
    return lin;
  }

  /// Analytic motion Jacobian d f / d x at zero noise.
  MatrixXd motion_state_jacobian(const StateVector& x, const VectorXd& u) const {
    MatrixXd f = MatrixXd::Identity(3, 3);
    if (motion.kind == MotionKind::unicycle) {
      f(0, 2) = -motion.dt * std::sin(x(2)) * u(0);
      f(1, 2) = motion.dt * std::cos(x(2)) * u(0);
    }
    return f;
  }

  /// Analytic motion Jacobian d f / d v.
  MatrixXd motion_noise_jacobian(const StateVector& x) const {
    if (motion.kind == MotionKind::holonomic) return motion.dt * MatrixXd::Identity(3, 3);
    MatrixXd g = MatrixXd::Zero(3, 2);
    g(0, 0) = motion.dt * std::cos(x(2));
    g(1, 0) = motion.dt * std::sin(x(2));
    g(2, 1) = motion.dt;
    return g;
  }
};

/// First-order expansion of the belief dynamics about a nominal (b, u).
struct BeliefJacobians {
  MatrixXd g_b;
  MatrixXd g_u;
  MatrixXd w;                  // belief_dim x p at the nominal
  std::vector<MatrixXd> w_b;   // per column of w: belief_dim x belief_dim
  std::vector<MatrixXd> w_u;   // per column of w: belief_dim x control_dim
  Belief next;                 // g at the nominal
  std::vector<int> active_ids;
};

/// Finite-difference Jacobians of g and of every column of w, with the active set frozen at the nominal.
inline BeliefJacobians belief_jacobians(const BeliefModel& bm, const Belief& b, const VectorXd& u) {
  const int n = bm.state_dim();
  const int nb = bm.belief_dim();
  const int m = bm.control_dim();
  BeliefJacobians out;
  out.active_ids = bm.active_set(b, u);
  const std::optional<std::vector<int>> frozen = out.active_ids;
  const auto p = static_cast<Eigen::Index>(2 * n + 2 * out.active_ids.size());

  auto eval = [&](const VectorXd& z) -> VectorXd {
    const Belief bz = Belief::from_stacked(z.head(nb), n);
    const VectorXd uz = z.tail(m);
    const LinearizedStep lin = bm.linearize(bz, uz, frozen);
    const MatrixXd cov = bz.covariance();
    const EkfStep ekf = ekf_covariance_step(lin, cov);
    VectorXd r(nb + nb * p);
    r.head(n) = lin.predicted_mean;
    r.segment(n, nb - n) = vech(ekf.cov, 1e-9);
    const MatrixXd w = noise_matrix_from(lin, cov, ekf);
    r.tail(nb * p) = Eigen::Map<const VectorXd>(w.data(), nb * p);
    return r;
  };

  VectorXd z(nb + m);
  z << b.stacked(), u;
  const VectorXd center = eval(z);
  const MatrixXd jac = numeric_jacobian(eval, z);
  out.next = Belief::from_stacked(center.head(nb), n);
  out.g_b = jac.block(0, 0, nb, nb);
  out.g_u = jac.block(0, nb, nb, m);
  out.w = Eigen::Map<const MatrixXd>(center.tail(nb * p).data(), nb, p);
  out.w_b.reserve(p);
  out.w_u.reserve(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    out.w_b.push_back(jac.block(nb + i * nb, 0, nb, nb));
    out.w_u.push_back(jac.block(nb + i * nb, nb, nb, m));
  }
  return out;
}

}  // namespace bsp
