#pragma once

#include "bsp/belief.hpp"

#include <cmath>
#include <functional>
#include <sstream>

namespace bsp {

enum class MotionKind { holonomic, unicycle };

inline const char* to_string(MotionKind k) { return k == MotionKind::holonomic ? "holonomic" : "unicycle"; }

/// Discrete-time motion model with noise entering additively on the control channel.
struct MotionModel {
  MotionKind kind = MotionKind::holonomic;
  double dt = 0.1;
  MatrixXd process_noise_cov = MatrixXd::Identity(3, 3) * 1e-2;

  int input_dim() const { return kind == MotionKind::holonomic ? 3 : 2; }

  void validate() const {
    if (!(dt > 0.0)) throw Error("MotionModel: dt must be positive");
    const int m = input_dim();
    if (process_noise_cov.rows() != m || process_noise_cov.cols() != m)
      throw Error("MotionModel: process noise covariance must be input_dim x input_dim");
    if ((process_noise_cov - process_noise_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw Error("MotionModel: process noise covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(process_noise_cov, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kPsdTolerance) throw Error("MotionModel: process noise covariance not PSD");
  }
};

inline StateVector step(const MotionModel& model, const StateVector& x, const VectorXd& u, const VectorXd& v) {
  const int m = model.input_dim();
  if (u.size() != m || v.size() != m) {
    std::ostringstream os;
    os << "step: expected control/noise of size " << m << ", got " << u.size() << "/" << v.size();
    throw Error(os.str());
  }
  const VectorXd a = u + v;
  if (model.kind == MotionKind::holonomic) return x + model.dt * a;
  StateVector out = x;
  out(0) += model.dt * std::cos(x(2)) * a(0);
  out(1) += model.dt * std::sin(x(2)) * a(0);
  out(2) += model.dt * a(1);
  return out;
}

inline StateVector step(const MotionModel& model, const StateVector& x, const VectorXd& u) {
  return step(model, x, u, VectorXd::Zero(model.input_dim()));
}

inline constexpr double kFiniteDifferenceStep = 1e-5;

/// Central-difference Jacobian with per-coordinate step h_i = step_scale * max(1, |at_i|).
template <typename Fn>
MatrixXd numeric_jacobian(Fn&& fn, const VectorXd& at, double step_scale = kFiniteDifferenceStep) {
  const VectorXd f0 = fn(at);
  MatrixXd jac(f0.size(), at.size());
  VectorXd probe = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double h = step_scale * std::max(1.0, std::abs(at(i)));
    probe(i) = at(i) + h;
    const VectorXd fp = fn(probe);
    probe(i) = at(i) - h;
    const VectorXd fm = fn(probe);
    probe(i) = at(i);
    if (!fp.allFinite() || !fm.allFinite()) {
      std::ostringstream os;
      os << "numeric_jacobian: non-finite output when probing coordinate " << i << " at " << at.transpose();
      throw Error(os.str());
    }
    jac.col(i) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

/// Jacobian of the motion model with respect to the state, at zero noise.
inline MatrixXd state_jacobian(const MotionModel& model, const StateVector& x, const VectorXd& u) {
  return numeric_jacobian([&](const VectorXd& s) -> VectorXd { return step(model, StateVector(s), u); }, x);
}

/// Jacobian of the motion model with respect to the noise vector.
inline MatrixXd noise_jacobian(const MotionModel& model, const StateVector& x, const VectorXd& u) {
  return numeric_jacobian([&](const VectorXd& v) -> VectorXd { return step(model, x, u, v); },
                          VectorXd::Zero(model.input_dim()));
}

/// Process noise mapped into state space: F_v Q F_v^T.
inline MatrixXd state_process_noise(const MotionModel& model, const StateVector& x, const VectorXd& u) {
  const MatrixXd fv = noise_jacobian(model, x, u);
  return fv * model.process_noise_cov * fv.transpose();
}

}  // namespace bsp
