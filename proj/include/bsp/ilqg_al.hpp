#pragma once

// Augmented-Lagrangian iLQG over a generic stochastic model
//
//   x_{k+1} = g(x_k, u_k) + w(x_k, u_k) xi_k,   xi_k ~ N(0, I)
//
// with stage costs c_k, terminal cost c_K and inequality constraints psi_k(x_k) <= 0 for k = 0..K.
// The inner loop minimizes the cost augmented by the smooth PHR penalty; the outer loop updates
// multipliers, penalty parameters and thresholds.

#include "bsp/belief.hpp"
#include "bsp/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

namespace bsp {

/// First-order expansion of the dynamics. w_x and w_u hold one Jacobian per column of w.
struct DynamicsExpansion {
  MatrixXd g_x;
  MatrixXd g_u;
  MatrixXd w;
  std::vector<MatrixXd> w_x;
  std::vector<MatrixXd> w_u;
};

/// Second-order expansion of a scalar cost.
struct CostExpansion {
  double value = 0.0;
  VectorXd c_x;
  VectorXd c_u;
  MatrixXd c_xx;
  MatrixXd c_uu;
  MatrixXd c_ux;
};

template <typename M>
concept TrajectoryModel = requires(const M& m, int k, const VectorXd& x, const VectorXd& u) {
  { m.state_dim() } -> std::convertible_to<int>;
  { m.control_dim() } -> std::convertible_to<int>;
  { m.dynamics(x, u) } -> std::convertible_to<VectorXd>;
  { m.expand_dynamics(k, x, u) } -> std::convertible_to<DynamicsExpansion>;
  { m.stage_cost(k, x, u) } -> std::convertible_to<double>;
  { m.expand_stage_cost(k, x, u) } -> std::convertible_to<CostExpansion>;
  { m.terminal_cost(x) } -> std::convertible_to<double>;
  { m.expand_terminal_cost(x) } -> std::convertible_to<CostExpansion>;
  { m.constraint_count() } -> std::convertible_to<int>;
  { m.constraints(k, x) } -> std::convertible_to<VectorXd>;
  { m.constraint_jacobian(k, x) } -> std::convertible_to<MatrixXd>;
};

struct Trajectory {
  std::vector<VectorXd> states;    // K + 1
  std::vector<VectorXd> controls;  // K

  int horizon() const { return static_cast<int>(controls.size()); }
};

/// Affine feedback policy u_k = u_bar_k + feedback_k (x_k - x_bar_k) about the nominal trajectory.
/// feedforward_k is the open-loop update that produced the nominal; it is already part of u_bar_k.
struct Policy {
  std::vector<VectorXd> nominal_states;
  std::vector<VectorXd> nominal_controls;
  std::vector<VectorXd> feedforward;
  std::vector<MatrixXd> feedback;

  int horizon() const { return static_cast<int>(nominal_controls.size()); }
};

struct BackwardPassResult {
  std::vector<VectorXd> feedforward;
  std::vector<MatrixXd> feedback;
  double d1 = 0.0;  // sum ff^T Q_u
  double d2 = 0.0;  // sum 1/2 ff^T Q_uu ff
  double value = 0.0;
  bool ok = false;
  int failed_step = -1;

  /// Predicted cost decrease for a line-search step eps.
  double expected_reduction(double eps) const { return -(eps * d1 + eps * eps * d2); }
};

struct InnerOptions {
  int max_iterations = 100;
  double relative_tolerance = 1e-4;
  double reg_init = 1e-8;
  double reg_min = 1e-8;
  double reg_max = 1e8;
  double reg_increase = 10.0;
  double reg_decrease = 2.0;
  int max_backtracks = 10;
};

struct ALSchedule {
  double lambda0 = 1.0;
  double mu0 = 10.0;
  double mu_growth = 5.0;
  double threshold_decay = 5.0;
  double mu_max = 1e8;
  int max_outer = 30;
  double feasibility_tolerance = 1e-6;
  double penalty_tolerance = 1e-4;
  /// The inner loop's relative tolerance is multiplied by this after every outer iteration.
  double inner_tolerance_decay = 0.1;
  double min_inner_tolerance = 1e-9;
};

namespace detail {

inline void require_finite(const MatrixXd& m, const char* what, int k) {
  if (!m.allFinite()) {
    std::ostringstream os;
    os << "backward pass: non-finite " << what << " at timestep " << k;
    throw Error(os.str());
  }
}

template <TrajectoryModel M>
void add_penalty(const M& model, int k, const VectorXd& x, const ALState& al, CostExpansion& e) {
  const int j = model.constraint_count();
  if (j == 0 || al.rows() == 0) return;
  const VectorXd psi = model.constraints(k, x);
  const MatrixXd jac = model.constraint_jacobian(k, x);
  const VectorXd lambda = al.lambda.row(k).transpose();
  const VectorXd mu = al.mu.row(k).transpose();
  e.value += penalty_total(psi, lambda, mu);
  e.c_x += jac.transpose() * penalty_gradient(psi, lambda, mu);
  e.c_xx += jac.transpose() * penalty_curvature(psi, lambda, mu).asDiagonal() * jac;
}

}  // namespace detail

template <TrajectoryModel M>
double penalty_at(const M& model, int k, const VectorXd& x, const ALState& al) {
  if (model.constraint_count() == 0 || al.rows() == 0) return 0.0;
  return penalty_total(model.constraints(k, x), al.lambda.row(k).transpose(), al.mu.row(k).transpose());
}

/// Cost without the penalty.
template <TrajectoryModel M>
double trajectory_cost(const M& model, const Trajectory& t) {
  double c = 0.0;
  for (int k = 0; k < t.horizon(); ++k) c += model.stage_cost(k, t.states[k], t.controls[k]);
  return c + model.terminal_cost(t.states.back());
}

template <TrajectoryModel M>
double trajectory_penalty(const M& model, const Trajectory& t, const ALState& al) {
  double p = 0.0;
  for (int k = 0; k <= t.horizon(); ++k) p += penalty_at(model, k, t.states[k], al);
  return p;
}

template <TrajectoryModel M>
double augmented_cost(const M& model, const Trajectory& t, const ALState& al) {
  return trajectory_cost(model, t) + trajectory_penalty(model, t, al);
}

/// Constraint values along a trajectory, (K+1) x J.
template <TrajectoryModel M>
MatrixXd constraint_values(const M& model, const Trajectory& t) {
  const int j = model.constraint_count();
  MatrixXd psi(t.horizon() + 1, j);
  for (int k = 0; k <= t.horizon(); ++k)
    if (j > 0) psi.row(k) = model.constraints(k, t.states[k]).transpose();
  return psi;
}

/// Open-loop rollout of controls through g from x0.
template <TrajectoryModel M>
Trajectory rollout(const M& model, const VectorXd& x0, const std::vector<VectorXd>& controls) {
  Trajectory t;
  t.controls = controls;
  t.states.reserve(controls.size() + 1);
  t.states.push_back(x0);
  for (const VectorXd& u : controls) t.states.push_back(model.dynamics(t.states.back(), u));
  return t;
}

template <TrajectoryModel M>
BackwardPassResult backward_pass(const M& model, const Trajectory& nominal, const ALState& al, double reg) {
  const int horizon = nominal.horizon();
  const int nu = model.control_dim();
  BackwardPassResult out;
  out.feedforward.resize(horizon);
  out.feedback.resize(horizon);

  CostExpansion term = model.expand_terminal_cost(nominal.states.back());
  detail::add_penalty(model, horizon, nominal.states.back(), al, term);
  VectorXd v_x = term.c_x;
  MatrixXd v_xx = term.c_xx;
  double v_bar = term.value;
  detail::require_finite(v_xx, "terminal value Hessian", horizon);

  for (int k = horizon - 1; k >= 0; --k) {
    const VectorXd& x = nominal.states[k];
    const VectorXd& u = nominal.controls[k];
    const DynamicsExpansion dyn = model.expand_dynamics(k, x, u);
    CostExpansion c = model.expand_stage_cost(k, x, u);
    detail::add_penalty(model, k, x, al, c);

    VectorXd q_x = c.c_x + dyn.g_x.transpose() * v_x;
    VectorXd q_u = c.c_u + dyn.g_u.transpose() * v_x;
    MatrixXd q_xx = c.c_xx + dyn.g_x.transpose() * v_xx * dyn.g_x;
    MatrixXd q_uu = c.c_uu + dyn.g_u.transpose() * v_xx * dyn.g_u;
    MatrixXd q_ux = c.c_ux + dyn.g_u.transpose() * v_xx * dyn.g_x;
    double q_bar = c.value + v_bar;
    for (Eigen::Index i = 0; i < dyn.w.cols(); ++i) {
      const VectorXd vw = v_xx * dyn.w.col(i);
      const MatrixXd vwx = v_xx * dyn.w_x[i];
      q_x += dyn.w_x[i].transpose() * vw;
      q_u += dyn.w_u[i].transpose() * vw;
      q_xx += dyn.w_x[i].transpose() * vwx;
      q_uu += dyn.w_u[i].transpose() * v_xx * dyn.w_u[i];
      q_ux += dyn.w_u[i].transpose() * vwx;
      q_bar += 0.5 * dyn.w.col(i).dot(vw);
    }
    detail::require_finite(q_xx, "Q_bb", k);
    detail::require_finite(q_uu, "Q_uu", k);
    detail::require_finite(q_ux, "Q_bu", k);
    detail::require_finite(q_x, "Q_b", k);
    detail::require_finite(q_u, "Q_u", k);

    const MatrixXd q_uu_reg = 0.5 * (q_uu + q_uu.transpose()) + reg * MatrixXd::Identity(nu, nu);
    Eigen::LLT<MatrixXd> llt(q_uu_reg);
    if (llt.info() != Eigen::Success) {
      out.failed_step = k;
      return out;
    }
    const VectorXd ff = -llt.solve(q_u);
    const MatrixXd fb = -llt.solve(q_ux);
    out.feedforward[k] = ff;
    out.feedback[k] = fb;
    out.d1 += ff.dot(q_u);
    out.d2 += 0.5 * ff.dot(q_uu * ff);

    v_bar = q_bar + ff.dot(q_u) + 0.5 * ff.dot(q_uu * ff);
    v_x = q_x + fb.transpose() * q_uu * ff + fb.transpose() * q_u + q_ux.transpose() * ff;
    v_xx = q_xx + fb.transpose() * q_uu * fb + fb.transpose() * q_ux + q_ux.transpose() * fb;
    v_xx = 0.5 * (v_xx + v_xx.transpose());
  }
  out.value = v_bar;
  out.ok = true;
  return out;
}

struct ForwardPassResult {
  Trajectory trajectory;
  double cost = 0.0;
};

/// Applies the updated policy from x_0 with zero noise. Returns nothing for a non-finite rollout.
template <TrajectoryModel M>
std::optional<ForwardPassResult> forward_pass(const M& model, const Trajectory& nominal, const BackwardPassResult& gains,
                                              const ALState& al, double eps) {
  ForwardPassResult out;
  Trajectory& t = out.trajectory;
  const int horizon = nominal.horizon();
  t.states.reserve(horizon + 1);
  t.controls.reserve(horizon);
  t.states.push_back(nominal.states.front());
  try {
    for (int k = 0; k < horizon; ++k) {
      const VectorXd dx = t.states[k] - nominal.states[k];
      VectorXd u = nominal.controls[k] + eps * gains.feedforward[k] + gains.feedback[k] * dx;
      if (!u.allFinite()) return std::nullopt;
      VectorXd next = model.dynamics(t.states[k], u);
      if (!next.allFinite()) return std::nullopt;
      t.controls.push_back(std::move(u));
      t.states.push_back(std::move(next));
    }
    out.cost = augmented_cost(model, t, al);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (!std::isfinite(out.cost)) return std::nullopt;
  return out;
}

struct InnerResult {
  Trajectory trajectory;
  BackwardPassResult gains;  // gains of the last accepted step, rescaled by its line-search step
  bool converged = false;
  int iterations = 0;
  double cost = 0.0;
  std::vector<double> accepted_costs;
};

/// Iterates backward and forward passes with backtracking and Levenberg-Marquardt regularization.
template <TrajectoryModel M>
InnerResult inner_solve(const M& model, const Trajectory& warm_start, const ALState& al, const InnerOptions& opt = {}) {
  InnerResult res;
  res.trajectory = rollout(model, warm_start.states.front(), warm_start.controls);
  res.cost = augmented_cost(model, res.trajectory, al);
  res.accepted_costs.push_back(res.cost);
  double reg = opt.reg_init;
  bool have_gains = false;

  while (res.iterations < opt.max_iterations) {
    ++res.iterations;
    BackwardPassResult bp = backward_pass(model, res.trajectory, al, reg);
    if (!bp.ok) {
      reg *= opt.reg_increase;
      if (reg > opt.reg_max) break;
      continue;
    }
    if (!have_gains) {
      res.gains = bp;
      have_gains = true;
    }

    std::optional<ForwardPassResult> accepted;
    double eps = 1.0;
    for (int i = 0; i <= opt.max_backtracks; ++i, eps *= 0.5) {
      auto cand = forward_pass(model, res.trajectory, bp, al, eps);
      if (cand && cand->cost < res.cost) {
        accepted = std::move(cand);
        break;
      }
    }

    const double scale = std::max(1.0, std::abs(res.cost));
    if (!accepted) {
      if (bp.expected_reduction(1.0) < opt.relative_tolerance * scale) {
        for (auto& ff : bp.feedforward) ff.setZero();
        res.gains = std::move(bp);
        res.converged = true;
        break;
      }
      reg *= opt.reg_increase;
      if (reg > opt.reg_max) break;
      continue;
    }

    const double improvement = res.cost - accepted->cost;
    for (auto& ff : bp.feedforward) ff *= eps;
    res.gains = std::move(bp);
    res.trajectory = std::move(accepted->trajectory);
    res.cost = accepted->cost;
    res.accepted_costs.push_back(res.cost);
    reg = std::max(reg / opt.reg_decrease, opt.reg_min);
    if (improvement < opt.relative_tolerance * scale) {
      res.converged = true;
      break;
    }
  }
  if (!have_gains) {
    res.gains.feedforward.assign(res.trajectory.horizon(), VectorXd::Zero(model.control_dim()));
    res.gains.feedback.assign(res.trajectory.horizon(), MatrixXd::Zero(model.control_dim(), model.state_dim()));
  }
  return res;
}

/// Executing u_bar + feedback (x - x_bar) from x_0 without noise reproduces the nominal exactly.
inline Policy make_policy(const InnerResult& r) {
  Policy p;
  p.nominal_states = r.trajectory.states;
  p.nominal_controls = r.trajectory.controls;
  p.feedforward = r.gains.feedforward;
  p.feedback = r.gains.feedback;
  return p;
}

struct OuterIterationLog {
  double cost = 0.0;
  double augmented_cost = 0.0;
  double max_violation = 0.0;
  int inner_iterations = 0;
  bool inner_converged = false;
};

struct OuterResult {
  InnerResult inner;
  ALState al;
  MatrixXd psi;
  bool converged = false;
  bool feasible = false;
  int outer_iterations = 0;
  int inner_iterations = 0;
  std::vector<OuterIterationLog> history;
};

/// Outer augmented-Lagrangian loop. Constraint values are assumed dimensionless (already scaled).
template <TrajectoryModel M>
OuterResult outer_solve(const M& model, const Trajectory& initial, const ALSchedule& sched = {},
                        const InnerOptions& inner_opt = {}) {
  OuterResult res;
  const int j = model.constraint_count();
  const int rows = initial.horizon() + 1;
  const Trajectory start = rollout(model, initial.states.front(), initial.controls);

  if (j == 0) {
    res.al = ALState::uniform(0, 0, sched.lambda0, sched.mu0, 1.0);
    res.inner = inner_solve(model, start, res.al, inner_opt);
    res.psi = MatrixXd::Zero(rows, 0);
    res.converged = res.inner.converged;
    res.feasible = true;
    res.outer_iterations = 1;
    res.inner_iterations = res.inner.iterations;
    const double c = trajectory_cost(model, res.inner.trajectory);
    res.history.push_back({c, res.inner.cost, 0.0, res.inner.iterations, res.inner.converged});
    return res;
  }

  res.al = ALState::uniform(rows, j, sched.lambda0, sched.mu0, 1.0);
  const MatrixXd psi0 = constraint_values(model, start);
  for (int k = 0; k < rows; ++k)
    for (int i = 0; i < j; ++i) res.al.threshold(k, i) = std::max(1.0, psi0(k, i)) / sched.threshold_decay;

  Trajectory current = start;
  InnerOptions opt = inner_opt;
  while (res.outer_iterations < sched.max_outer) {
    ++res.outer_iterations;
    res.inner = inner_solve(model, current, res.al, opt);
    opt.relative_tolerance = std::max(opt.relative_tolerance * sched.inner_tolerance_decay, sched.min_inner_tolerance);
    res.inner_iterations += res.inner.iterations;
    current = res.inner.trajectory;
    res.psi = constraint_values(model, current);

    const double violation = std::max(0.0, res.psi.maxCoeff());
    const double cost = trajectory_cost(model, current);
    const double penalty = trajectory_penalty(model, current, res.al);
    res.history.push_back({cost, res.inner.cost, violation, res.inner.iterations, res.inner.converged});
    res.feasible = violation <= sched.feasibility_tolerance;
    if (res.feasible && std::abs(penalty) <= sched.penalty_tolerance * std::max(1.0, std::abs(cost))) {
      res.converged = true;
      break;
    }

    bool capped = false;
    for (int k = 0; k < rows; ++k) {
      for (int i = 0; i < j; ++i) {
        if (res.psi(k, i) < res.al.threshold(k, i)) {
          res.al.lambda(k, i) = updated_multiplier(res.al.lambda(k, i), res.al.mu(k, i), res.psi(k, i));
          res.al.threshold(k, i) /= sched.threshold_decay;
        } else {
          res.al.mu(k, i) = std::min(res.al.mu(k, i) * sched.mu_growth, sched.mu_max);
          if (res.al.mu(k, i) >= sched.mu_max) capped = true;
        }
      }
    }
    if (capped) break;
  }
  return res;
}

}  // namespace bsp
