#pragma once

#include "bsp/belief_dynamics.hpp"
#include "bsp/ilqg_al.hpp"
#include "bsp/objectives.hpp"

#include <cmath>
#include <vector>

namespace bsp {

/// A complete belief-space optimal control instance.
struct SolverProblem {
  BeliefModel belief_model;
  CostWeights weights;
  ConstraintSpec constraints;
  bool constrained = true;
  int horizon = 0;
  Belief initial_belief;
  std::vector<VectorXd> initial_controls;

  void validate() const {
    if (horizon < 2) throw Error("SolverProblem: horizon must be at least 2");
    if (static_cast<int>(initial_controls.size()) != horizon)
      throw Error("SolverProblem: need exactly one initial control per timestep");
    belief_model.motion.validate();
    belief_model.cam.validate();
    const int m = belief_model.control_dim();
    for (const VectorXd& u : initial_controls)
      if (u.size() != m) throw Error("SolverProblem: initial control dimension does not match the motion model");
    weights.validate(m);
    if (initial_belief.mean.size() != kStateDim || initial_belief.cov_vech.size() != vech_size(kStateDim))
      throw Error("SolverProblem: initial belief must be 3-dimensional");
    if (constraints.count() > 0 && constraints.selector.cols() != belief_model.belief_dim())
      throw Error("SolverProblem: constraint selector width must equal the belief dimension");
  }

  /// Constraints the solver actually enforces.
  const ConstraintSpec& active_constraints() const {
    static const ConstraintSpec none{MatrixXd::Zero(0, belief_dim(kStateDim)), VectorXd::Zero(0)};
    return constrained ? constraints : none;
  }
};

/// Constant-velocity controls from the start mean to the goal over the horizon.
inline std::vector<VectorXd> straight_line_controls(const MotionModel& motion, const StateVector& start,
                                                    const StateVector& goal, int horizon) {
  const double t = motion.dt * horizon;
  VectorXd u(motion.input_dim());
  if (motion.kind == MotionKind::holonomic) {
    u = (goal - start) / t;
  } else {
    u(0) = (goal.head<2>() - start.head<2>()).norm() / t;
    u(1) = (goal(2) - start(2)) / t;
  }
  return std::vector<VectorXd>(horizon, u);
}

/// Gradient of the collision term with respect to the stacked belief.
inline VectorXd collision_gradient(const Belief& b, const CostWeights& w, const FeatureMap& map) {
  const int n = b.state_dim();
  VectorXd g = VectorXd::Zero(b.dim());
  if (w.s_c == 0.0 || map.obstacles.empty()) return g;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(b.covariance());
  const Eigen::Index top = n - 1;
  const double lmax = std::max(es.eigenvalues()(top), 1e-300);
  const VectorXd v = es.eigenvectors().col(top);
  double d_lambda = 0.0;
  for (const Obstacle& o : map.obstacles) {
    const Eigen::Vector2d diff = b.mean.head<2>() - o.center;
    const double rho = diff.norm();
    const double e = w.s_c * std::exp(-(rho - o.radius) / lmax);
    if (rho > 0.0) g.head<2>() += -e / (lmax * rho) * diff;
    d_lambda += e * (rho - o.radius) / (lmax * lmax);
  }
  for (int c = 0; c < n; ++c)
    for (int r = c; r < n; ++r) g(n + vech_index(n, r, c)) += d_lambda * v(r) * v(c) * (r == c ? 1.0 : 2.0);
  return g;
}

/// Adapts a SolverProblem to the generic trajectory optimizer. Constraints are divided by their
/// bounds so the augmented-Lagrangian schedule works on dimensionless violations.
class BeliefPlanningModel {
 public:
  explicit BeliefPlanningModel(const SolverProblem& p) : p_(p), spec_(p.active_constraints()) {}

  int state_dim() const { return p_.belief_model.belief_dim(); }
  int control_dim() const { return p_.belief_model.control_dim(); }
  int horizon() const { return p_.horizon; }
  const SolverProblem& problem() const { return p_; }

  Belief belief(const VectorXd& x) const { return Belief::from_stacked(x, kStateDim); }

  VectorXd dynamics(const VectorXd& x, const VectorXd& u) const {
    return propagate(p_.belief_model, belief(x), u).stacked();
  }

  DynamicsExpansion expand_dynamics(int, const VectorXd& x, const VectorXd& u) const {
    BeliefJacobians j = belief_jacobians(p_.belief_model, belief(x), u);
    return {std::move(j.g_b), std::move(j.g_u), std::move(j.w), std::move(j.w_b), std::move(j.w_u)};
  }

  double stage_cost(int, const VectorXd& x, const VectorXd& u) const {
    return bsp::stage_cost(belief(x), u, p_.weights, p_.belief_model.map);
  }

  CostExpansion expand_stage_cost(int, const VectorXd& x, const VectorXd& u) const {
    const Belief b = belief(x);
    const CostWeights& w = p_.weights;
    CostExpansion e;
    e.value = bsp::stage_cost(b, u, w, p_.belief_model.map);
    e.c_x = information_gradient();
    e.c_xx = MatrixXd::Zero(state_dim(), state_dim());
    add_collision(x, e);
    e.c_u = 2.0 * w.S_u.cwiseProduct(u);
    e.c_uu = MatrixXd(2.0 * w.S_u.asDiagonal());
    e.c_ux = MatrixXd::Zero(control_dim(), state_dim());
    return e;
  }

  double terminal_cost(const VectorXd& x) const { return bsp::terminal_cost(belief(x), p_.weights); }

  CostExpansion expand_terminal_cost(const VectorXd& x) const {
    const Belief b = belief(x);
    const CostWeights& w = p_.weights;
    CostExpansion e;
    e.value = bsp::terminal_cost(b, w);
    e.c_x = information_gradient();
    e.c_x.head(kStateDim) += -2.0 * w.S_K.cwiseProduct(goal_error(b, w));
    e.c_xx = MatrixXd::Zero(state_dim(), state_dim());
    e.c_xx.topLeftCorner(kStateDim, kStateDim) = MatrixXd(2.0 * w.S_K.asDiagonal());
    return e;
  }

  int constraint_count() const { return spec_.count(); }

  VectorXd constraints(int, const VectorXd& x) const {
    return (spec_.selector * x - spec_.bounds).cwiseQuotient(spec_.bounds);
  }

  MatrixXd constraint_jacobian(int, const VectorXd&) const {
    return spec_.bounds.cwiseInverse().asDiagonal() * spec_.selector;
  }

 private:
  VectorXd information_gradient() const {
    VectorXd g = VectorXd::Zero(state_dim());
    for (int i = 0; i < kStateDim; ++i) g(kStateDim + vech_index(kStateDim, i, i)) = p_.weights.S_I(i);
    return g;
  }

  void add_collision(const VectorXd& x, CostExpansion& e) const {
    const CostWeights& w = p_.weights;
    const FeatureMap& map = p_.belief_model.map;
    if (w.s_c == 0.0 || map.obstacles.empty()) return;
    auto grad = [&](const VectorXd& z) -> VectorXd { return collision_gradient(belief(z), w, map); };
    e.c_x += grad(x);
    const MatrixXd h = numeric_jacobian(grad, x);
    e.c_xx += 0.5 * (h + h.transpose());
  }

  const SolverProblem& p_;
  ConstraintSpec spec_;
};

/// Outcome of a constrained solve. Violations are absolute (variance units).
struct SolveReport {
  bool converged = false;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double final_cost = 0.0;
  double final_augmented_cost = 0.0;
  VectorXd max_violation_per_constraint;
  bool feasible = false;
  std::vector<OuterIterationLog> history;
};

struct SolveResult {
  Policy policy;
  SolveReport report;
  ALState al;
  MatrixXd constraint_values;  // (K+1) x J, absolute, against the problem's bounds
};

/// Constraint values of a nominal policy against a spec, absolute, (K+1) x J.
inline MatrixXd planned_constraint_values(const Policy& policy, const ConstraintSpec& spec) {
  MatrixXd psi(policy.nominal_states.size(), spec.count());
  for (std::size_t k = 0; k < policy.nominal_states.size(); ++k)
    if (spec.count() > 0) psi.row(static_cast<Eigen::Index>(k)) = (spec.selector * policy.nominal_states[k] - spec.bounds).transpose();
  return psi;
}

/// Solves the problem with iLQG-AL (or plain iLQG when unconstrained).
inline SolveResult solve(const SolverProblem& problem, const ALSchedule& sched = {}, const InnerOptions& inner = {}) {
  problem.validate();
  const BeliefPlanningModel model(problem);
  Trajectory init;
  init.states.push_back(problem.initial_belief.stacked());
  init.controls = problem.initial_controls;
  OuterResult r = outer_solve(model, init, sched, inner);

  SolveResult out;
  out.policy = make_policy(r.inner);
  out.al = r.al;
  out.constraint_values = planned_constraint_values(out.policy, problem.constraints);
  SolveReport& rep = out.report;
  rep.converged = r.converged;
  rep.outer_iterations = r.outer_iterations;
  rep.inner_iterations = r.inner_iterations;
  rep.final_cost = trajectory_cost(model, r.inner.trajectory);
  rep.final_augmented_cost = r.inner.cost;
  rep.history = r.history;
  const int j = problem.constraints.count();
  rep.max_violation_per_constraint = VectorXd::Zero(j);
  rep.feasible = true;
  for (int i = 0; i < j; ++i) {
    const double worst = out.constraint_values.col(i).maxCoeff();
    rep.max_violation_per_constraint(i) = std::max(0.0, worst);
    if (worst > sched.feasibility_tolerance * problem.constraints.bounds(i)) rep.feasible = false;
  }
  return out;
}

/// Unaugmented cost of open-loop controls rolled out through a problem's belief dynamics.
inline double evaluate_controls(const SolverProblem& problem, const std::vector<VectorXd>& controls) {
  const BeliefPlanningModel model(problem);
  return trajectory_cost(model, rollout(model, problem.initial_belief.stacked(), controls));
}

}  // namespace bsp
