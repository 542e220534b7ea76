#pragma once

#include "bsp/belief_dynamics.hpp"
#include "bsp/planner.hpp"

#include <algorithm>
#include <cstdint>
#include <random>
#include <thread>
#include <vector>

namespace bsp {

/// How features are detected during execution.
///  - bernoulli: each feature is matched with its visibility probability and measured under unscaled R.
///  - expected: the estimator runs the planner's belief update (R scaled by 1/p) on every active feature.
enum class DetectionModel { bernoulli, expected };

struct ExecutionOptions {
  bool sample_noise = true;
  DetectionModel detection = DetectionModel::bernoulli;
};

struct ExecutionTrace {
  std::uint64_t seed = 0;
  std::vector<StateVector> true_states;
  std::vector<Belief> estimated_beliefs;
  std::vector<VectorXd> applied_controls;
  std::vector<StateVector> estimation_errors;  // x - x_hat, heading wrapped
  std::vector<Eigen::Vector3d> planned_3sigma;
  std::vector<Eigen::Vector3d> realized_3sigma;
  std::vector<int> detected_features;  // per step k = 1..K
  bool diverged = false;
};

struct MonteCarloSummary {
  int runs = 0;
  int diverged_runs = 0;
  std::uint64_t base_seed = 0;
  std::vector<int> violation_counts;  // per constraint
  std::vector<int> planned_violation_counts;
  Eigen::Vector3d within_3sigma_fraction = Eigen::Vector3d::Zero();
  double mean_final_goal_error = 0.0;
  long samples_per_axis = 0;
};

inline Eigen::Vector3d three_sigma(const Belief& b) {
  const MatrixXd c = b.covariance();
  return 3.0 * c.diagonal().cwiseMax(0.0).cwiseSqrt();
}

namespace detail {

struct GaussianSampler {
  std::mt19937_64 rng;
  std::normal_distribution<double> normal{0.0, 1.0};
  std::uniform_real_distribution<double> uniform{0.0, 1.0};

  explicit GaussianSampler(std::uint64_t seed) : rng(seed) {}

  VectorXd standard(Eigen::Index n) {
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
    return v;
  }
  VectorXd draw(const MatrixXd& cov) { return psd_sqrt(cov) * standard(cov.rows()); }
};

}  // namespace detail

/// Runs the policy once in closed loop against a simulated robot and camera.
inline ExecutionTrace execute_once(const SolverProblem& problem, const Policy& policy, std::uint64_t seed,
                                   const ExecutionOptions& opt = {}) {
  if (policy.horizon() != problem.horizon) throw Error("execute_once: policy horizon does not match the problem");
  const BeliefModel& bm = problem.belief_model;
  const CameraParams& cam = bm.cam;
  detail::GaussianSampler rng(seed);
  ExecutionTrace tr;
  tr.seed = seed;

  Belief est = problem.initial_belief;
  StateVector x = est.mean;
  if (opt.sample_noise) x += rng.draw(est.covariance());
  tr.true_states.push_back(x);
  tr.estimated_beliefs.push_back(est);

  auto record = [&](int k) {
    StateVector e = x - StateVector(est.mean);
    e(2) = wrap_angle(e(2));
    tr.estimation_errors.push_back(e);
    tr.planned_3sigma.push_back(three_sigma(Belief::from_stacked(policy.nominal_states[k], kStateDim)));
    tr.realized_3sigma.push_back(three_sigma(est));
  };
  record(0);

  const double pixel_var = cam.pixel_noise_std * cam.pixel_noise_std;
  for (int k = 0; k < problem.horizon; ++k) {
    try {
      const VectorXd u = policy.nominal_controls[k] + policy.feedback[k] * (est.stacked() - policy.nominal_states[k]);
      VectorXd v = VectorXd::Zero(bm.control_dim());
      if (opt.sample_noise) v = rng.draw(bm.motion.process_noise_cov);
      x = step(bm.motion, x, u, v);

      LinearizedStep lin;
      VectorXd z;
      int detected = 0;
      if (opt.detection == DetectionModel::expected) {
        lin = bm.linearize(est, u);
        const std::vector<int> ids = bm.active_set(est, u);
        z.resize(2 * static_cast<Eigen::Index>(ids.size()));
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const Feature& f = find_feature(bm.map, ids[i]);
          Eigen::Vector2d zi = project_stereo(world_to_camera(x, f.position), cam);
          if (opt.sample_noise) zi += rng.standard(2).cwiseProduct(lin.R.diagonal().segment<2>(2 * i).cwiseSqrt());
          z.segment<2>(2 * static_cast<Eigen::Index>(i)) = zi;
        }
        detected = static_cast<int>(ids.size());
      } else {
        const StateVector x_est(est.mean);
        lin.predicted_mean = step(bm.motion, x_est, u);
        lin.F = bm.motion_state_jacobian(x_est, u);
        const MatrixXd fv = bm.motion_noise_jacobian(x_est);
        lin.Q_state = fv * bm.motion.process_noise_cov * fv.transpose();
        std::vector<Eigen::Vector2d> zs;
        std::vector<Eigen::Matrix<double, 2, 3>> hs;
        const StateVector pred(lin.predicted_mean);
        for (const Feature& f : bm.map.features) {
          const double p = visibility_prob(x, f, cam);
          const double draw = rng.uniform(rng.rng);
          if (p <= 0.0 || draw >= p) continue;
          if (world_to_camera(x, f.position).y() <= kMinDepth) continue;
          if (world_to_camera(pred, f.position).y() <= kActiveDepth) continue;
          Eigen::Vector2d zi = project_stereo(world_to_camera(x, f.position), cam);
          if (opt.sample_noise) zi += cam.pixel_noise_std * rng.standard(2);
          zs.push_back(zi - project_stereo(world_to_camera(pred, f.position), cam));
          hs.push_back(stereo_jacobian(pred, f.position, cam));
        }
        detected = static_cast<int>(zs.size());
        z.resize(2 * detected);
        lin.H.resize(2 * detected, 3);
        for (int i = 0; i < detected; ++i) {
          z.segment<2>(2 * i) = zs[i];
          lin.H.block<2, 3>(2 * i, 0) = hs[i];
        }
        lin.R = pixel_var * MatrixXd::Identity(2 * detected, 2 * detected);
      }

      const EkfStep ekf = ekf_covariance_step(lin, est.covariance());
      VectorXd mean = lin.predicted_mean;
      if (detected > 0) {
        VectorXd innovation = z;
        if (opt.detection == DetectionModel::expected) {
          const Measurement pred = measurement_for(StateVector(lin.predicted_mean), bm.map, cam,
                                                   bm.active_set(est, u), bm.p_min, bm.visibility);
          innovation = z - pred.z;
        }
        mean += ekf.gain * innovation;
      }
      Belief next;
      next.mean = mean;
      next.cov_vech = vech(ekf.cov, 1e-9);
      if (!next.mean.allFinite() || !next.cov_vech.allFinite()) throw Error("estimator produced non-finite belief");
      est = next;
      tr.applied_controls.push_back(u);
      tr.detected_features.push_back(detected);
      tr.true_states.push_back(x);
      tr.estimated_beliefs.push_back(est);
      record(k + 1);
    } catch (const Error&) {
      tr.diverged = true;
      break;
    }
  }
  return tr;
}

/// Aggregates execute_once over seeds base_seed .. base_seed + n_runs - 1. Violations are counted on
/// the estimator covariance against audit bounds, one count per (run, timestep, constraint).
inline MonteCarloSummary monte_carlo(const SolverProblem& problem, const Policy& policy, int n_runs,
                                     std::uint64_t base_seed, const ConstraintSpec& audit,
                                     const ExecutionOptions& opt = {}, double tolerance = 1e-6,
                                     unsigned workers = 0) {
  if (n_runs < 1) throw Error("monte_carlo: n_runs must be at least 1");
  if (policy.horizon() != problem.horizon) throw Error("monte_carlo: policy horizon does not match the problem");
  std::vector<ExecutionTrace> traces(static_cast<std::size_t>(n_runs));
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(n_runs));
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int r = static_cast<int>(w); r < n_runs; r += static_cast<int>(workers))
          traces[static_cast<std::size_t>(r)] = execute_once(problem, policy, base_seed + static_cast<std::uint64_t>(r), opt);
      });
    }
  }

  MonteCarloSummary s;
  s.runs = n_runs;
  s.base_seed = base_seed;
  const int j = audit.count();
  s.violation_counts.assign(static_cast<std::size_t>(j), 0);
  s.planned_violation_counts.assign(static_cast<std::size_t>(j), 0);
  for (const VectorXd& b : policy.nominal_states)
    for (int i = 0; i < j; ++i)
      if (audit.selector.row(i).dot(b) - audit.bounds(i) > tolerance * audit.bounds(i)) ++s.planned_violation_counts[i];

  Eigen::Vector3d inside = Eigen::Vector3d::Zero();
  double goal_err = 0.0;
  int finished = 0;
  for (const ExecutionTrace& tr : traces) {
    if (tr.diverged) ++s.diverged_runs;
    for (std::size_t k = 0; k < tr.estimation_errors.size(); ++k) {
      for (int a = 0; a < 3; ++a)
        if (std::abs(tr.estimation_errors[k](a)) <= tr.planned_3sigma[k](a)) inside(a) += 1.0;
      ++s.samples_per_axis;
      const VectorXd b = tr.estimated_beliefs[k].stacked();
      for (int i = 0; i < j; ++i)
        if (audit.selector.row(i).dot(b) - audit.bounds(i) > tolerance * audit.bounds(i)) ++s.violation_counts[i];
    }
    if (!tr.diverged) {
      goal_err += (tr.true_states.back().head<2>() - problem.weights.goal.head<2>()).norm();
      ++finished;
    }
  }
  if (s.samples_per_axis > 0) s.within_3sigma_fraction = inside / static_cast<double>(s.samples_per_axis);
  s.mean_final_goal_error = finished > 0 ? goal_err / finished : 0.0;
  return s;
}

}  // namespace bsp
