#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace bsp;

namespace {

struct Planned {
  SolverProblem problem;
  SolveResult result;
};

const Planned& planned() {
  static const Planned p = [] {
    Planned out{to_problem(test::short_scenario()), {}};
    out.result = solve(out.problem);
    return out;
  }();
  return p;
}

}  // namespace

TEST(Execute, NoiselessExpectedDetectionReproducesPlan) {
  const Planned& p = planned();
  const ExecutionTrace t = execute_once(p.problem, p.result.policy, 5, {false, DetectionModel::expected});
  ASSERT_FALSE(t.diverged);
  ASSERT_EQ(t.true_states.size(), p.result.policy.nominal_states.size());
  for (std::size_t k = 0; k < t.true_states.size(); ++k) {
    const VectorXd& nominal = p.result.policy.nominal_states[k];
    EXPECT_LT((t.true_states[k] - nominal.head(3)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_EQ(t.estimated_beliefs[k].cov_vech, nominal.tail(6)) << "k " << k;
  }
}

TEST(Execute, SameSeedIsBitIdentical) {
  const Planned& p = planned();
  const ExecutionTrace a = execute_once(p.problem, p.result.policy, 99);
  const ExecutionTrace b = execute_once(p.problem, p.result.policy, 99);
  const ExecutionTrace c = execute_once(p.problem, p.result.policy, 100);
  ASSERT_EQ(a.true_states.size(), b.true_states.size());
  for (std::size_t k = 0; k < a.true_states.size(); ++k) {
    EXPECT_EQ(a.true_states[k], b.true_states[k]);
    EXPECT_EQ(a.estimated_beliefs[k], b.estimated_beliefs[k]);
  }
  EXPECT_NE(a.true_states.back(), c.true_states.back());
}

TEST(Execute, TraceLengthsAndPsd) {
  const Planned& p = planned();
  const ExecutionTrace t = execute_once(p.problem, p.result.policy, 3);
  const std::size_t n = static_cast<std::size_t>(p.problem.horizon) + 1;
  EXPECT_EQ(t.true_states.size(), n);
  EXPECT_EQ(t.estimated_beliefs.size(), n);
  EXPECT_EQ(t.estimation_errors.size(), n);
  EXPECT_EQ(t.planned_3sigma.size(), n);
  EXPECT_EQ(t.realized_3sigma.size(), n);
  EXPECT_EQ(t.applied_controls.size(), n - 1);
  for (const Belief& b : t.estimated_beliefs) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(b.covariance());
    EXPECT_GE(es.eigenvalues().minCoeff(), -kPsdTolerance);
  }
}

TEST(Execute, HorizonMismatchThrows) {
  const Planned& p = planned();
  Policy shorter = p.result.policy;
  shorter.nominal_controls.pop_back();
  EXPECT_THROW(execute_once(p.problem, shorter, 1), Error);
  EXPECT_THROW(monte_carlo(p.problem, shorter, 2, 1, p.problem.constraints), Error);
}

TEST(MonteCarlo, SingleRunMatchesExecuteOnce) {
  const Planned& p = planned();
  const MonteCarloSummary s = monte_carlo(p.problem, p.result.policy, 1, 42, p.problem.constraints);
  const ExecutionTrace t = execute_once(p.problem, p.result.policy, 42);
  EXPECT_EQ(s.runs, 1);
  EXPECT_EQ(s.samples_per_axis, static_cast<long>(t.estimation_errors.size()));
  for (int a = 0; a < 3; ++a) {
    int inside = 0;
    for (std::size_t k = 0; k < t.estimation_errors.size(); ++k) inside += std::abs(t.estimation_errors[k](a)) <= t.planned_3sigma[k](a);
    EXPECT_DOUBLE_EQ(s.within_3sigma_fraction(a), static_cast<double>(inside) / t.estimation_errors.size());
  }
  EXPECT_DOUBLE_EQ(s.mean_final_goal_error, (t.true_states.back().head<2>() - p.problem.weights.goal.head<2>()).norm());
}

TEST(MonteCarlo, WorkerCountDoesNotChangeResult) {
  const Planned& p = planned();
  const MonteCarloSummary a = monte_carlo(p.problem, p.result.policy, 20, 7, p.problem.constraints, {}, 1e-6, 1);
  const MonteCarloSummary b = monte_carlo(p.problem, p.result.policy, 20, 7, p.problem.constraints, {}, 1e-6, 3);
  EXPECT_EQ(a.violation_counts, b.violation_counts);
  EXPECT_EQ(a.within_3sigma_fraction, b.within_3sigma_fraction);
  EXPECT_EQ(a.mean_final_goal_error, b.mean_final_goal_error);
  for (int i = 0; i < 3; ++i) {
    EXPECT_GE(a.within_3sigma_fraction(i), 0.0);
    EXPECT_LE(a.within_3sigma_fraction(i), 1.0);
  }
}

TEST(MonteCarlo, FeasiblePlanHasNoPlannedViolations) {
  const Planned& p = planned();
  ASSERT_TRUE(p.result.report.feasible);
  const MonteCarloSummary s = monte_carlo(p.problem, p.result.policy, 5, 1, p.problem.constraints);
  for (int c : s.planned_violation_counts) EXPECT_EQ(c, 0);
  EXPECT_EQ(s.diverged_runs, 0);
}

TEST(MonteCarlo, ZeroRunsRejected) {
  const Planned& p = planned();
  EXPECT_THROW(monte_carlo(p.problem, p.result.policy, 0, 1, p.problem.constraints), Error);
}
