#include <gtest/gtest.h>

#include <Eigen/Cholesky>
#include <cmath>
#include <string>

#include "rtk/driver.hpp"
#include "rtk/errors.hpp"
#include "rtk/linop.hpp"

using namespace rtk;

namespace {

struct System {
  std::shared_ptr<const LinearOperator> op;
  Matrix a;
  Vector b;
  Vector x_star;
};

System spd_system(Index n, double density, double diag, std::uint64_t seed) {
  const CsrMatrix m = gen_sparse_spd(n, density, diag, seed);
  System s;
  s.a = m.to_dense();
  s.op = std::make_shared<CsrMatrix>(m);
  s.b = gen_rhs(n, seed + 1000);
  s.x_star = s.a.llt().solve(s.b);
  return s;
}

Problem make_problem(const System& s, Method method = Method::CG, double tol = 1e-10) {
  Problem p;
  p.op = s.op;
  p.b = s.b;
  p.x0 = Vector::Zero(s.b.size());
  p.x_star = s.x_star;
  p.method = method;
  p.tol = tol;
  p.maxit = 5000;
  return p;
}

// Upper 99.9% chi-squared quantile, Wilson-Hilferty approximation.
double chi2_q999(int df) {
  const double z = 3.090232;
  const double k = df;
  return k * std::pow(1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k)), 3);
}

}  // namespace

TEST(RandomizedSolve, DeterministicLimitIsBitIdentical) {
  const System s = spd_system(40, 0.2, 3.0, 1);
  const Vector x0 = Vector::Zero(40);
  for (Method m : {Method::CG, Method::CR, Method::GMRES}) {
    const DeterministicResult det = solve_deterministic(*s.op, s.b, x0, m, 1e-10, 1000);
    for (const EstimatorSpec& est : {EstimatorSpec{AsConfig(1e6)}, EstimatorSpec{DeterministicEstimator{}},
                                     EstimatorSpec{RrConfig{100000, 0.5}}}) {
      Rng rng(3);
      const RandomizedSolveResult r = randomized_solve(*s.op, s.b, x0, m, est, 1e-10, 1000, rng);
      EXPECT_FALSE(r.truncated);
      EXPECT_TRUE(r.diagnostics.flushed);
      EXPECT_EQ(r.executed_iterations, det.iterations);
      for (double w : r.weights_applied) EXPECT_EQ(w, 1.0);
      EXPECT_TRUE(r.estimate == det.x) << to_string(m);
    }
  }
}

TEST(RandomizedSolve, ReplayMatchesLive) {
  const System s = spd_system(60, 0.1, 4.0, 2);
  const Vector x0 = Vector::Zero(60);
  const Trajectory traj = record_trajectory(*s.op, s.b, x0, Method::CG, 1e-10, 1000);
  ASSERT_TRUE(traj.converged);
  for (const EstimatorSpec& est : {EstimatorSpec{AsConfig(3.5)}, EstimatorSpec{AsConfig(-0.7)},
                                   EstimatorSpec{RrConfig{5, 0.1}}}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng a(seed), b(seed);
      const RandomizedSolveResult live = randomized_solve(*s.op, s.b, x0, Method::CG, est, 1e-10, 1000, a);
      const RandomizedSolveResult replay = replay_solve(traj, est, b);
      ASSERT_EQ(live.executed_iterations, replay.executed_iterations);
      EXPECT_EQ(live.truncated, replay.truncated);
      EXPECT_TRUE(live.estimate == replay.estimate);
      EXPECT_EQ(live.weights_applied, replay.weights_applied);
    }
  }
}

TEST(RandomizedSolve, WeightsAreReciprocalSurvival) {
  const System s = spd_system(50, 0.2, 3.0, 4);
  const Trajectory traj = record_trajectory(*s.op, s.b, Vector::Zero(50), Method::CG, 1e-10, 1000);
  for (const EstimatorSpec& est : {EstimatorSpec{AsConfig(2.3)}, EstimatorSpec{RrConfig{3, 0.2}}}) {
    const TruncationSchedule sched = realized_schedule(traj, est);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      Rng rng(seed);
      const RandomizedSolveResult r = replay_solve(traj, est, rng);
      ASSERT_EQ(static_cast<int>(r.weights_applied.size()), r.executed_iterations);
      Vector expect = Vector::Zero(50);
      for (int k = 0; k < r.executed_iterations; ++k) {
        EXPECT_GE(r.weights_applied[k], 1.0);
        EXPECT_NEAR(r.weights_applied[k], 1.0 / sched.survival(k), 1e-12 * r.weights_applied[k]);
        expect += r.weights_applied[k] * traj.records[k].delta_x;
      }
      EXPECT_LE((r.estimate - expect).norm(), 1e-10 * std::max(1.0, expect.norm()));
    }
  }
}

TEST(RandomizedSolve, MaxIterationsThrows) {
  const System s = spd_system(80, 0.2, 2.0, 5);
  Rng rng(1);
  EXPECT_THROW(randomized_solve(*s.op, s.b, Vector::Zero(80), Method::CG, AsConfig(50.0), 1e-12, 3, rng),
               MaxIterationsError);
}

TEST(RunTrials, SingleTrialEqualsSingleSolve) {
  const System s = spd_system(30, 0.2, 3.0, 6);
  const Problem p = make_problem(s);
  const TrialStatistics st = run_trials(p, AsConfig(1.5), 1, 77);
  const Trajectory traj = record_trajectory(*s.op, s.b, p.x0, Method::CG, p.tol, p.maxit);
  Rng rng(77, trial_stream(77, 0));
  const RandomizedSolveResult r = replay_solve(traj, AsConfig(1.5), rng);
  EXPECT_EQ(st.trials, 1);
  EXPECT_TRUE(st.mean_estimate == r.estimate);
  EXPECT_EQ(st.avg_iterations, r.executed_iterations);
  const Vector e = r.estimate - s.x_star;
  EXPECT_NEAR(st.mean_sq_error_metric, e.dot(s.a * e), 1e-12 * std::max(1.0, e.dot(s.a * e)));
  EXPECT_EQ(st.coord_variance.norm(), 0.0);
}

TEST(RunTrials, IndependentOfWorkerCount) {
  const System s = spd_system(60, 0.2, 3.0, 7);
  for (TrialMode mode : {TrialMode::Replay, TrialMode::Live}) {
    TrialOptions one{1, mode};
    TrialOptions four{4, mode};
    const TrialStatistics a = run_trials(make_problem(s), AsConfig(4.25), 1000, 9, one);
    const TrialStatistics b = run_trials(make_problem(s), AsConfig(4.25), 1000, 9, four);
    EXPECT_TRUE(a.mean_estimate == b.mean_estimate);
    EXPECT_EQ(a.mean_sq_error_metric, b.mean_sq_error_metric);
    EXPECT_EQ(a.strict_variance, b.strict_variance);
    EXPECT_EQ(a.avg_iterations, b.avg_iterations);
    EXPECT_EQ(a.std_err_iterations, b.std_err_iterations);
    EXPECT_EQ(a.iteration_counts, b.iteration_counts);
  }
}

TEST(RunTrials, ReplayAndLiveAgree) {
  const System s = spd_system(40, 0.2, 3.0, 8);
  const TrialStatistics a = run_trials(make_problem(s), RrConfig{2, 0.15}, 500, 3, {1, TrialMode::Replay});
  const TrialStatistics b = run_trials(make_problem(s), RrConfig{2, 0.15}, 500, 3, {1, TrialMode::Live});
  EXPECT_TRUE(a.mean_estimate == b.mean_estimate);
  EXPECT_EQ(a.iteration_counts, b.iteration_counts);
}

TEST(RunTrials, TruncationIndexDistributionMatchesSchedule) {
  const System s = spd_system(20, 0.3, 2.0, 10);
  const Problem p = make_problem(s, Method::CG, 1e-12);
  const Trajectory traj = record_trajectory(*s.op, s.b, p.x0, p.method, p.tol, p.maxit);
  for (const EstimatorSpec& est : {EstimatorSpec{AsConfig(1.5)}, EstimatorSpec{RrConfig{2, 0.3}}}) {
    const TruncationSchedule sched = realized_schedule(traj, est);
    const std::int64_t trials = 100000;
    const TrialStatistics st = run_trials(p, est, trials, 12);
    // Pool adjacent indices until each bin expects at least 5 hits.
    double chi2 = 0.0, exp_bin = 0.0, obs_bin = 0.0;
    int bins = 0;
    for (int j = 0; j <= sched.horizon(); ++j) {
      exp_bin += trials * sched.prob(j);
      const auto it = st.iteration_counts.find(j);
      obs_bin += it == st.iteration_counts.end() ? 0.0 : static_cast<double>(it->second);
      if (exp_bin >= 5.0 || j == sched.horizon()) {
        if (exp_bin > 0.0) {
          chi2 += (obs_bin - exp_bin) * (obs_bin - exp_bin) / exp_bin;
          ++bins;
        } else {
          EXPECT_EQ(obs_bin, 0.0);
        }
        exp_bin = obs_bin = 0.0;
      }
    }
    ASSERT_GE(bins, 3);
    EXPECT_LT(chi2, chi2_q999(bins - 1));
  }
}

TEST(RunTrials, UnbiasedAndCostMatches) {
  const System s = spd_system(100, 0.2, 8.0, 13);
  const Problem p = make_problem(s);
  const Trajectory traj = record_trajectory(*s.op, s.b, p.x0, p.method, p.tol, p.maxit);
  const auto t = traj.improvements();
  for (std::size_t j = 1; j < t.size(); ++j) ASSERT_LT(t[j], t[j - 1]) << "improvements must diminish";
  const double eta = 0.4 * static_cast<double>(traj.records.size());
  const AsConfig est(eta);
  const std::int64_t trials = 50000;

  // Independent accumulation of the per-trial estimates.
  Vector sum = Vector::Zero(100), sum_sq = Vector::Zero(100);
  double err_sq_sum = 0.0;
  for (std::int64_t i = 0; i < trials; ++i) {
    Rng rng(21, trial_stream(21, static_cast<std::uint64_t>(i)));
    const RandomizedSolveResult r = replay_solve(traj, est, rng);
    sum += r.estimate;
    sum_sq += r.estimate.cwiseProduct(r.estimate);
    const Vector e = r.estimate - s.x_star;
    err_sq_sum += e.dot(s.a * e);
  }
  const double n_trials = static_cast<double>(trials);
  const Vector mean = sum / n_trials;
  // Under unbiasedness E||mean - x*||_A^2 = E||x - E x||_A^2 / trials, which
  // E||x - x*||_A^2 / trials bounds from above.
  const Vector bias = mean - s.x_star;
  EXPECT_LE(std::sqrt(bias.dot(s.a * bias)), 3.0 * std::sqrt(err_sq_sum / n_trials / n_trials));
  const Vector var = (sum_sq / n_trials - mean.cwiseProduct(mean)) * n_trials / (n_trials - 1.0);
  const Vector z = bias.cwiseQuotient((var / n_trials).cwiseSqrt());
  EXPECT_LT(z.cwiseAbs().maxCoeff(), 4.0);

  const TrialStatistics st = run_trials(p, est, trials, 21);
  EXPECT_LE((st.mean_estimate - mean).norm(), 1e-10 * mean.norm());
  EXPECT_NEAR(st.mean_sq_error_metric, err_sq_sum / n_trials, 1e-9 * st.mean_sq_error_metric);
  EXPECT_LE(std::abs(st.avg_iterations - expected_iterations(traj, est)), 3.0 * st.std_err_iterations);
}

TEST(RunTrials, DoublingTrialsIsConsistent) {
  const System s = spd_system(60, 0.2, 3.0, 14);
  const Problem p = make_problem(s);
  const TrialStatistics a = run_trials(p, AsConfig(5.5), 4000, 31);
  const TrialStatistics b = run_trials(p, AsConfig(5.5), 8000, 31);
  const double pooled = std::hypot(a.std_err_iterations, b.std_err_iterations);
  EXPECT_LT(std::abs(a.avg_iterations - b.avg_iterations), 3.0 * pooled);
}

TEST(RunTrials, ErrorsCarryTrialIndex) {
  const System s = spd_system(80, 0.2, 2.0, 15);
  Problem p = make_problem(s, Method::CG, 1e-12);
  p.maxit = 3;
  try {
    run_trials(p, AsConfig(50.0), 10, 1, {1, TrialMode::Live});
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("trial 0"), std::string::npos) << e.what();
  }
  EXPECT_THROW(run_trials(make_problem(s), AsConfig(1.0), 0, 1), ValidationError);
}

TEST(VarianceCurve, SingleRowMatchesRunTrials) {
  const System s = spd_system(40, 0.2, 3.0, 16);
  const Problem p = make_problem(s);
  const auto curve = variance_curve(p, {AsConfig(2.5)}, 300, 5);
  ASSERT_EQ(curve.size(), 1u);
  const TrialStatistics st = run_trials(p, AsConfig(2.5), 300, 5);
  EXPECT_EQ(curve[0].stats.avg_iterations, st.avg_iterations);
  EXPECT_EQ(curve[0].stats.mean_sq_error_metric, st.mean_sq_error_metric);
}

TEST(VarianceCurve, AverageIterationsIncreaseWithEta) {
  // Monotonicity in eta rests on diminishing returns, so use a spectrum
  // that produces them: eigenvalues evenly spaced on [1, 50].
  Vector d(200);
  for (Index i = 0; i < 200; ++i) d(i) = 1.0 + 49.0 * static_cast<double>(i) / 199.0;
  Problem p;
  p.op = std::make_shared<DenseOperator>(Matrix(d.asDiagonal()), OperatorFlags{true, true});
  p.b = gen_rhs(200, 1);
  p.x_star = p.b.cwiseQuotient(d);
  p.tol = 1e-8;
  const Trajectory traj = record_trajectory(*p.op, p.b, Vector::Zero(200), p.method, p.tol, p.maxit);
  const auto t = traj.improvements();
  ASSERT_GT(t.size(), 42u);
  for (std::size_t j = 1; j < t.size(); ++j) ASSERT_LT(t[j], t[j - 1]);

  const std::vector<EstimatorSpec> grid{AsConfig(40.25), AsConfig(5.0), AsConfig(20.0), AsConfig(10.5)};
  const auto curve = variance_curve(p, grid, 2000, 3);
  ASSERT_EQ(curve.size(), 4u);
  const double etas[] = {5.0, 10.5, 20.0, 40.25};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(std::get<AsConfig>(curve[i].estimator).eta(), etas[i]);
    if (i > 0) {
      EXPECT_GT(curve[i].stats.avg_iterations, curve[i - 1].stats.avg_iterations);
    }
  }
}

TEST(Calibration, EtaHitsTarget) {
  const System s = spd_system(100, 0.1, 3.0, 17);
  const Trajectory traj = record_trajectory(*s.op, s.b, Vector::Zero(100), Method::CG, 1e-10, 1000);
  const auto t = traj.improvements();
  for (double target : {2.0, 10.0, 0.5 * static_cast<double>(t.size())}) {
    const double eta = calibrate_eta(t, target);
    EXPECT_NEAR(as_probabilities_streaming(t, AsConfig(eta)).expected_cost(), target, 1e-6 * target);
  }
}

TEST(Calibration, RrMinItersIsClosest) {
  const int horizon = 120;
  for (double lambda : {0.05, 0.1}) {
    for (double target : {25.0, 40.0, 70.0}) {
      const int m = calibrate_rr_min_iters(horizon, lambda, target);
      double best = 1e300;
      for (int k = 0; k <= horizon; ++k)
        best = std::min(best, std::abs(rr_schedule({k, lambda}, horizon).expected_cost() - target));
      EXPECT_NEAR(std::abs(rr_schedule({m, lambda}, horizon).expected_cost() - target), best, 1e-12);
    }
  }
}
