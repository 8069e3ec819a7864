#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "rtk/krylov.hpp"
#include "rtk/linop.hpp"
#include "rtk/rng.hpp"
#include "rtk/truncation.hpp"

namespace rtk {

struct SolveDiagnostics {
  int clamped_improvements = 0;
  bool flushed = false;       // the run reached convergence and the schedule was flushed
  bool open_group = false;    // the flush closed a partially filled pool group
  int steps_computed = 0;     // iterations whose telemetry was computed
  double final_survival = 1.0;
};

struct RandomizedSolveResult {
  Vector estimate;               // unbiased estimate of the converged solution
  int executed_iterations = 0;   // increments applied (J)
  bool truncated = false;
  std::vector<double> weights_applied;  // 1 / s_k for k < J
  Vector solver_iterate;         // unweighted recurrence iterate when the run stopped
  SolveDiagnostics diagnostics;
};

/// Runs the Krylov recurrence and truncates it at random according to
/// `estimator`.
///
/// After iteration j's telemetry is available the policy settles P(j); the
/// run stops before applying increment j with probability P(j) / s_{j-1},
/// otherwise the increment is added with weight 1 / s_j. Reaching `tol`
/// assigns the remaining mass to "ran to convergence". Exceeding `maxit`
/// steps throws MaxIterationsError.
RandomizedSolveResult randomized_solve(const LinearOperator& op, const Vector& b, const Vector& x0,
                                       Method method, const EstimatorSpec& estimator, double tol,
                                       int maxit, Rng& rng, SolverOptions opts = {});

/// A finished deterministic run kept for replay. Every randomized solve of
/// the same (A, b, x0) walks this exact sequence of increments.
struct Trajectory {
  Vector x0;
  std::vector<IterationRecord> records;
  bool converged = false;

  [[nodiscard]] std::vector<double> improvements() const;
};

Trajectory record_trajectory(const LinearOperator& op, const Vector& b, const Vector& x0,
                             Method method, double tol, int maxit, SolverOptions opts = {});

/// Same draws and arithmetic as randomized_solve on the recorded run, minus
/// the operator products.
RandomizedSolveResult replay_solve(const Trajectory& trajectory, const EstimatorSpec& estimator,
                                   Rng& rng);

/// Schedule an estimator induces on a recorded run (indices 0..K).
TruncationSchedule realized_schedule(const Trajectory& trajectory, const EstimatorSpec& estimator);

/// Expected applied iterations on a recorded run.
double expected_iterations(const Trajectory& trajectory, const EstimatorSpec& estimator);

/// eta whose streaming AS schedule on `improvements` costs `target`
/// iterations on average (bisection; clamps to the attainable range).
double calibrate_eta(std::span<const double> improvements, double target);

/// RR min_iters whose expected cost over a run of `horizon` iterations is
/// closest to `target`.
int calibrate_rr_min_iters(int horizon, double lambda, double target);

// ---------------------------------------------------------------------------
// Trial batches

enum class ErrorMetric {
  Energy,    // ||x - x*||_A^2
  Residual,  // ||b - A x||_2^2
};

ErrorMetric default_metric(Method method);

enum class TrialMode {
  Replay,  // record the deterministic run once, then replay it per trial
  Live,    // run the recurrence in every trial
};

struct Problem {
  std::shared_ptr<const LinearOperator> op;
  Vector b;
  Vector x0;       // empty means zero
  Vector x_star;   // empty means the deterministic solution at `tol`
  Method method = Method::CG;
  double tol = 1e-8;
  int maxit = 10000;
  SolverOptions solver_options{};
};

struct TrialOptions {
  int workers = 1;
  TrialMode mode = TrialMode::Replay;
  int chunk_size = 64;  // fixed so results do not depend on `workers`
};

struct TrialStatistics {
  std::int64_t trials = 0;
  ErrorMetric metric = ErrorMetric::Energy;
  Vector mean_estimate;
  Vector coord_variance;          // sample variance per coordinate
  double mean_sq_error_metric = 0.0;
  double metric_stderr = 0.0;
  double strict_variance = 0.0;   // E ||x - E x||^2 in the metric's norm
  double avg_iterations = 0.0;
  double std_iterations = 0.0;
  double std_err_iterations = 0.0;
  std::map<int, std::int64_t> iteration_counts;  // histogram of J
};

TrialStatistics run_trials(const Problem& problem, const EstimatorSpec& estimator,
                           std::int64_t trials, std::uint64_t base_seed,
                           const TrialOptions& options = {});

struct CurvePoint {
  EstimatorSpec estimator;
  TrialStatistics stats;
};

/// One batch per estimator, rows sorted by average iterations.
std::vector<CurvePoint> variance_curve(const Problem& problem,
                                       const std::vector<EstimatorSpec>& grid,
                                       std::int64_t trials, std::uint64_t base_seed,
                                       const TrialOptions& options = {});

}  // namespace rtk
