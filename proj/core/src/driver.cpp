#include "rtk/driver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <string>
#include <thread>

#include "rtk/errors.hpp"

namespace rtk {

namespace {

// Shared loop for live and replayed runs. A source yields iteration records
// in order and reports whether the recurrence has converged.
template <typename Source>
RandomizedSolveResult drive(Source& source, const Vector& x0, const EstimatorSpec& estimator,
                            Rng& rng) {
  RandomizedSolveResult out;
  out.estimate = x0;
  auto policy = make_policy(estimator);
  double s_prev = 1.0;

  if (!source.converged()) {
    for (;;) {
      const IterationRecord& rec = source.next();
      ++out.diagnostics.steps_computed;
      const Decision d = policy->next(rec.improvement);
      if (sample_truncation(d.prob, s_prev, rng)) {
        out.truncated = true;
        break;
      }
      if (!(d.survival > 0.0))
        throw ScheduleError("survival reached zero while the run continued");
      const double w = 1.0 / d.survival;
      out.estimate.noalias() += w * rec.delta_x;
      out.weights_applied.push_back(w);
      ++out.executed_iterations;
      s_prev = d.survival;
      if (source.converged()) {
        policy->finish();
        out.diagnostics.flushed = true;
        out.diagnostics.open_group = policy->flushed_open_group();
        break;
      }
    }
  } else {
    policy->finish();
    out.diagnostics.flushed = true;
  }
  out.diagnostics.clamped_improvements = policy->clamped();
  out.diagnostics.final_survival = s_prev;
  out.solver_iterate = source.iterate();
  return out;
}

class LiveSource {
 public:
  LiveSource(const LinearOperator& op, const Vector& b, const Vector& x0, Method method,
             double tol, int maxit, SolverOptions opts)
      : solver_(make_solver(method, op, b, x0, opts)), maxit_(maxit) {
    const double bnorm = b.norm();
    target_ = bnorm > 0.0 ? tol * bnorm : tol;
  }

  bool converged() const {
    return solver_->exact() || solver_->residual_norm() <= target_;
  }

  const IterationRecord& next() {
    if (solver_->iteration() >= maxit_)
      throw MaxIterationsError("no convergence within " + std::to_string(maxit_) + " iterations");
    current_ = solver_->step();
    return current_;
  }

  Vector iterate() const { return solver_->solution(); }

 private:
  std::unique_ptr<KrylovSolver> solver_;
  int maxit_;
  double target_ = 0.0;
  IterationRecord current_;
};

class ReplaySource {
 public:
  explicit ReplaySource(const Trajectory& t) : t_(t) {}

  bool converged() const {
    return t_.converged && pos_ == t_.records.size();
  }

  const IterationRecord& next() {
    if (pos_ >= t_.records.size())
      throw MaxIterationsError("replayed run ended without convergence");
    return t_.records[pos_++];
  }

  Vector iterate() const {
    Vector x = t_.x0;
    for (std::size_t i = 0; i < pos_; ++i) x += t_.records[i].delta_x;
    return x;
  }

 private:
  const Trajectory& t_;
  std::size_t pos_ = 0;
};

void check_tolerances(double tol, int maxit) {
  if (!(tol >= 0.0) || !std::isfinite(tol)) throw ValidationError("tol must be finite and >= 0");
  if (maxit < 0) throw ValidationError("maxit must be non-negative");
}

}  // namespace

RandomizedSolveResult randomized_solve(const LinearOperator& op, const Vector& b, const Vector& x0,
                                       Method method, const EstimatorSpec& estimator, double tol,
                                       int maxit, Rng& rng, SolverOptions opts) {
  check_tolerances(tol, maxit);
  LiveSource source(op, b, x0, method, tol, maxit, opts);
  return drive(source, x0, estimator, rng);
}

std::vector<double> Trajectory::improvements() const {
  std::vector<double> t;
  t.reserve(records.size());
  for (const auto& r : records) t.push_back(r.improvement);
  return t;
}

Trajectory record_trajectory(const LinearOperator& op, const Vector& b, const Vector& x0,
                             Method method, double tol, int maxit, SolverOptions opts) {
  check_tolerances(tol, maxit);
  auto det = solve_deterministic(op, b, x0, method, tol, maxit, opts, true);
  Trajectory t;
  t.x0 = x0;
  t.records = std::move(det.history);
  t.converged = det.converged;
  return t;
}

RandomizedSolveResult replay_solve(const Trajectory& trajectory, const EstimatorSpec& estimator,
                                   Rng& rng) {
  ReplaySource source(trajectory);
  return drive(source, trajectory.x0, estimator, rng);
}

TruncationSchedule realized_schedule(const Trajectory& trajectory,
                                     const EstimatorSpec& estimator) {
  const int k = static_cast<int>(trajectory.records.size());
  return std::visit(
      [&](const auto& s) -> TruncationSchedule {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, AsConfig>) {
          const auto t = trajectory.improvements();
          return as_probabilities_streaming(t, s);
        } else if constexpr (std::is_same_v<T, RrConfig>) {
          if (k >= s.min_iters) return rr_schedule(s, k);
        }
        {
          std::vector<double> p(static_cast<std::size_t>(k) + 1, 0.0);
          p.back() = 1.0;
          return TruncationSchedule(std::move(p));
        }
      },
      estimator);
}

double expected_iterations(const Trajectory& trajectory, const EstimatorSpec& estimator) {
  return realized_schedule(trajectory, estimator).expected_cost();
}

double calibrate_eta(std::span<const double> improvements, double target) {
  const auto k = static_cast<double>(improvements.size());
  if (improvements.empty()) throw ValidationError("cannot calibrate on an empty run");
  const auto cost = [&](double eta) {
    return as_probabilities_streaming(improvements, AsConfig(eta)).expected_cost();
  };
  double lo = -1.0 + 1e-12;
  double hi = k - 1.0;
  if (target <= cost(lo)) return lo;
  if (target >= cost(hi)) return hi;
  for (int it = 0; it < 100 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (cost(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

int calibrate_rr_min_iters(int horizon, double lambda, double target) {
  int best = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int m = 0; m <= horizon; ++m) {
    const double gap = std::abs(rr_schedule(RrConfig{m, lambda}, horizon).expected_cost() - target);
    if (gap < best_gap) {
      best_gap = gap;
      best = m;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

ErrorMetric default_metric(Method method) {
  return method == Method::CG ? ErrorMetric::Energy : ErrorMetric::Residual;
}

namespace {

// Streaming moments of one chunk of trials: Welford within a chunk, Chan's
// pairwise update when chunks are merged in order.
struct Accumulator {
  std::int64_t n = 0;
  double iter_mean = 0.0, iter_m2 = 0.0;
  double metric_mean = 0.0, metric_m2 = 0.0;
  Vector mean, m2, a_mean;  // a_mean = A * mean
  double strict_m2 = 0.0;
  std::map<int, std::int64_t> counts;

  explicit Accumulator(Index dim)
      : mean(Vector::Zero(dim)), m2(Vector::Zero(dim)), a_mean(Vector::Zero(dim)) {}

  static void welford(double& mean_, double& m2_, std::int64_t k, double x) {
    const double d = x - mean_;
    mean_ += d / static_cast<double>(k);
    m2_ += d * (x - mean_);
  }

  void add(const Vector& x, const Vector& ax, int iters, double metric, ErrorMetric kind) {
    ++n;
    welford(iter_mean, iter_m2, n, iters);
    welford(metric_mean, metric_m2, n, metric);
    const double inv = 1.0 / static_cast<double>(n);
    const Vector d = x - mean;
    const Vector ad_old = ax - a_mean;
    mean += d * inv;
    a_mean += ad_old * inv;
    m2.array() += d.array() * (x - mean).array();
    const Vector ad_new = ax - a_mean;
    strict_m2 += kind == ErrorMetric::Energy ? d.dot(ad_new) : ad_old.dot(ad_new);
    ++counts[iters];
  }

  void merge(const Accumulator& o, ErrorMetric kind) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
    const double tot = na + nb;
    const double f = na * nb / tot;
    const auto merge_scalar = [&](double& m, double& s, double om, double os) {
      const double d = om - m;
      m += d * nb / tot;
      s += os + d * d * f;
    };
    merge_scalar(iter_mean, iter_m2, o.iter_mean, o.iter_m2);
    merge_scalar(metric_mean, metric_m2, o.metric_mean, o.metric_m2);
    const Vector d = o.mean - mean;
    const Vector ad = o.a_mean - a_mean;
    m2.array() += o.m2.array() + d.array().square() * f;
    strict_m2 += o.strict_m2 + (kind == ErrorMetric::Energy ? d.dot(ad) : ad.squaredNorm()) * f;
    mean += d * (nb / tot);
    a_mean += ad * (nb / tot);
    for (const auto& [k, c] : o.counts) counts[k] += c;
    n += o.n;
  }
};

}  // namespace

TrialStatistics run_trials(const Problem& problem, const EstimatorSpec& estimator,
                           std::int64_t trials, std::uint64_t base_seed,
                           const TrialOptions& options) {
  if (!problem.op) throw ValidationError("problem has no operator");
  const LinearOperator& op = *problem.op;
  const Index dim = op.size();
  if (problem.b.size() != dim) throw DimensionError("right-hand side length does not match A");
  if (trials <= 0) throw ValidationError("trials must be positive");
  if (options.workers <= 0) throw ValidationError("workers must be positive");
  if (options.chunk_size <= 0) throw ValidationError("chunk size must be positive");
  check_tolerances(problem.tol, problem.maxit);

  const Vector x0 = problem.x0.size() == 0 ? Vector::Zero(dim) : problem.x0;
  if (x0.size() != dim) throw DimensionError("initial guess length does not match A");
  const ErrorMetric kind = default_metric(problem.method);
  if (kind == ErrorMetric::Energy && !op.symmetric())
    throw ValidationError("energy error needs a symmetric operator");

  Trajectory trajectory;
  const bool replay = options.mode == TrialMode::Replay;
  if (replay || problem.x_star.size() == 0) {
    trajectory = record_trajectory(op, problem.b, x0, problem.method, problem.tol, problem.maxit,
                                   problem.solver_options);
    if (!trajectory.converged)
      throw MaxIterationsError("deterministic run did not converge within maxit");
  }
  Vector x_star = problem.x_star;
  if (x_star.size() == 0) {
    x_star = x0;
    for (const auto& r : trajectory.records) x_star += r.delta_x;
  }
  if (x_star.size() != dim) throw DimensionError("reference solution length does not match A");
  if (!replay) trajectory.records.clear();
  const Vector ax_star = matvec(op, x_star);

  const std::int64_t chunk = options.chunk_size;
  const std::int64_t n_chunks = (trials + chunk - 1) / chunk;
  std::vector<Accumulator> parts(static_cast<std::size_t>(n_chunks), Accumulator(dim));
  std::atomic<std::int64_t> next_chunk{0};
  std::mutex err_mu;
  std::int64_t err_trial = -1;
  std::string err_msg;
  bool err_numerical = false;

  const auto work = [&] {
    Vector ax(dim);
    for (;;) {
      const std::int64_t c = next_chunk.fetch_add(1);
      if (c >= n_chunks) return;
      {
        std::lock_guard lock(err_mu);
        if (err_trial >= 0) return;
      }
      Accumulator& acc = parts[static_cast<std::size_t>(c)];
      const std::int64_t end = std::min(trials, (c + 1) * chunk);
      for (std::int64_t i = c * chunk; i < end; ++i) {
        try {
          Rng rng(base_seed, trial_stream(base_seed, static_cast<std::uint64_t>(i)));
          const RandomizedSolveResult r =
              replay ? replay_solve(trajectory, estimator, rng)
                     : randomized_solve(op, problem.b, x0, problem.method, estimator, problem.tol,
                                        problem.maxit, rng, problem.solver_options);
          op.apply(r.estimate, ax);
          const double metric = kind == ErrorMetric::Energy
                                    ? (r.estimate - x_star).dot(ax - ax_star)
                                    : (problem.b - ax).squaredNorm();
          acc.add(r.estimate, ax, r.executed_iterations, metric, kind);
        } catch (const std::exception& e) {
          std::lock_guard lock(err_mu);
          if (err_trial < 0 || i < err_trial) {
            err_trial = i;
            err_msg = e.what();
            err_numerical = dynamic_cast<const NumericalError*>(&e) != nullptr;
          }
          return;
        }
      }
    }
  };

  const int n_workers = static_cast<int>(std::min<std::int64_t>(options.workers, n_chunks));
  if (n_workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (err_trial >= 0) {
    const std::string msg = "trial " + std::to_string(err_trial) + ": " + err_msg;
    if (err_numerical) throw NumericalError(msg);
    throw ValidationError(msg);
  }

  Accumulator total(dim);
  for (const auto& p : parts) total.merge(p, kind);

  TrialStatistics s;
  s.trials = total.n;
  s.metric = kind;
  s.mean_estimate = total.mean;
  const double denom = total.n > 1 ? static_cast<double>(total.n - 1) : 1.0;
  const double rt = std::sqrt(static_cast<double>(total.n));
  s.coord_variance = total.m2 / denom;
  s.mean_sq_error_metric = total.metric_mean;
  s.metric_stderr = std::sqrt(total.metric_m2 / denom) / rt;
  s.strict_variance = total.n > 1 ? total.strict_m2 / denom : 0.0;
  s.avg_iterations = total.iter_mean;
  s.std_iterations = std::sqrt(total.iter_m2 / denom);
  s.std_err_iterations = s.std_iterations / rt;
  s.iteration_counts = std::move(total.counts);
  return s;
}

std::vector<CurvePoint> variance_curve(const Problem& problem,
                                       const std::vector<EstimatorSpec>& grid,
                                       std::int64_t trials, std::uint64_t base_seed,
                                       const TrialOptions& options) {
  std::vector<CurvePoint> rows;
  rows.reserve(grid.size());
  for (const auto& e : grid) rows.push_back({e, run_trials(problem, e, trials, base_seed, options)});
  std::stable_sort(rows.begin(), rows.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.stats.avg_iterations < b.stats.avg_iterations;
  });
  return rows;
}

}  // namespace rtk
