#include "cli/commands.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "rtk/driver.hpp"
#include "rtk/errors.hpp"
#include "rtk/gp.hpp"
#include "rtk/krylov.hpp"
#include "rtk/linop.hpp"
#include "rtk/matrix_market.hpp"
#include "rtk/oracle.hpp"
#include "rtk/rng.hpp"
#include "rtk/truncation.hpp"

namespace rtk::cli {

namespace {

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::string short_num(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path);
  return f;
}

struct LoadedSystem {
  std::shared_ptr<const LinearOperator> op;
  Vector b;
};

bool exactly_symmetric(const CsrMatrix& m) {
  const Matrix d = m.to_dense();
  return d == d.transpose();
}

LoadedSystem load_system(const SystemOptions& s, Method method) {
  CsrMatrix m = [&] {
    if (!s.matrix.empty()) {
      CsrMatrix raw = read_matrix_market(s.matrix);
      const bool sym = exactly_symmetric(raw);
      // CG needs the SPD assertion; a symmetric input is taken on trust and
      // a missing definiteness surfaces as a solver breakdown.
      const OperatorFlags flags{sym, sym && method == Method::CG};
      return CsrMatrix(raw.size(), raw.row_offsets(), raw.columns(), raw.values(), flags);
    }
    if (s.n <= 0) throw ValidationError("matrix size must be positive");
    if (s.kind == "nonsymmetric") return gen_sparse_nonsymmetric(s.n, s.density, s.diag, s.seed);
    return gen_sparse_spd(s.n, s.density, s.diag, s.seed);
  }();
  LoadedSystem out;
  out.b = s.rhs.empty() ? gen_rhs(m.size(), s.seed) : read_vector(s.rhs);
  if (out.b.size() != m.size()) throw DimensionError("right-hand side length does not match the matrix");
  out.op = make_operator(m);
  return out;
}

EstimatorSpec estimator_from(const std::string& name, double eta, int rr_min, double rr_lambda) {
  if (name == "det") return DeterministicEstimator{};
  if (name == "as") return AsConfig(eta);
  RrConfig rr{rr_min, rr_lambda};
  rr.validate();
  return rr;
}

std::string describe(const EstimatorSpec& e) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, AsConfig>) return "as(eta=" + num(s.eta()) + ")";
        else if constexpr (std::is_same_v<T, RrConfig>)
          return "rr(min_iters=" + std::to_string(s.min_iters) + ",lambda=" + num(s.lambda) + ")";
        else return "det";
      },
      e);
}

void write_meta(std::ostream& f, const std::vector<std::pair<std::string, std::string>>& meta) {
  for (const auto& [k, v] : meta) f << "# " << k << '=' << v << '\n';
}

}  // namespace

// ---------------------------------------------------------------------------

void cmd_gen_matrix(const GenMatrixOptions& o, std::ostream& out) {
  const auto& s = o.system;
  if (s.n <= 0) throw ValidationError("matrix size must be positive");
  const CsrMatrix m = s.kind == "nonsymmetric" ? gen_sparse_nonsymmetric(s.n, s.density, s.diag, s.seed)
                                               : gen_sparse_spd(s.n, s.density, s.diag, s.seed);
  write_matrix_market(m, o.out);
  auto meta = open_out(o.out + ".meta");
  meta << "kind=" << s.kind << "\nn=" << s.n << "\ndensity=" << num(s.density)
       << "\ndiag=" << num(s.diag) << "\nseed=" << s.seed << "\nnnz=" << m.nnz()
       << "\nrng=" << Rng::kName << '\n';
  if (!o.rhs_out.empty()) write_vector(gen_rhs(m.size(), s.seed), o.rhs_out);
  out << "wrote " << o.out << " (n=" << m.size() << ", nnz=" << m.nnz() << ")\n";
}

void cmd_solve(const SolveOptions& o, std::ostream& out) {
  const Method method = parse_method(o.method);
  const LoadedSystem sys = load_system(o.system, method);
  const EstimatorSpec est = estimator_from(o.estimator, o.eta, o.rr_min, o.rr_lambda);
  const Vector x0 = Vector::Zero(sys.b.size());

  Rng rng(o.trial_seed, 0);
  const auto r = randomized_solve(*sys.op, sys.b, x0, method, est, o.tol, o.maxit, rng);
  const double residual = (sys.b - matvec(*sys.op, r.estimate)).norm();
  out << "method=" << to_string(method) << " estimator=" << describe(est)
      << " iterations=" << r.executed_iterations << " truncated=" << (r.truncated ? "yes" : "no")
      << " residual=" << num(residual) << '\n';

  if (!o.history.empty() || !o.schedule_out.empty()) {
    const Trajectory t = record_trajectory(*sys.op, sys.b, x0, method, o.tol, o.maxit);
    const TruncationSchedule sched = realized_schedule(t, est);
    out << "deterministic_iterations=" << t.records.size()
        << " expected_iterations=" << num(sched.expected_cost()) << '\n';
    if (!o.history.empty()) {
      auto f = open_out(o.history);
      f << "j,improvement,residual_norm,P,s\n" << std::setprecision(17);
      for (std::size_t j = 0; j < t.records.size(); ++j) {
        const int jj = static_cast<int>(j);
        f << j << ',' << t.records[j].improvement << ',' << t.records[j].residual_norm << ','
          << sched.prob(jj) << ',' << sched.survival(jj) << '\n';
      }
    }
    if (!o.schedule_out.empty()) {
      auto f = open_out(o.schedule_out);
      sched.write_csv(f);
    }
  }
  if (!o.solution_out.empty()) write_vector(r.estimate, o.solution_out);
}

// ---------------------------------------------------------------------------

void cmd_tradeoff(const TradeoffOptions& opt, std::ostream& out) {
  TradeoffOptions o = opt;
  if (o.full_scale) {
    if (!o.n_set) o.n = 500;
    if (!o.density_set) o.density = 0.16;
    if (!o.trials_set) o.trials = 300000;
  }
  if (o.n <= 0) throw ValidationError("matrix size must be positive");
  if (o.trials <= 0) throw ValidationError("trials must be positive");
  if (o.diags.empty()) throw ValidationError("need at least one diagonal value");
  if (o.rr_lambdas.empty() && o.etas.empty() && o.rr_mins.empty())
    throw ValidationError("empty estimator grid");
  if (o.etas.empty() && (o.rr_lambdas.empty() || o.rr_mins.empty()))
    throw ValidationError("matched AS grid needs RR lambdas and min_iters");
  for (int m : o.rr_mins)
    if (m < 0) throw ValidationError("RR min_iters must be non-negative");

  const Method method = parse_method(o.method);
  TrialOptions topts;
  topts.workers = o.workers;
  topts.mode = o.mode == "live" ? TrialMode::Live : TrialMode::Replay;

  for (double diag : o.diags) {
    const CsrMatrix a = gen_sparse_spd(o.n, o.density, diag, o.seed);
    Problem problem;
    problem.op = make_operator(a);
    problem.b = gen_rhs(a.size(), o.seed);
    problem.method = method;
    problem.tol = o.tol;
    problem.maxit = o.maxit;
    const Trajectory traj = record_trajectory(*problem.op, problem.b, Vector::Zero(a.size()),
                                              method, o.tol, o.maxit);
    if (!traj.converged) throw MaxIterationsError("system did not converge within maxit");
    const int k = static_cast<int>(traj.records.size());
    const auto t = traj.improvements();

    // Reference costs come from the first RR temperature.
    std::vector<double> targets;
    if (!o.rr_lambdas.empty())
      for (int m : o.rr_mins)
        targets.push_back(rr_schedule(RrConfig{m, o.rr_lambdas.front()}, k).expected_cost());

    std::vector<std::pair<std::string, std::vector<EstimatorSpec>>> groups;
    std::vector<EstimatorSpec> as_grid;
    if (!o.etas.empty()) {
      for (double e : o.etas) as_grid.emplace_back(AsConfig(e));
    } else {
      for (double c : targets) as_grid.emplace_back(AsConfig(calibrate_eta(t, c)));
    }
    groups.emplace_back("as", std::move(as_grid));
    for (std::size_t li = 0; li < o.rr_lambdas.size(); ++li) {
      const double lambda = o.rr_lambdas[li];
      std::vector<int> mins;
      if (li == 0 || o.unmatched) {
        mins = o.rr_mins;
      } else {
        for (double c : targets) {
          const int m = calibrate_rr_min_iters(k, lambda, c);
          if (std::find(mins.begin(), mins.end(), m) == mins.end()) mins.push_back(m);
        }
      }
      std::vector<EstimatorSpec> grid;
      for (int m : mins) {
        RrConfig rr{m, lambda};
        rr.validate();
        grid.emplace_back(rr);
      }
      groups.emplace_back("rr" + short_num(lambda), std::move(grid));
    }

    for (const auto& [label, grid] : groups) {
      const auto rows = variance_curve(problem, grid, o.trials, o.trial_seed, topts);
      const std::string path = o.out_prefix + "_diag" + short_num(diag) + "_" + label + ".csv";
      auto f = open_out(path);
      write_meta(f, {{"command", "tradeoff"},
                     {"n", std::to_string(o.n)},
                     {"density", num(o.density)},
                     {"diag", num(diag)},
                     {"matrix_seed", std::to_string(o.seed)},
                     {"trial_seed", std::to_string(o.trial_seed)},
                     {"trials", std::to_string(o.trials)},
                     {"tol", num(o.tol)},
                     {"maxit", std::to_string(o.maxit)},
                     {"method", o.method},
                     {"mode", o.mode},
                     {"estimator", label},
                     {"deterministic_iterations", std::to_string(k)},
                     {"rng", std::string(Rng::kName)}});
      if (o.trials < 1000)
        f << "# warning: only " << o.trials << " trials; variance estimates are unreliable\n";
      f << "estimator,param,avg_iters,stderr_iters,metric_mean,metric_stderr,trials,seed,strict_var\n";
      for (const auto& row : rows) {
        std::string name, param;
        if (const auto* as = std::get_if<AsConfig>(&row.estimator)) {
          name = "as";
          param = num(as->eta());
        } else if (const auto* rr = std::get_if<RrConfig>(&row.estimator)) {
          name = "rr";
          param = std::to_string(rr->min_iters);
        }
        const auto& s = row.stats;
        f << name << ',' << param << ',' << num(s.avg_iterations) << ','
          << num(s.std_err_iterations) << ',' << num(s.mean_sq_error_metric) << ','
          << num(s.metric_stderr) << ',' << s.trials << ',' << o.trial_seed << ','
          << num(s.strict_variance) << '\n';
      }
      out << "wrote " << path << " (" << rows.size() << " rows)\n";
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

struct CheckRow {
  std::string suite;
  int instance = 0;
  int size = 0;
  double cost = 0.0;
  double as_objective = 0.0;
  double oracle_objective = 0.0;
  double max_prob_diff = 0.0;
  double kkt_residual = 0.0;
  std::size_t distinct = 0;
  bool schedule_valid = false;
  bool pass = false;
  std::string note;
};

bool schedule_valid(const TruncationSchedule& s) {
  for (double p : s.probs())
    if (!(p >= 0.0)) return false;
  if (std::abs(s.total() - 1.0) > 1e-10) return false;
  const auto& g = s.groups();
  for (std::size_t i = 1; i < g.size(); ++i)
    if (g[i].mean > g[i - 1].mean) return false;
  return true;
}

CheckRow run_check(const std::string& suite, int index, const std::vector<double>& t,
                   const AsConfig* config, double cost, const OracleOptions& oopts) {
  CheckRow row;
  row.suite = suite;
  row.instance = index;
  row.size = static_cast<int>(t.size());
  row.cost = cost;
  std::vector<double> as_probs;
  if (config != nullptr) {
    const auto sched = as_probabilities_finite(t, *config);
    row.schedule_valid = schedule_valid(sched);
    as_probs = sched.probs();
  } else {
    as_probs.assign(t.size() + 1, 0.0);
    as_probs.back() = 1.0;
    row.schedule_valid = true;
  }
  row.as_objective = objective(as_probs, t);
  try {
    const auto res = brute_force_optimum({t, cost}, oopts);
    row.oracle_objective = res.objective;
    row.kkt_residual = res.certificate.max_stationarity_residual;
    row.distinct = res.distinct_optima.size();
    for (std::size_t j = 0; j < as_probs.size(); ++j)
      row.max_prob_diff = std::max(row.max_prob_diff, std::abs(as_probs[j] - res.probs[j]));
  } catch (const OracleError& e) {
    row.oracle_objective = e.best_objective();
    row.note = "oracle did not converge";
    return row;
  }
  const double gap = row.as_objective - row.oracle_objective;
  const double rel = gap / std::max(std::abs(row.oracle_objective), 1e-300);
  if (suite == "diminishing") row.pass = row.schedule_valid && std::abs(rel) <= 1e-6;
  else if (suite == "adversarial") row.pass = row.schedule_valid && gap > 1e-8;
  else row.pass = gap == 0.0;
  return row;
}

}  // namespace

bool cmd_oracle_check(const OracleCheckOptions& o, std::ostream& out) {
  if (o.instances <= 0) throw ValidationError("instances must be positive");
  if (o.size < 3 || o.size > kOracleMaxIterations)
    throw ValidationError("instance size must lie in [3, 30]");
  OracleOptions oopts;
  oopts.restarts = o.restarts;
  oopts.workers = o.workers;
  const bool all = o.suite == "all";
  std::vector<CheckRow> rows;

  if (all || o.suite == "diminishing") {
    Rng rng(o.seed, 1);
    for (int i = 0; i < o.instances; ++i) {
      std::vector<double> t(static_cast<std::size_t>(o.size));
      double v = 1.0;
      for (auto& x : t) {
        x = v;
        v *= 0.3 + 0.65 * rng.uniform();
      }
      const AsConfig cfg(-1.0 + 1e-3 + rng.uniform() * (o.size - 1 - 2e-3));
      rows.push_back(run_check("diminishing", i, t, &cfg, expected_cost(t, cfg), oopts));
    }
  }
  if (all || o.suite == "adversarial") {
    Rng rng(o.seed, 2);
    for (int i = 0; i < o.instances; ++i) {
      const int n = -1 + static_cast<int>(rng.uniform() * 3.0);
      const int m = 2 + static_cast<int>(rng.uniform() * 2.0);
      const double eps = 0.01 + 0.49 * rng.uniform();
      const int big_n = std::max(o.size, n + m + 4);
      const auto t = adversarial_improvements(n, m, eps, big_n);
      const AsConfig cfg(n + 0.5);
      rows.push_back(run_check("adversarial", i, t, &cfg, expected_cost(t, cfg), oopts));
    }
  }
  if (all || o.suite == "edge") {
    std::vector<double> t(static_cast<std::size_t>(o.size));
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = std::pow(0.5, static_cast<double>(j));
    rows.push_back(run_check("edge", 0, t, nullptr, static_cast<double>(o.size), oopts));
  }

  std::ostringstream table;
  table << std::setprecision(10);
  table << "suite,instance,N,cost,as_objective,oracle_objective,gap,max_prob_diff,kkt_residual,"
           "distinct_optima,schedule_valid,status\n";
  bool ok = true;
  for (const auto& r : rows) {
    ok = ok && r.pass;
    table << r.suite << ',' << r.instance << ',' << r.size << ',' << r.cost << ','
          << r.as_objective << ',' << r.oracle_objective << ','
          << r.as_objective - r.oracle_objective << ',' << r.max_prob_diff << ','
          << r.kkt_residual << ',' << r.distinct << ',' << (r.schedule_valid ? "yes" : "no")
          << ',' << (r.pass ? "pass" : "FAIL") << (r.note.empty() ? "" : " (" + r.note + ")")
          << '\n';
  }
  out << table.str();
  if (!o.out.empty()) {
    auto f = open_out(o.out);
    write_meta(f, {{"command", "oracle-check"},
                   {"suite", o.suite},
                   {"instances", std::to_string(o.instances)},
                   {"size", std::to_string(o.size)},
                   {"seed", std::to_string(o.seed)},
                   {"restarts", std::to_string(o.restarts)}});
    f << table.str();
  }
  return ok;
}

// ---------------------------------------------------------------------------

namespace {

gp::Dataset load_dataset(const GpTrainOptions& o) {
  if (!o.data.empty()) {
    std::ifstream in(o.data);
    if (!in) throw ValidationError("cannot read " + o.data);
    return gp::read_csv_dataset(in, o.target_col);
  }
  const auto truth = gp::Hyperparams::from_natural(o.true_gamma, o.true_l, o.true_sigma2);
  return gp::synthetic_dataset(o.n, o.d, truth, o.data_seed);
}

gp::SolverSpec solver_spec(const std::string& name, const GpTrainOptions& o) {
  gp::SolverSpec s;
  if (name == "cholesky") s.kind = gp::SolverKind::Cholesky;
  else if (name == "cg") s.kind = gp::SolverKind::CG;
  else if (name == "as") s.kind = gp::SolverKind::AsCg;
  else if (name == "rr") s.kind = gp::SolverKind::RrCg;
  else throw ValidationError("unknown GP solver '" + name + "'");
  s.cg_iterations = o.cg_iters;
  s.eta = o.eta;
  s.rr = RrConfig{o.rr_min, o.rr_lambda};
  s.rr.validate();
  if (s.kind == gp::SolverKind::AsCg) (void)AsConfig(o.eta);
  s.tol = o.tol;
  s.independent_bilinear = !o.single_solve;
  return s;
}

}  // namespace

void cmd_gp_train(const GpTrainOptions& o, std::ostream& out) {
  if (o.solvers.empty()) throw ValidationError("need at least one solver");
  const gp::Dataset data = load_dataset(o);
  const auto init = gp::Hyperparams::from_natural(o.init_gamma, o.init_l, o.init_sigma2);
  for (const auto& name : o.solvers) {
    gp::TrainConfig cfg;
    cfg.steps = o.steps;
    cfg.lr = o.lr;
    cfg.probes = o.probes;
    cfg.solver = solver_spec(name, o);
    cfg.warm_start = !o.no_warm_start;
    cfg.seed = o.seed;

    const std::string path = o.out_prefix + "_" + name + ".csv";
    auto f = open_out(path);
    write_meta(f, {{"command", "gp-train"},
                   {"data", o.data.empty() ? "synthetic" : o.data},
                   {"points", std::to_string(data.size())},
                   {"dims", std::to_string(data.x.cols())},
                   {"data_seed", std::to_string(o.data_seed)},
                   {"init", num(init.log_gamma) + ";" + num(init.log_l) + ";" + num(init.log_sigma2)},
                   {"solver", gp::describe(cfg.solver)},
                   {"bilinear", o.single_solve ? "single" : "independent"},
                   {"warm_start", o.no_warm_start ? "no" : "yes"},
                   {"steps", std::to_string(o.steps)},
                   {"lr", num(o.lr)},
                   {"probes", std::to_string(o.probes)},
                   {"seed", std::to_string(o.seed)}});
    try {
      const auto trace = gp::train(data, init, cfg);
      gp::write_trace_csv(f, trace);
      out << "wrote " << path << " (" << trace.size() << " steps)\n";
    } catch (const gp::TrainingDiverged& e) {
      gp::write_trace_csv(f, e.prefix());
      throw;
    }
  }
}

void cmd_calibrate_cost(const CalibrateOptions& o, std::ostream& out) {
  if (!(o.target > 0.0)) throw ValidationError("target cost must be positive");
  Trajectory traj;
  if (o.system_kind == "gp") {
    const gp::Dataset data = load_dataset(o.gp);
    const auto init = gp::Hyperparams::from_natural(o.gp.init_gamma, o.gp.init_l, o.gp.init_sigma2);
    const auto k = gp::kernel_matrix(init, data.x);
    traj = record_trajectory(*k.op(), data.y, Vector::Zero(data.size()), Method::CG, o.tol, o.maxit);
  } else {
    const Method method = parse_method(o.method);
    const LoadedSystem sys = load_system(o.system, method);
    traj = record_trajectory(*sys.op, sys.b, Vector::Zero(sys.b.size()), method, o.tol, o.maxit);
  }
  if (!traj.converged) throw MaxIterationsError("system did not converge within maxit");
  const int k = static_cast<int>(traj.records.size());
  const auto t = traj.improvements();

  std::ostringstream csv;
  csv << "# deterministic_iterations=" << k << '\n';
  csv << "estimator,param,expected_iters,target\n";
  const double eta = calibrate_eta(t, o.target);
  csv << "as," << num(eta) << ',' << num(expected_iterations(traj, AsConfig(eta))) << ','
      << num(o.target) << '\n';
  for (double lambda : o.rr_lambdas) {
    const int m = calibrate_rr_min_iters(k, lambda, o.target);
    csv << "rr" << short_num(lambda) << ',' << m << ','
        << num(rr_schedule(RrConfig{m, lambda}, k).expected_cost()) << ',' << num(o.target) << '\n';
  }
  out << csv.str();
  if (!o.out.empty()) {
    auto f = open_out(o.out);
    f << csv.str();
  }
}

}  // namespace rtk::cli
