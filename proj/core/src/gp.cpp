#include "rtk/gp.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "rtk/driver.hpp"
#include "rtk/krylov.hpp"

namespace rtk::gp {

double Hyperparams::gamma() const { return std::exp(log_gamma); }
double Hyperparams::lengthscale() const { return std::exp(log_l); }
double Hyperparams::sigma2() const { return std::exp(log_sigma2); }

Hyperparams Hyperparams::from_natural(double gamma, double l, double sigma2) {
  if (!(gamma > 0.0) || !(l > 0.0) || !(sigma2 > 0.0))
    throw ValidationError("GP hyperparameters must be positive");
  return {std::log(gamma), std::log(l), std::log(sigma2)};
}

void Dataset::validate() const {
  if (x.rows() == 0) throw ValidationError("dataset is empty");
  if (y.size() != x.rows()) throw DimensionError("targets and inputs differ in length");
  if (!x.allFinite() || !y.allFinite()) throw ValidationError("dataset has non-finite values");
  const Matrix d2 = squared_distances(x);
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = i + 1; j < x.rows(); ++j)
      if (d2(i, j) <= 1e-24)
        throw ValidationError("duplicate input rows " + std::to_string(i) + " and " +
                              std::to_string(j));
}

std::shared_ptr<DenseOperator> Kernel::op() const {
  return std::make_shared<DenseOperator>(k, OperatorFlags{true, true});
}

Matrix squared_distances(const Matrix& x) {
  const Vector sq = x.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * x * x.transpose()).colwise() + sq;
  d2.rowwise() += sq.transpose();
  for (Index i = 0; i < d2.rows(); ++i) {
    d2(i, i) = 0.0;
    for (Index j = 0; j < i; ++j) {
      const double v = std::max(0.0, 0.5 * (d2(i, j) + d2(j, i)));
      d2(i, j) = d2(j, i) = v;
    }
  }
  return d2;
}

Kernel kernel_matrix(const Hyperparams& params, const Matrix& x) {
  const double gamma = params.gamma();
  const double l2 = params.lengthscale() * params.lengthscale();
  const double s2 = params.sigma2();
  const Matrix d2 = squared_distances(x);
  const Matrix e = (-0.5 / l2 * d2.array()).exp().matrix();
  Kernel k;
  k.dk[0] = gamma * e;
  k.dk[1] = (k.dk[0].array() * d2.array() / l2).matrix();
  k.dk[2] = s2 * Matrix::Identity(x.rows(), x.rows());
  k.k = k.dk[0] + k.dk[2];
  return k;
}

namespace {

Eigen::LLT<Matrix> factor(const Matrix& k) {
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() == Eigen::Success) return llt;
  Matrix jittered = k;
  jittered.diagonal().array() += 1e-8 * k.diagonal().mean();
  llt.compute(jittered);
  if (llt.info() != Eigen::Success) throw NotSpdError("kernel matrix is not positive definite");
  return llt;
}

double loss_from(const Eigen::LLT<Matrix>& llt, const Vector& y, const Vector& alpha) {
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return 0.5 * y.dot(alpha) + 0.5 * logdet +
         0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

}  // namespace

LossGrad exact_mll_and_grad(const Hyperparams& params, const Dataset& data) {
  if (data.y.size() != data.x.rows()) throw DimensionError("targets and inputs differ in length");
  const Kernel k = kernel_matrix(params, data.x);
  const auto llt = factor(k.k);
  const Vector alpha = llt.solve(data.y);
  const Matrix kinv = llt.solve(Matrix::Identity(k.k.rows(), k.k.cols()));
  LossGrad out;
  out.loss = loss_from(llt, data.y, alpha);
  for (int p = 0; p < 3; ++p) {
    const double trace = (kinv.array() * k.dk[p].array()).sum();  // both symmetric
    out.grad(p) = 0.5 * trace - 0.5 * alpha.dot(k.dk[p] * alpha);
  }
  return out;
}

double exact_loss(const Hyperparams& params, const Dataset& data) {
  const Kernel k = kernel_matrix(params, data.x);
  const auto llt = factor(k.k);
  return loss_from(llt, data.y, llt.solve(data.y));
}

std::vector<Vector> rademacher_probes(Index n, int t, Rng& rng) {
  if (t <= 0) throw ValidationError("need at least one probe vector");
  std::vector<Vector> z(static_cast<std::size_t>(t), Vector(n));
  for (auto& v : z)
    for (Index i = 0; i < n; ++i) v(i) = rng.rademacher();
  return z;
}

std::string describe(const SolverSpec& spec) {
  std::ostringstream s;
  switch (spec.kind) {
    case SolverKind::Cholesky: s << "cholesky"; break;
    case SolverKind::CG: s << "cg(" << spec.cg_iterations << ")"; break;
    case SolverKind::AsCg: s << "as-cg(eta=" << spec.eta << ")"; break;
    case SolverKind::RrCg: s << "rr-cg(n=" << spec.rr.min_iters << ",lambda=" << spec.rr.lambda << ")"; break;
  }
  return s.str();
}

namespace {

struct SolveOut {
  Vector x;
  Vector iterate;
  int iterations = 0;
};

class KernelSolver {
 public:
  KernelSolver(const Kernel& k, const SolverSpec& spec) : spec_(spec), op_(k.k, {true, true}) {
    if (spec.kind == SolverKind::Cholesky) llt_ = factor(k.k);
    if (spec.kind == SolverKind::CG && spec.cg_iterations < 0)
      throw ValidationError("CG iteration budget must be non-negative");
  }

  SolveOut solve(const Vector& rhs, const Vector& x0, Rng& rng) const {
    switch (spec_.kind) {
      case SolverKind::Cholesky: {
        Vector x = llt_.solve(rhs);
        return {x, x, 0};
      }
      case SolverKind::CG: {
        // Fixed budget: stop early only on exact convergence.
        CgSolver cg(op_, rhs, x0);
        while (cg.iteration() < spec_.cg_iterations && !cg.exact() && cg.residual_norm() > 0.0)
          cg.step();
        return {cg.solution(), cg.solution(), cg.iteration()};
      }
      case SolverKind::AsCg:
      case SolverKind::RrCg: {
        const EstimatorSpec est = spec_.kind == SolverKind::AsCg ? EstimatorSpec(AsConfig(spec_.eta))
                                                                 : EstimatorSpec(spec_.rr);
        auto r = randomized_solve(op_, rhs, x0, Method::CG, est, spec_.tol, spec_.maxit, rng);
        return {std::move(r.estimate), std::move(r.solver_iterate), r.executed_iterations};
      }
    }
    throw ValidationError("unknown solver kind");
  }

  [[nodiscard]] bool randomized() const {
    return spec_.kind == SolverKind::AsCg || spec_.kind == SolverKind::RrCg;
  }

 private:
  SolverSpec spec_;
  DenseOperator op_;
  Eigen::LLT<Matrix> llt_;
};

}  // namespace

StochasticGrad stochastic_grad(const Hyperparams& params, const Dataset& data,
                               const std::vector<Vector>& probes, const SolverSpec& spec,
                               Rng& rng, const Vector* warm_start) {
  if (probes.empty()) throw ValidationError("need at least one probe vector");
  const Index n = data.size();
  if (data.y.size() != n) throw DimensionError("targets and inputs differ in length");
  const Kernel k = kernel_matrix(params, data.x);
  const KernelSolver solver(k, spec);
  const Vector zero = Vector::Zero(n);
  const Vector& y0 = warm_start && warm_start->size() == n ? *warm_start : zero;

  StochasticGrad out;
  long total_iters = 0;
  int solves = 0;

  const SolveOut a = solver.solve(data.y, y0, rng);
  total_iters += a.iterations;
  ++solves;
  Vector b = a.x;
  if (solver.randomized() && spec.independent_bilinear) {
    const SolveOut second = solver.solve(data.y, y0, rng);
    total_iters += second.iterations;
    ++solves;
    b = second.x;
  }
  out.warm_start = a.iterate;

  Eigen::Vector3d trace = Eigen::Vector3d::Zero();
  for (const Vector& z : probes) {
    if (z.size() != n) throw DimensionError("probe length does not match the dataset");
    const SolveOut u = solver.solve(z, zero, rng);
    total_iters += u.iterations;
    ++solves;
    for (int p = 0; p < 3; ++p) trace(p) += u.x.dot(k.dk[p] * z);
  }
  trace /= static_cast<double>(probes.size());
  for (int p = 0; p < 3; ++p) out.grad(p) = 0.5 * trace(p) - 0.5 * a.x.dot(k.dk[p] * b);
  out.avg_solver_iters = static_cast<double>(total_iters) / solves;
  return out;
}

Eigen::Vector3d Adam::step(const Eigen::Vector3d& grad, double lr) {
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const Eigen::Vector3d m_hat = m / (1.0 - std::pow(beta1, t));
  const Eigen::Vector3d v_hat = v / (1.0 - std::pow(beta2, t));
  return -lr * (m_hat.array() / (v_hat.array().sqrt() + eps)).matrix();
}

std::vector<TraceRow> train(const Dataset& data, Hyperparams init, const TrainConfig& config) {
  data.validate();
  if (config.steps < 0) throw ValidationError("steps must be non-negative");
  if (!(config.lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (config.probes <= 0) throw ValidationError("need at least one probe vector");

  std::vector<TraceRow> trace;
  Adam adam;
  Rng rng(config.seed, 0x6770);
  Eigen::Vector3d theta = init.as_vector();
  Vector warm;
  for (int step = 0; step < config.steps; ++step) {
    double lr = config.lr;
    for (int m : config.milestones)
      if (step >= m) lr *= config.factor;
    const auto probes = rademacher_probes(data.size(), config.probes, rng);
    const auto params = Hyperparams::from_vector(theta);
    const auto g = stochastic_grad(params, data, probes, config.solver, rng,
                                   config.warm_start && warm.size() > 0 ? &warm : nullptr);
    if (!g.grad.allFinite())
      throw TrainingDiverged("gradient is not finite at step " + std::to_string(step + 1), trace);
    if (config.warm_start) warm = g.warm_start;
    theta += adam.step(g.grad, lr);

    TraceRow row;
    row.step = step + 1;
    row.params = Hyperparams::from_vector(theta);
    row.avg_solver_iters = g.avg_solver_iters;
    try {
      row.loss = exact_loss(row.params, data);
    } catch (const NumericalError& e) {
      throw TrainingDiverged(std::string("loss evaluation failed: ") + e.what(), trace);
    }
    if (!std::isfinite(row.loss))
      throw TrainingDiverged("loss is not finite at step " + std::to_string(row.step), trace);
    trace.push_back(row);
  }
  return trace;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "step,loss,log_gamma,log_l,log_sigma2,avg_solver_iters\n";
  const auto old = out.precision(17);
  for (const auto& r : trace)
    out << r.step << ',' << r.loss << ',' << r.params.log_gamma << ',' << r.params.log_l << ','
        << r.params.log_sigma2 << ',' << r.avg_solver_iters << '\n';
  out.precision(old);
}

Dataset synthetic_dataset(Index n, Index d, const Hyperparams& truth, std::uint64_t seed) {
  if (n <= 0 || d <= 0) throw ValidationError("dataset dimensions must be positive");
  Rng rng(seed, 0x4750);
  Dataset data;
  data.x.resize(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) data.x(i, j) = rng.uniform();
  const Kernel k = kernel_matrix(truth, data.x);
  const auto llt = factor(k.k);
  Vector z(n);
  for (Index i = 0; i < n; ++i) z(i) = rng.normal();
  data.y = llt.matrixL() * z;
  return data;
}

Dataset read_csv_dataset(std::istream& in, int target_col) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t width = 0;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) + ": not a number: '" + cell + "'");
      }
    }
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                       " columns");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("dataset file has no rows");
  if (width < 2) throw ParseError("dataset needs at least one feature and a target");
  const int w = static_cast<int>(width);
  const int tc = target_col < 0 ? w + target_col : target_col;
  if (tc < 0 || tc >= w) throw ValidationError("target column is out of range");

  const auto n = static_cast<Index>(rows.size());
  Matrix all(n, w);
  for (Index i = 0; i < n; ++i)
    for (int j = 0; j < w; ++j) all(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  for (int j = 0; j < w; ++j) {
    const double mean = all.col(j).mean();
    all.col(j).array() -= mean;
    const double sd = std::sqrt(all.col(j).squaredNorm() / static_cast<double>(std::max<Index>(n - 1, 1)));
    if (sd > 0.0) all.col(j) /= sd;
  }
  Dataset data;
  data.x.resize(n, w - 1);
  for (int j = 0, c = 0; j < w; ++j) {
    if (j == tc) continue;
    data.x.col(c++) = all.col(j);
  }
  data.y = all.col(tc);
  data.validate();
  return data;
}

}  // namespace rtk::gp
