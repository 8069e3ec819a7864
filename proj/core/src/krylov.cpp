#include "rtk/krylov.hpp"

#include <cmath>
#include <string>

#include "rtk/errors.hpp"

namespace rtk {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::CG: return "cg";
    case Method::CR: return "cr";
    case Method::GMRES: return "gmres";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "cg") return Method::CG;
  if (name == "cr") return Method::CR;
  if (name == "gmres") return Method::GMRES;
  throw ValidationError("unknown Krylov method '" + std::string(name) + "'");
}

KrylovSolver::KrylovSolver(const LinearOperator& op, const Vector& b, const Vector& x0)
    : op_(op), b_(b), x_(x0) {
  if (b.size() != op.size() || x0.size() != op.size())
    throw DimensionError("right-hand side and initial guess must match the operator dimension");
  if (!b.allFinite() || !x0.allFinite()) throw ValidationError("non-finite input vector");
}

// ---------------------------------------------------------------------------
// CG

CgSolver::CgSolver(const LinearOperator& op, const Vector& b, const Vector& x0, SolverOptions opts)
    : KrylovSolver(op, b, x0), opts_(opts) {
  if (!op.spd_asserted()) throw ValidationError("CG requires an operator flagged SPD");
  op_.apply(x_, ap_);
  r_ = b_ - ap_;
  p_ = r_;
  rr_ = r_.squaredNorm();
  residual_norm_ = initial_residual_norm_ = std::sqrt(rr_);
  exact_ = (rr_ == 0.0);
}

IterationRecord CgSolver::step() {
  IterationRecord rec;
  rec.index = iteration_++;
  if (rr_ == 0.0) {
    rec.delta_x = Vector::Zero(x_.size());
    rec.exact = exact_ = true;
    return rec;
  }
  op_.apply(p_, ap_);
  const double pap = p_.dot(ap_);
  if (!(pap > kBreakdownThreshold))
    throw NotSpdError("CG: (Ap, p) = " + std::to_string(pap) + " at iteration " +
                      std::to_string(rec.index) + "; operator is not positive definite");
  const double alpha = rr_ / pap;
  rec.alpha = alpha;
  rec.q_norm_sq = pap;
  rec.improvement = alpha * rr_;
  rec.delta_x = alpha * p_;
  x_ += rec.delta_x;

  if (opts_.recompute_every > 0 && iteration_ % opts_.recompute_every == 0) {
    op_.apply(x_, ap_);
    r_ = b_ - ap_;
  } else {
    r_.noalias() -= alpha * ap_;
  }
  const double rr_next = r_.squaredNorm();
  const double beta = rr_next / rr_;
  p_ = r_ + beta * p_;
  rr_ = rr_next;
  residual_norm_ = std::sqrt(rr_);
  rec.residual_norm = residual_norm_;
  rec.exact = exact_ = (rr_ == 0.0);
  return rec;
}

// ---------------------------------------------------------------------------
// CR

CrSolver::CrSolver(const LinearOperator& op, const Vector& b, const Vector& x0, SolverOptions opts)
    : KrylovSolver(op, b, x0), opts_(opts) {
  if (!op.symmetric()) throw ValidationError("CR requires a symmetric operator");
  op_.apply(x_, ar_);
  r_ = b_ - ar_;
  op_.apply(r_, ar_);
  p_ = r_;
  ap_ = ar_;
  rar_ = r_.dot(ar_);
  residual_norm_ = initial_residual_norm_ = r_.norm();
  exact_ = (residual_norm_ == 0.0);
}

IterationRecord CrSolver::step() {
  IterationRecord rec;
  rec.index = iteration_++;
  if (residual_norm_ == 0.0) {
    rec.delta_x = Vector::Zero(x_.size());
    rec.exact = exact_ = true;
    return rec;
  }
  const double apap = ap_.squaredNorm();
  if (!(apap > kBreakdownThreshold))
    throw BreakdownError("CR: ||A p|| vanished at iteration " + std::to_string(rec.index));
  if (!(std::abs(rar_) > kBreakdownThreshold))
    throw BreakdownError("CR: (r, A r) vanished at iteration " + std::to_string(rec.index));
  const double alpha = rar_ / apap;
  rec.alpha = alpha;
  rec.q_norm_sq = apap;
  rec.improvement = alpha * alpha * apap;
  rec.delta_x = alpha * p_;
  x_ += rec.delta_x;

  if (opts_.recompute_every > 0 && iteration_ % opts_.recompute_every == 0) {
    op_.apply(x_, ar_);
    r_ = b_ - ar_;
  } else {
    r_.noalias() -= alpha * ap_;
  }
  op_.apply(r_, ar_);
  const double rar_next = r_.dot(ar_);
  const double beta = rar_next / rar_;
  p_ = r_ + beta * p_;
  ap_ = ar_ + beta * ap_;
  rar_ = rar_next;
  residual_norm_ = r_.norm();
  rec.residual_norm = residual_norm_;
  rec.exact = exact_ = (residual_norm_ == 0.0);
  return rec;
}

// ---------------------------------------------------------------------------
// GMRES

GmresSolver::GmresSolver(const LinearOperator& op, const Vector& b, const Vector& x0)
    : KrylovSolver(op, b, x0) {
  Vector ax;
  op_.apply(x_, ax);
  Vector r0 = b_ - ax;
  gamma_ = r0.norm();
  residual_norm_ = initial_residual_norm_ = gamma_;
  exact_ = (gamma_ == 0.0);
  if (!exact_) basis_.push_back(r0 / gamma_);
}

IterationRecord GmresSolver::step() {
  IterationRecord rec;
  const int j = iteration_++;
  rec.index = j;
  rec.alpha = 1.0;
  if (exact_) {
    rec.delta_x = Vector::Zero(x_.size());
    rec.exact = true;
    return rec;
  }

  // Arnoldi with modified Gram-Schmidt and one reorthogonalization pass.
  Vector w;
  op_.apply(basis_[j], w);
  std::vector<double> h(j + 2, 0.0);
  for (int pass = 0; pass < 2; ++pass) {
    for (int i = 0; i <= j; ++i) {
      const double c = w.dot(basis_[i]);
      h[i] += c;
      w.noalias() -= c * basis_[i];
    }
  }
  const double h_next = w.norm();
  h[j + 1] = h_next;

  for (int i = 0; i < j; ++i) {
    const double top = cs_[i] * h[i] + sn_[i] * h[i + 1];
    h[i + 1] = -sn_[i] * h[i] + cs_[i] * h[i + 1];
    h[i] = top;
  }
  const double denom = std::hypot(h[j], h[j + 1]);
  if (!(denom > kBreakdownThreshold))
    throw BreakdownError("GMRES: singular Hessenberg column at iteration " + std::to_string(j));
  const double c = h[j] / denom;
  const double s = h[j + 1] / denom;
  cs_.push_back(c);
  sn_.push_back(s);
  h[j] = denom;
  h[j + 1] = 0.0;

  const double g = c * gamma_;
  gamma_ = -s * gamma_;

  Vector d = basis_[j];
  for (int i = 0; i < j; ++i) d.noalias() -= h[i] * directions_[i];
  d /= denom;

  rec.delta_x = g * d;
  rec.improvement = g * g;
  rec.q_norm_sq = rec.improvement;
  x_ += rec.delta_x;
  directions_.push_back(std::move(d));

  residual_norm_ = std::abs(gamma_);
  rec.residual_norm = residual_norm_;
  if (!(h_next > kBreakdownThreshold) || gamma_ == 0.0) {
    // Happy breakdown: the Krylov space is invariant and x is exact.
    exact_ = true;
    residual_norm_ = 0.0;
    rec.residual_norm = 0.0;
    rec.exact = true;
  } else {
    basis_.push_back(w / h_next);
  }
  return rec;
}

// ---------------------------------------------------------------------------

std::unique_ptr<KrylovSolver> make_solver(Method method, const LinearOperator& op,
                                          const Vector& b, const Vector& x0, SolverOptions opts) {
  switch (method) {
    case Method::CG: return std::make_unique<CgSolver>(op, b, x0, opts);
    case Method::CR: return std::make_unique<CrSolver>(op, b, x0, opts);
    case Method::GMRES: return std::make_unique<GmresSolver>(op, b, x0);
  }
  throw ValidationError("unknown Krylov method");
}

DeterministicResult solve_deterministic(const LinearOperator& op, const Vector& b,
                                        const Vector& x0, Method method, double tol, int maxit,
                                        SolverOptions opts, bool keep_increments) {
  if (!(tol > 0.0)) throw ValidationError("tolerance must be positive");
  if (maxit < 0) throw ValidationError("maxit must be non-negative");
  auto solver = make_solver(method, op, b, x0, opts);
  const double bnorm = b.norm();
  const double target = tol * (bnorm > 0.0 ? bnorm : 1.0);

  DeterministicResult out;
  out.converged = solver->exact() || solver->residual_norm() <= target;
  while (!out.converged && solver->iteration() < maxit) {
    IterationRecord rec = solver->step();
    if (!keep_increments) rec.delta_x = Vector();
    out.converged = rec.exact || rec.residual_norm <= target;
    out.history.push_back(std::move(rec));
  }
  out.iterations = solver->iteration();
  out.x = solver->solution();
  return out;
}

}  // namespace rtk
