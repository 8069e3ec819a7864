#pragma once

#include <memory>
#include <string_view>
#include <vector>

#include "rtk/linop.hpp"

namespace rtk {

enum class Method { CG, CR, GMRES };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

/// Telemetry of one Krylov iteration j (0-based).
///
/// `improvement` is t_j: the drop in squared energy error (CG) or squared
/// residual norm (CR, GMRES) produced by the iteration. For CG and CR it is
/// alpha^2 * q_norm_sq with q_norm_sq = ||p_j||_A^2 resp. ||A p_j||^2. GMRES
/// does not factor it: alpha is 1 and q_norm_sq = ||A delta_x||^2 = t_j.
struct IterationRecord {
  int index = 0;
  double alpha = 0.0;
  double q_norm_sq = 0.0;
  double improvement = 0.0;
  Vector delta_x;  // unweighted solution increment x_{j+1} - x_j
  double residual_norm = 0.0;  // ||r_{j+1}||_2 (recursive estimate)
  bool exact = false;  // exact convergence (zero residual or happy breakdown)
};

struct SolverOptions {
  /// Replace the recursive residual by b - A x every this many iterations
  /// (CG and CR only); 0 disables it.
  int recompute_every = 0;
};

/// Denominators below this magnitude count as breakdown.
inline constexpr double kBreakdownThreshold = 1e-300;

/// A Krylov recurrence advanced one iteration at a time.
///
/// The solver borrows the operator, which must outlive it.
class KrylovSolver {
 public:
  virtual ~KrylovSolver() = default;

  /// Runs iteration `iteration()` and returns its telemetry.
  virtual IterationRecord step() = 0;

  [[nodiscard]] virtual Method method() const = 0;
  [[nodiscard]] const Vector& solution() const { return x_; }
  [[nodiscard]] double residual_norm() const { return residual_norm_; }
  [[nodiscard]] double initial_residual_norm() const { return initial_residual_norm_; }
  [[nodiscard]] int iteration() const { return iteration_; }
  /// True once the residual is exactly zero or GMRES hit a happy breakdown.
  [[nodiscard]] bool exact() const { return exact_; }

 protected:
  KrylovSolver(const LinearOperator& op, const Vector& b, const Vector& x0);

  const LinearOperator& op_;
  Vector b_;
  Vector x_;
  double residual_norm_ = 0.0;
  double initial_residual_norm_ = 0.0;
  int iteration_ = 0;
  bool exact_ = false;
};

/// Conjugate gradients. Requires an operator flagged SPD.
class CgSolver final : public KrylovSolver {
 public:
  CgSolver(const LinearOperator& op, const Vector& b, const Vector& x0, SolverOptions opts = {});
  IterationRecord step() override;
  [[nodiscard]] Method method() const override { return Method::CG; }
  [[nodiscard]] const Vector& direction() const { return p_; }

 private:
  SolverOptions opts_;
  Vector r_, p_, ap_;
  double rr_ = 0.0;
};

/// Conjugate residuals for symmetric (possibly indefinite) operators.
class CrSolver final : public KrylovSolver {
 public:
  CrSolver(const LinearOperator& op, const Vector& b, const Vector& x0, SolverOptions opts = {});
  IterationRecord step() override;
  [[nodiscard]] Method method() const override { return Method::CR; }

 private:
  SolverOptions opts_;
  Vector r_, ar_, p_, ap_;
  double rar_ = 0.0;
};

/// Unrestarted GMRES with Givens rotations. Intermediate iterates come from
/// the direction vectors D = V R^{-1}, so x_{j+1} = x_j + g_j d_j and the
/// improvement is g_j^2, the component eliminated by rotation j.
class GmresSolver final : public KrylovSolver {
 public:
  GmresSolver(const LinearOperator& op, const Vector& b, const Vector& x0);
  IterationRecord step() override;
  [[nodiscard]] Method method() const override { return Method::GMRES; }

 private:
  std::vector<Vector> basis_;       // v_0 .. v_j
  std::vector<Vector> directions_;  // d_0 .. d_{j-1}
  std::vector<double> cs_, sn_;
  double gamma_ = 0.0;  // current residual component of the rotated rhs
};

std::unique_ptr<KrylovSolver> make_solver(Method method, const LinearOperator& op,
                                          const Vector& b, const Vector& x0,
                                          SolverOptions opts = {});

struct DeterministicResult {
  Vector x;
  int iterations = 0;
  bool converged = false;
  std::vector<IterationRecord> history;
};

/// Steps until ||r|| <= tol * ||b|| (absolute tol when b = 0) or `maxit`
/// iterations. Not converging is reported through `converged`, not thrown.
DeterministicResult solve_deterministic(const LinearOperator& op, const Vector& b,
                                        const Vector& x0, Method method, double tol, int maxit,
                                        SolverOptions opts = {}, bool keep_increments = true);

}  // namespace rtk
