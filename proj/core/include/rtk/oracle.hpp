#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rtk/errors.hpp"

namespace rtk {

// Small-scale ground truth for the truncation-variance problem
//
//   min_P  sum_j P(j) ||v_j||^2   s.t.  sum_j P(j) = 1,  sum_j j P(j) = C,  P >= 0
//
// over j = 0..N, where ||v_j||^2 is the squared error of the reweighted
// estimate truncated before j.

inline constexpr int kOracleMaxIterations = 30;

struct OptimizationInstance {
  std::vector<double> improvements;  // t_0 .. t_{N-1}
  double cost = 0.0;                 // C in (0, N]

  [[nodiscard]] int size() const { return static_cast<int>(improvements.size()); }
  void validate() const;
};

/// sum_j P(j) ||v_j||^2 assembled term by term. Returns +infinity when the
/// survival level hits zero before index N while later improvements are
/// nonzero. P must lie on the simplex over 0..N.
double objective(std::span<const double> probs, std::span<const double> improvements);

/// Gradient with respect to P(0..N): sum_{k=i}^{N-1} t_k / s_k^2.
std::vector<double> objective_gradient(std::span<const double> probs,
                                       std::span<const double> improvements);

struct KktCertificate {
  double lambda = 0.0;  // multiplier of the cost constraint
  double mu = 0.0;      // multiplier of the normalization constraint
  std::vector<double> u;  // bound multipliers, u_j >= 0
  double max_stationarity_residual = 0.0;  // relative to the largest gradient entry
  double max_complementarity = 0.0;        // max_j u_j * (P(j) - lower_j)
  double min_multiplier = 0.0;             // min_j u_j, relative

  [[nodiscard]] bool holds(double tol) const;
};

/// Fits (lambda, mu) on the support of P and derives the bound multipliers.
/// `p_floor` is the lower bound imposed on P(N).
KktCertificate kkt_certificate(std::span<const double> probs, const OptimizationInstance& inst,
                               double p_floor);

struct OracleOptions {
  int restarts = 50;
  double p_floor = 1e-6;  // P(N) >= p_floor keeps the objective finite
  int gradient_iterations = 400;
  double kkt_tol = 1e-7;
  std::uint64_t seed = 0x0a11ce;
  int workers = 1;
};

struct OracleResult {
  std::vector<double> probs;
  double objective = 0.0;
  KktCertificate certificate;
  std::vector<std::vector<double>> distinct_optima;  // one per distinct restart optimum
  std::vector<double> distinct_objectives;
  int best_restart = 0;
};

/// Raised when no restart reaches a certified first-order point.
class OracleError : public NumericalError {
 public:
  OracleError(const std::string& what, std::vector<double> best, double best_objective)
      : NumericalError(what), best_(std::move(best)), best_objective_(best_objective) {}
  [[nodiscard]] const std::vector<double>& best() const { return best_; }
  [[nodiscard]] double best_objective() const { return best_objective_; }

 private:
  std::vector<double> best_;
  double best_objective_;
};

/// Projected gradient from random feasible starts (Dykstra projection onto
/// the simplex cut by the cost hyperplane), then an active-set Newton polish
/// and a KKT check on each restart's result.
OracleResult brute_force_optimum(const OptimizationInstance& inst, const OracleOptions& options = {});

/// Euclidean projection onto {P >= lower, sum P = 1, sum j P = cost} by
/// alternating Dykstra projections.
std::vector<double> project_feasible(std::span<const double> y, double cost, double p_floor,
                                     int max_sweeps = 20000, double tol = 1e-15);

/// Improvements that break diminishing returns right after the first
/// stochastic index n+1:
///   t_n > t_{n+1};  t_{n+2} + eps > t_{n+1} > t_{n+2};
///   t_{n+2} = ... = t_{n+m+1};  t_{n+m+2} = t_{n+1} + m eps;
///   sum_{j >= n+m+2} t_j > t_{n+1} + m eps.
/// Requires n >= -1, m >= 1, eps > 0 and n + m + 3 <= N - 1.
std::vector<double> adversarial_improvements(int n, int m, double eps, int big_n);

/// Names of the conditions above that `t` violates (empty when all hold).
std::vector<std::string> adversarial_violations(std::span<const double> t, int n, int m,
                                                double eps);

}  // namespace rtk
