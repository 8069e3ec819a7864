#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rtk/errors.hpp"
#include "rtk/linop.hpp"
#include "rtk/rng.hpp"
#include "rtk/truncation.hpp"

namespace rtk::gp {

// Gaussian-process regression with the RBF kernel
//   k(x, x') = gamma exp(-|x - x'|^2 / (2 l^2)) + sigma2 [x == x'],
// trained on the negative marginal log likelihood
//   L = 1/2 y^T K^{-1} y + 1/2 log det K + N/2 log(2 pi).

/// Hyperparameters stored as logs so that any real vector is valid.
struct Hyperparams {
  double log_gamma = 0.0;
  double log_l = 0.0;
  double log_sigma2 = 0.0;

  [[nodiscard]] double gamma() const;
  [[nodiscard]] double lengthscale() const;
  [[nodiscard]] double sigma2() const;
  [[nodiscard]] Eigen::Vector3d as_vector() const { return {log_gamma, log_l, log_sigma2}; }
  static Hyperparams from_vector(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }
  static Hyperparams from_natural(double gamma, double l, double sigma2);
};

struct Dataset {
  Matrix x;  // N x d
  Vector y;

  [[nodiscard]] Index size() const { return x.rows(); }
  /// Rejects mismatched sizes, non-finite values and duplicate inputs.
  void validate() const;
};

/// Kernel matrix with its derivatives in (log gamma, log l, log sigma2).
struct Kernel {
  Matrix k;
  std::array<Matrix, 3> dk;

  [[nodiscard]] std::shared_ptr<DenseOperator> op() const;
};

Matrix squared_distances(const Matrix& x);
Kernel kernel_matrix(const Hyperparams& params, const Matrix& x);

struct LossGrad {
  double loss = 0.0;
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();
};

/// Exact loss and gradient by Cholesky. A failed factorization is retried
/// once with 1e-8 * mean(diag K) added to the diagonal.
LossGrad exact_mll_and_grad(const Hyperparams& params, const Dataset& data);
double exact_loss(const Hyperparams& params, const Dataset& data);

/// t Rademacher probe vectors of length n.
std::vector<Vector> rademacher_probes(Index n, int t, Rng& rng);

enum class SolverKind { Cholesky, CG, AsCg, RrCg };

struct SolverSpec {
  SolverKind kind = SolverKind::Cholesky;
  int cg_iterations = 20;   // fixed iteration budget of truncated CG
  double eta = 10.0;        // AS parameter
  RrConfig rr{};            // RR parameters
  double tol = 1e-10;       // convergence target of the randomized solves
  int maxit = 10000;
  /// Independent randomized solves for the two K^{-1} y factors of the
  /// quadratic term; false reuses one solve for both.
  bool independent_bilinear = true;
};

std::string describe(const SolverSpec& spec);

struct StochasticGrad {
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();
  double avg_solver_iters = 0.0;
  Vector warm_start;  // unweighted solver iterate of the K^{-1} y solve
};

/// Gradient with the trace term estimated by Hutchinson over `probes` and
/// every K^{-1} v product delegated to `spec`. `warm_start` seeds the
/// K^{-1} y solves.
StochasticGrad stochastic_grad(const Hyperparams& params, const Dataset& data,
                               const std::vector<Vector>& probes, const SolverSpec& spec,
                               Rng& rng, const Vector* warm_start = nullptr);

struct TrainConfig {
  int steps = 100;
  double lr = 0.01;
  std::vector<int> milestones{55, 90};  // lr *= factor from these steps on
  double factor = 0.3;
  int probes = 30;
  SolverSpec solver{};
  bool warm_start = true;
  std::uint64_t seed = 1;
};

struct TraceRow {
  int step = 0;
  double loss = 0.0;
  Hyperparams params;
  double avg_solver_iters = 0.0;
};

class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, std::vector<TraceRow> prefix)
      : NumericalError(what), prefix_(std::move(prefix)) {}
  [[nodiscard]] const std::vector<TraceRow>& prefix() const { return prefix_; }

 private:
  std::vector<TraceRow> prefix_;
};

/// Adam on the stochastic gradient; each row holds the parameters after
/// that step and their exact loss.
std::vector<TraceRow> train(const Dataset& data, Hyperparams init, const TrainConfig& config);

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

/// Inputs uniform on [0, 1]^d, targets drawn from the GP prior at `truth`.
Dataset synthetic_dataset(Index n, Index d, const Hyperparams& truth, std::uint64_t seed);

/// Headerless numeric CSV; `target_col` (negative counts from the end)
/// becomes y. Columns are standardized to zero mean and unit variance.
Dataset read_csv_dataset(std::istream& in, int target_col);

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Eigen::Vector3d m = Eigen::Vector3d::Zero(), v = Eigen::Vector3d::Zero();
  int t = 0;

  Eigen::Vector3d step(const Eigen::Vector3d& grad, double lr);
};

}  // namespace rtk::gp
