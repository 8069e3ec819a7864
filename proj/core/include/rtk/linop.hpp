#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <vector>

namespace rtk {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// y = A x for a square real matrix A of dimension n.
///
/// Implementations are immutable after construction and `apply` must be
/// reentrant: trial workers share one operator.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;

  [[nodiscard]] virtual Index size() const = 0;

  /// Writes A x into y. `y` is resized as needed and must not alias `x`.
  virtual void apply(const Vector& x, Vector& y) const = 0;

  [[nodiscard]] bool symmetric() const { return symmetric_; }
  [[nodiscard]] bool spd_asserted() const { return spd_asserted_; }

 protected:
  LinearOperator(bool symmetric, bool spd_asserted)
      : symmetric_(symmetric || spd_asserted), spd_asserted_(spd_asserted) {}

 private:
  bool symmetric_;
  bool spd_asserted_;
};

struct OperatorFlags {
  bool symmetric = false;
  bool spd = false;
};

class DenseOperator final : public LinearOperator {
 public:
  DenseOperator(Matrix a, OperatorFlags flags);

  [[nodiscard]] Index size() const override { return a_.rows(); }
  void apply(const Vector& x, Vector& y) const override;

  [[nodiscard]] const Matrix& matrix() const { return a_; }

 private:
  Matrix a_;
};

/// Compressed sparse rows. Column indices are strictly increasing within a
/// row; values are finite.
class CsrMatrix final : public LinearOperator {
 public:
  CsrMatrix(Index n, std::vector<std::int64_t> row_offsets, std::vector<std::int64_t> columns,
            std::vector<double> values, OperatorFlags flags = {});

  [[nodiscard]] Index size() const override { return n_; }
  void apply(const Vector& x, Vector& y) const override;

  [[nodiscard]] std::int64_t nnz() const { return static_cast<std::int64_t>(values_.size()); }
  [[nodiscard]] const std::vector<std::int64_t>& row_offsets() const { return offsets_; }
  [[nodiscard]] const std::vector<std::int64_t>& columns() const { return columns_; }
  [[nodiscard]] const std::vector<double>& values() const { return values_; }

  [[nodiscard]] Matrix to_dense() const;
  static CsrMatrix from_dense(const Matrix& a, OperatorFlags flags = {});

 private:
  Index n_;
  std::vector<std::int64_t> offsets_;
  std::vector<std::int64_t> columns_;
  std::vector<double> values_;
};

/// Returns A x. Throws DimensionError when x has the wrong length.
Vector matvec(const LinearOperator& op, const Vector& x);

/// x^T A x. Requires a symmetric operator.
double energy_norm_sq(const LinearOperator& op, const Vector& x);

bool all_finite(const Vector& x);

/// M has i.i.d. standard normal off-diagonal entries, each present with
/// probability `density`, and every diagonal entry equal to `diag`.
/// Returns A = M M^T, exactly symmetric.
CsrMatrix gen_sparse_spd(Index n, double density, double diag, std::uint64_t seed);

/// The factor M itself (nonsymmetric), built with the same sampling rule.
CsrMatrix gen_sparse_nonsymmetric(Index n, double density, double diag, std::uint64_t seed);

/// Standard normal right-hand side.
Vector gen_rhs(Index n, std::uint64_t seed);

/// Dense storage pays off above this fraction of nonzeros.
inline constexpr double kDenseFillThreshold = 0.3;

/// Picks dense or CSR storage for repeated products with `m`.
std::shared_ptr<const LinearOperator> make_operator(const CsrMatrix& m);

}  // namespace rtk
