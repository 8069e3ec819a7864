#include "rtk/linop.hpp"

#include <cmath>
#include <string>

#include "rtk/errors.hpp"
#include "rtk/rng.hpp"

namespace rtk {

DenseOperator::DenseOperator(Matrix a, OperatorFlags flags)
    : LinearOperator(flags.symmetric, flags.spd), a_(std::move(a)) {
  if (a_.rows() != a_.cols()) throw DimensionError("operator matrix must be square");
  if (!a_.allFinite()) throw ValidationError("operator matrix has non-finite entries");
}

void DenseOperator::apply(const Vector& x, Vector& y) const {
  y.resize(a_.rows());
  y.noalias() = a_ * x;
}

CsrMatrix::CsrMatrix(Index n, std::vector<std::int64_t> row_offsets,
                     std::vector<std::int64_t> columns, std::vector<double> values,
                     OperatorFlags flags)
    : LinearOperator(flags.symmetric, flags.spd),
      n_(n),
      offsets_(std::move(row_offsets)),
      columns_(std::move(columns)),
      values_(std::move(values)) {
  if (n_ < 0) throw ValidationError("negative dimension");
  if (offsets_.size() != static_cast<std::size_t>(n_) + 1 || offsets_.front() != 0)
    throw ValidationError("row offsets must have n+1 entries starting at 0");
  if (columns_.size() != values_.size() ||
      offsets_.back() != static_cast<std::int64_t>(values_.size()))
    throw ValidationError("row offsets disagree with the number of stored values");
  for (Index i = 0; i < n_; ++i) {
    const auto begin = offsets_[i];
    const auto end = offsets_[i + 1];
    if (end < begin) throw ValidationError("row offsets must be non-decreasing");
    for (auto k = begin; k < end; ++k) {
      if (columns_[k] < 0 || columns_[k] >= n_)
        throw ValidationError("column index out of range in row " + std::to_string(i));
      if (k > begin && columns_[k] <= columns_[k - 1])
        throw ValidationError("column indices must be strictly increasing in row " +
                              std::to_string(i));
      if (!std::isfinite(values_[k])) throw ValidationError("non-finite matrix value");
    }
  }
}

void CsrMatrix::apply(const Vector& x, Vector& y) const {
  y.resize(n_);
  for (Index i = 0; i < n_; ++i) {
    double sum = 0.0;
    for (auto k = offsets_[i]; k < offsets_[i + 1]; ++k) sum += values_[k] * x[columns_[k]];
    y[i] = sum;
  }
}

Matrix CsrMatrix::to_dense() const {
  Matrix a = Matrix::Zero(n_, n_);
  for (Index i = 0; i < n_; ++i)
    for (auto k = offsets_[i]; k < offsets_[i + 1]; ++k) a(i, columns_[k]) = values_[k];
  return a;
}

CsrMatrix CsrMatrix::from_dense(const Matrix& a, OperatorFlags flags) {
  if (a.rows() != a.cols()) throw DimensionError("matrix must be square");
  const Index n = a.rows();
  std::vector<std::int64_t> offsets{0};
  std::vector<std::int64_t> cols;
  std::vector<double> vals;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (a(i, j) != 0.0) {
        cols.push_back(j);
        vals.push_back(a(i, j));
      }
    }
    offsets.push_back(static_cast<std::int64_t>(vals.size()));
  }
  return CsrMatrix(n, std::move(offsets), std::move(cols), std::move(vals), flags);
}

Vector matvec(const LinearOperator& op, const Vector& x) {
  if (x.size() != op.size())
    throw DimensionError("matvec: operator has dimension " + std::to_string(op.size()) +
                         " but vector has length " + std::to_string(x.size()));
  Vector y;
  op.apply(x, y);
  return y;
}

double energy_norm_sq(const LinearOperator& op, const Vector& x) {
  if (!op.symmetric()) throw ValidationError("energy norm requires a symmetric operator");
  return x.dot(matvec(op, x));
}

bool all_finite(const Vector& x) { return x.allFinite(); }

namespace {

// Row-major dense factor; the sampling order (row by row, column by column,
// one uniform per off-diagonal slot, one normal per kept entry) is part of
// the reproducibility contract.
Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> sample_factor(
    Index n, double density, double diag, std::uint64_t seed) {
  if (n < 1) throw ValidationError("matrix dimension must be at least 1");
  if (!(density >= 0.0 && density <= 1.0)) throw ValidationError("density must lie in [0, 1]");
  if (!std::isfinite(diag)) throw ValidationError("diagonal value must be finite");
  Rng rng(seed);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      if (rng.uniform() < density) m(i, j) = rng.normal();
    }
    m(i, i) = diag;
  }
  return m;
}

}  // namespace

CsrMatrix gen_sparse_spd(Index n, double density, double diag, std::uint64_t seed) {
  const auto m = sample_factor(n, density, diag, seed);
  Matrix a(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      const double v = m.row(i).dot(m.row(j));
      a(i, j) = v;
      a(j, i) = v;
    }
  }
  return CsrMatrix::from_dense(a, {.symmetric = true, .spd = true});
}

CsrMatrix gen_sparse_nonsymmetric(Index n, double density, double diag, std::uint64_t seed) {
  const Matrix m = sample_factor(n, density, diag, seed);
  return CsrMatrix::from_dense(m, {.symmetric = false, .spd = false});
}

Vector gen_rhs(Index n, std::uint64_t seed) {
  Rng rng(seed, 0x5248u);
  Vector b(n);
  for (Index i = 0; i < n; ++i) b[i] = rng.normal();
  return b;
}

std::shared_ptr<const LinearOperator> make_operator(const CsrMatrix& m) {
  const double n = static_cast<double>(m.size());
  if (n > 0 && static_cast<double>(m.nnz()) > kDenseFillThreshold * n * n) {
    return std::make_shared<DenseOperator>(
        m.to_dense(), OperatorFlags{.symmetric = m.symmetric(), .spd = m.spd_asserted()});
  }
  return std::make_shared<CsrMatrix>(m);
}

}  // namespace rtk
