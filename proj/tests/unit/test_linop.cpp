#include <gtest/gtest.h>

#include <Eigen/Cholesky>
#include <sstream>

#include "rtk/errors.hpp"
#include "rtk/linop.hpp"
#include "rtk/matrix_market.hpp"
#include "rtk/rng.hpp"

using namespace rtk;

namespace {

Vector random_vector(Index n, Rng& rng) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

Matrix random_sparse_dense(Index n, double fill, Rng& rng) {
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (rng.uniform() < fill) a(i, j) = rng.normal();
  return a;
}

}  // namespace

TEST(Matvec, IdentityAndDiagonal) {
  DenseOperator id(Matrix::Identity(3, 3), {true, true});
  EXPECT_EQ(matvec(id, Vector{{1, 2, 3}}), (Vector{{1, 2, 3}}));

  const CsrMatrix d = CsrMatrix::from_dense(10.0 * Matrix::Identity(4, 4), {true, true});
  EXPECT_EQ(matvec(d, Vector::Ones(4)), Vector::Constant(4, 10.0));
}

TEST(Matvec, CsrAgreesWithDensification) {
  Rng rng(1);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix a = random_sparse_dense(40, 0.2, rng);
    const CsrMatrix m = CsrMatrix::from_dense(a);
    EXPECT_EQ(m.to_dense(), a);
    const Vector x = random_vector(40, rng);
    const Vector dense = a * x;
    EXPECT_LE((matvec(m, x) - dense).norm(), 1e-12 * dense.norm());
  }
}

TEST(Matvec, DimensionMismatch) {
  DenseOperator id(Matrix::Identity(3, 3), {});
  EXPECT_THROW(matvec(id, Vector::Ones(4)), DimensionError);
}

TEST(Matvec, Linearity) {
  Rng rng(2);
  const CsrMatrix sparse = gen_sparse_spd(30, 0.2, 5.0, 3);
  const DenseOperator dense(random_sparse_dense(30, 0.5, rng), {});
  for (const LinearOperator* op : {static_cast<const LinearOperator*>(&sparse),
                                   static_cast<const LinearOperator*>(&dense)}) {
    for (int rep = 0; rep < 20; ++rep) {
      const Vector x = random_vector(30, rng), y = random_vector(30, rng);
      const double a = rng.normal(), b = rng.normal();
      const Vector lhs = matvec(*op, a * x + b * y);
      const Vector rhs = a * matvec(*op, x) + b * matvec(*op, y);
      EXPECT_LE((lhs - rhs).norm(), 1e-12 * std::max(1.0, rhs.norm()));
    }
  }
}

TEST(EnergyNorm, Examples) {
  DenseOperator id(Matrix::Identity(2, 2), {true, true});
  EXPECT_DOUBLE_EQ(energy_norm_sq(id, Vector{{3, 4}}), 25.0);
  DenseOperator d(Vector{{2, 8}}.asDiagonal(), {true, true});
  EXPECT_DOUBLE_EQ(energy_norm_sq(d, Vector{{1, 1}}), 10.0);
}

TEST(EnergyNorm, MatchesTripleProduct) {
  Rng rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    Matrix g(5, 5);
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 5; ++j) g(i, j) = rng.normal();
    const Matrix a = g * g.transpose() + Matrix::Identity(5, 5);
    const Vector x = random_vector(5, rng);
    double triple = 0.0;
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 5; ++j) triple += x(i) * a(i, j) * x(j);
    const double v = energy_norm_sq(DenseOperator(a, {true, true}), x);
    EXPECT_GE(v, 0.0);
    EXPECT_NEAR(v, triple, 1e-12 * triple);
  }
}

TEST(EnergyNorm, RejectsNonsymmetric) {
  DenseOperator a(Matrix::Identity(2, 2), {false, false});
  EXPECT_THROW(energy_norm_sq(a, Vector::Ones(2)), ValidationError);
}

TEST(Generator, ZeroDensityGivesScaledIdentity) {
  const CsrMatrix a = gen_sparse_spd(4, 0.0, 10.0, 123);
  EXPECT_EQ(a.to_dense(), 100.0 * Matrix::Identity(4, 4));
  EXPECT_TRUE(a.spd_asserted());
}

TEST(Generator, SymmetricAndFactorizable) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix a6 = gen_sparse_spd(6, 0.5, 1.0, seed).to_dense();
    EXPECT_LE((a6 - a6.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    for (double diag : {8.0, 10.0}) {
      for (double density : {0.1, 0.2}) {
        const Matrix a = gen_sparse_spd(100, density, diag, seed).to_dense();
        EXPECT_EQ(a, a.transpose());
        EXPECT_EQ(Eigen::LLT<Matrix>(a).info(), Eigen::Success);
      }
    }
  }
}

TEST(Generator, DeterministicInSeed) {
  EXPECT_EQ(gen_sparse_spd(20, 0.3, 2.0, 9).to_dense(), gen_sparse_spd(20, 0.3, 2.0, 9).to_dense());
  EXPECT_NE(gen_sparse_spd(20, 0.3, 2.0, 9).to_dense(), gen_sparse_spd(20, 0.3, 2.0, 10).to_dense());
  EXPECT_EQ(gen_rhs(10, 4), gen_rhs(10, 4));
}

TEST(Generator, RejectsBadParameters) {
  EXPECT_THROW(gen_sparse_spd(0, 0.1, 1.0, 1), ValidationError);
  EXPECT_THROW(gen_sparse_spd(5, 1.5, 1.0, 1), ValidationError);
  EXPECT_THROW(gen_sparse_spd(5, 0.1, std::nan(""), 1), ValidationError);
}

TEST(Csr, RejectsBrokenInvariants) {
  EXPECT_THROW(CsrMatrix(2, {0, 2, 1}, {0, 1}, {1.0, 2.0}), ValidationError);
  EXPECT_THROW(CsrMatrix(2, {0, 2, 2}, {1, 0}, {1.0, 2.0}), ValidationError);
  EXPECT_THROW(CsrMatrix(2, {0, 1, 2}, {0, 2}, {1.0, 2.0}), ValidationError);
  EXPECT_THROW(CsrMatrix(1, {0, 1}, {0}, {std::nan("")}), ValidationError);
  EXPECT_NO_THROW(CsrMatrix(2, {0, 1, 2}, {0, 1}, {1.0, 2.0}));
}

TEST(MatrixMarket, RoundTrip) {
  Rng rng(5);
  const CsrMatrix m = CsrMatrix::from_dense(random_sparse_dense(5, 0.5, rng));
  std::stringstream s;
  write_matrix_market(m, s);
  const CsrMatrix back = read_matrix_market(s);
  EXPECT_EQ(back.row_offsets(), m.row_offsets());
  EXPECT_EQ(back.columns(), m.columns());
  EXPECT_EQ(back.values(), m.values());
}

TEST(MatrixMarket, SingleEntry) {
  const CsrMatrix m(1, {0, 1}, {0}, {7.0});
  std::stringstream s;
  write_matrix_market(m, s);
  EXPECT_EQ(s.str(), "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 7\n");
}

TEST(MatrixMarket, Errors) {
  std::stringstream bad_header("%%MatrixMarket matrix array real general\n1 1\n7\n");
  EXPECT_THROW(read_matrix_market(bad_header), ParseError);
  std::stringstream bad_token("%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 x7\n");
  EXPECT_THROW(read_matrix_market(bad_token), ParseError);
  std::stringstream short_file("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n");
  EXPECT_THROW(read_matrix_market(short_file), ParseError);
}

TEST(MatrixMarket, CommentsAndDuplicates) {
  std::stringstream s(
      "%%MatrixMarket matrix coordinate real general\n% note\n2 2 3\n1 1 1.5\n2 1 -2\n1 1 0.5\n");
  const Matrix d = read_matrix_market(s).to_dense();
  EXPECT_EQ(d(0, 0), 2.0);
  EXPECT_EQ(d(1, 0), -2.0);
}

TEST(VectorFile, RoundTrip) {
  Rng rng(6);
  const Vector v = random_vector(7, rng);
  std::stringstream s;
  write_vector(v, s);
  EXPECT_EQ(read_vector(s), v);
}

TEST(RngTest, ReproducibleAndSplit) {
  Rng a(42, 3), b(42, 3), c(42, 4);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
  }
  Rng u(1);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = u.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.015);
  EXPECT_NEAR(sq / n, 1.0, 0.015);
  for (int i = 0; i < 100; ++i) {
    const double r = u.rademacher();
    EXPECT_TRUE(r == 1.0 || r == -1.0);
    const double x = u.uniform();
    EXPECT_TRUE(x >= 0.0 && x < 1.0);
  }
}
