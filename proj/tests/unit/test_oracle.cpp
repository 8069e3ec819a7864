#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "rtk/errors.hpp"
#include "rtk/linop.hpp"
#include "rtk/oracle.hpp"
#include "rtk/rng.hpp"
#include "rtk/truncation.hpp"

using namespace rtk;

namespace {

// Squared error of each truncated estimate built from explicit orthogonal
// increments delta_k = sqrt(t_k) e_k, then averaged over P.
double objective_by_vectors(const std::vector<double>& p, const std::vector<double>& t) {
  const auto n = static_cast<Index>(t.size());
  Vector full(n);
  for (Index k = 0; k < n; ++k) full(k) = std::sqrt(t[static_cast<std::size_t>(k)]);
  double total = 0.0, cum = 0.0;
  Vector estimate = Vector::Zero(n);
  for (Index j = 0; j <= n; ++j) {
    const double pj = p[static_cast<std::size_t>(j)];
    total += pj * (estimate - full).squaredNorm();
    cum += pj;
    if (j < n) estimate(j) = full(j) / (1.0 - cum);
  }
  return total;
}

std::vector<double> random_simplex(int size, Rng& rng) {
  std::vector<double> p(static_cast<std::size_t>(size));
  double sum = 0.0;
  for (auto& v : p) sum += (v = -std::log(1.0 - rng.uniform()));
  for (auto& v : p) v /= sum;
  return p;
}

std::vector<double> strictly_diminishing(int n, Rng& rng) {
  std::vector<double> t(static_cast<std::size_t>(n));
  double v = 0.5 + rng.uniform();
  for (auto& x : t) {
    x = v;
    v *= 0.4 + 0.5 * rng.uniform();
  }
  return t;
}

}  // namespace

TEST(Objective, PointMassAtEndIsZero) {
  const std::vector<double> t{3, 2, 1};
  EXPECT_EQ(objective(std::vector<double>{0, 0, 0, 1}, t), 0.0);
}

TEST(Objective, SingleIterationByHand) {
  const std::vector<double> t{1};
  EXPECT_NEAR(objective(std::vector<double>{0.5, 0.5}, t), 1.0, 1e-15);
  for (double q : {0.1, 0.3, 0.9}) EXPECT_NEAR(objective(std::vector<double>{q, 1 - q}, t), q + q * q / (1 - q), 1e-14);
}

TEST(Objective, MatchesExplicitVectors) {
  Rng rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> t(5);
    for (auto& x : t) x = rng.uniform() * 3.0;
    const auto p = random_simplex(6, rng);
    const double ref = objective_by_vectors(p, t);
    // The reference forms survival as 1 - cumulative, which loses digits
    // when the survival is small.
    EXPECT_NEAR(objective(p, t), ref, 1e-9 * std::max(1.0, ref));
  }
}

TEST(Objective, InfiniteWhenSurvivalVanishesEarly) {
  const std::vector<double> t{1, 1};
  EXPECT_EQ(objective(std::vector<double>{0, 1, 0}, t), std::numeric_limits<double>::infinity());
  // Zero remaining improvements keep it finite.
  const std::vector<double> t0{1, 0};
  EXPECT_TRUE(std::isfinite(objective(std::vector<double>{0, 1, 0}, t0)));
}

TEST(Objective, RejectsInvalidProbabilities) {
  const std::vector<double> t{1, 1};
  EXPECT_THROW(objective(std::vector<double>{-0.1, 0.6, 0.5}, t), ValidationError);
  EXPECT_THROW(objective(std::vector<double>{0.1, 0.6, 0.5}, t), ValidationError);
  EXPECT_THROW(objective(std::vector<double>{0.5, 0.5}, t), DimensionError);
}

TEST(Objective, ZeroPaddingInvariance) {
  Rng rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> t(4);
    for (auto& x : t) x = 0.1 + rng.uniform();
    const auto p = random_simplex(5, rng);
    const double base = objective(p, t);
    auto t_pad = t;
    t_pad.insert(t_pad.end(), {0.0, 0.0});
    auto p_pad = p;
    p_pad.insert(p_pad.end(), {0.0, 0.0});
    EXPECT_NEAR(objective(p_pad, t_pad), base, 1e-12 * base);
    auto p_end = p;
    p_end[4] = 0.0;
    p_end.insert(p_end.end(), {0.0, p[4]});
    EXPECT_NEAR(objective(p_end, t_pad), base, 1e-12 * base);
  }
}

TEST(Gradient, MatchesFeasibleDirectionalDifferences) {
  Rng rng(3);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> t(6);
    for (auto& x : t) x = 0.1 + rng.uniform();
    auto p = random_simplex(7, rng);
    for (auto& v : p) v = 0.5 * v + 0.5 / 7.0;
    const auto g = objective_gradient(p, t);
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t l = i + 1; l < 7; ++l) {
        const double h = 1e-6;
        auto plus = p, minus = p;
        plus[i] += h, plus[l] -= h;
        minus[i] -= h, minus[l] += h;
        const double fd = (objective(plus, t) - objective(minus, t)) / (2 * h);
        EXPECT_NEAR(g[i] - g[l], fd, 1e-6 * std::max(1.0, std::abs(fd)));
      }
  }
}

TEST(Projection, LandsOnFeasibleSet) {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> y(9);
    for (auto& v : y) v = rng.normal();
    const double cost = 1.0 + rng.uniform() * 6.0;
    const auto p = project_feasible(y, cost, 1e-6);
    double sum = 0.0, c = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      EXPECT_GE(p[j], -1e-12);
      sum += p[j];
      c += static_cast<double>(j) * p[j];
    }
    EXPECT_GE(p.back(), 1e-6 - 1e-12);
    EXPECT_NEAR(sum, 1.0, 1e-10);
    EXPECT_NEAR(c, cost, 1e-9);
  }
}

TEST(BruteForce, ReproducesAsOnDiminishingInstances) {
  Rng rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    const int big_n = 6 + rep;
    const auto t = strictly_diminishing(big_n, rng);
    const AsConfig cfg(-1.0 + 0.2 + rng.uniform() * (big_n - 1.5));
    const TruncationSchedule as = as_probabilities_finite(t, cfg);
    const OptimizationInstance inst{t, expected_cost(t, cfg)};
    const OracleResult res = brute_force_optimum(inst);
    const double as_obj = objective(as.probs(), t);
    EXPECT_NEAR(res.objective, as_obj, 1e-6 * as_obj);
    for (int j = 0; j <= big_n; ++j) EXPECT_NEAR(res.probs[static_cast<std::size_t>(j)], as.prob(j), 1e-5);
    EXPECT_TRUE(res.certificate.holds(1e-7));
    EXPECT_EQ(res.distinct_optima.size(), 1u);

    // Stationarity: sqrt(t_j) / s_j is constant where every index from j on is random.
    double s = 1.0;
    std::vector<double> ratios;
    for (int j = 0; j < big_n; ++j) {
      s -= res.probs[static_cast<std::size_t>(j)];
      if (j >= cfg.n() + 1) ratios.push_back(std::sqrt(t[static_cast<std::size_t>(j)]) / s);
    }
    for (double r : ratios) EXPECT_NEAR(r, ratios.front(), 1e-4 * ratios.front());
  }
}

TEST(BruteForce, FullBudgetGivesPointMass) {
  const OptimizationInstance inst{{4, 2, 1}, 3.0};
  const OracleResult res = brute_force_optimum(inst);
  EXPECT_EQ(res.objective, 0.0);
  EXPECT_EQ(res.probs.back(), 1.0);
}

TEST(BruteForce, BeatsAsOnAdversarialInstances) {
  for (int n : {-1, 0, 1}) {
    const double eps = 0.01;
    const auto t = adversarial_improvements(n, 2, eps, 10);
    const AsConfig cfg(n + 0.5);
    const TruncationSchedule as = as_probabilities_finite(t, cfg);
    double sum = 0.0;
    for (double p : as.probs()) {
      EXPECT_GE(p, 0.0);
      sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-10);
    const OracleResult res = brute_force_optimum({t, as.expected_cost()});
    EXPECT_LT(res.objective, objective(as.probs(), t) - 1e-8);
    EXPECT_TRUE(res.certificate.holds(1e-7));
  }
}

TEST(BruteForce, RejectsBadInstances) {
  EXPECT_THROW(brute_force_optimum({{1, 2}, 0.0}), ValidationError);
  EXPECT_THROW(brute_force_optimum({{1, 2}, 2.5}), ValidationError);
  EXPECT_THROW(brute_force_optimum({std::vector<double>(31, 1.0), 3.0}), ValidationError);
}

TEST(Adversarial, SatisfiesConditions) {
  const auto t = adversarial_improvements(-1, 2, 0.01, 10);
  ASSERT_EQ(t.size(), 10u);
  EXPECT_TRUE(adversarial_violations(t, -1, 2, 0.01).empty());
  // Independent re-check with n = -1: t_0 is the anchor.
  EXPECT_GT(t[1] + 0.01, t[0]);
  EXPECT_GT(t[0], t[1]);
  EXPECT_EQ(t[1], t[2]);
  EXPECT_NEAR(t[3], t[0] + 2 * 0.01, 1e-15);
  double tail = 0.0;
  for (std::size_t j = 3; j < t.size(); ++j) tail += t[j];
  EXPECT_GT(tail, t[0] + 2 * 0.01);
  for (double v : t) EXPECT_GE(v, 0.0);
}

TEST(Adversarial, CheckerFlagsBrokenSequences) {
  auto t = adversarial_improvements(0, 2, 0.01, 10);
  EXPECT_TRUE(adversarial_violations(t, 0, 2, 0.01).empty());
  t[2] = t[1] + 0.5;
  EXPECT_FALSE(adversarial_violations(t, 0, 2, 0.01).empty());
}

TEST(Adversarial, RejectsInfeasibleParameters) {
  EXPECT_THROW(adversarial_improvements(-1, 2, 0.0, 10), ValidationError);
  EXPECT_THROW(adversarial_improvements(5, 2, 0.01, 10), ValidationError);
  EXPECT_THROW(adversarial_improvements(-2, 2, 0.01, 10), ValidationError);
  EXPECT_THROW(adversarial_improvements(0, 0, 0.01, 10), ValidationError);
}
