#include "rtk/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "rtk/rng.hpp"

namespace rtk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// s_k = sum_{i>k} P(i) for k = 0..N-1, taken from the tail so that small
// survival levels keep their relative accuracy.
std::vector<double> survival_levels(std::span<const double> p) {
  const std::size_t n = p.size() - 1;
  std::vector<double> s(n);
  double tail = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    tail += p[k + 1];
    s[k] = tail;
  }
  return s;
}

// sum_k t_k (1/s_k - 1), equal to the term-by-term objective on the simplex.
double objective_fast(std::span<const double> p, std::span<const double> t) {
  const auto s = survival_levels(p);
  double f = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] == 0.0) continue;
    if (!(s[k] > 0.0)) return kInf;
    f += t[k] * (1.0 / s[k] - 1.0);
  }
  return f;
}

void check_probs(std::span<const double> probs, std::span<const double> t) {
  if (probs.size() != t.size() + 1)
    throw DimensionError("probabilities must cover indices 0..N");
  double sum = 0.0;
  for (double v : probs) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("probabilities must be non-negative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("probabilities must sum to one");
}

}  // namespace

void OptimizationInstance::validate() const {
  const int n = size();
  if (n < 1) throw ValidationError("instance needs at least one improvement");
  if (n > kOracleMaxIterations) throw ValidationError("oracle instances are limited to N <= 30");
  for (double v : improvements)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ValidationError("improvements must be finite and non-negative");
  if (!(cost > 0.0) || cost > n) throw ValidationError("cost budget must lie in (0, N]");
}

double objective(std::span<const double> probs, std::span<const double> improvements) {
  check_probs(probs, improvements);
  const std::size_t n = improvements.size();
  const auto s = survival_levels(probs);
  for (std::size_t k = 0; k < n; ++k)
    if (improvements[k] != 0.0 && !(s[k] > 0.0)) return kInf;

  // Weighted squared error of the estimate truncated before j: increments
  // k < j carry the reweighting error (1 - 1/s_k), increments k >= j are
  // missing entirely.
  double total = 0.0;
  for (std::size_t j = 0; j <= n; ++j) {
    if (probs[j] == 0.0) continue;
    double v = 0.0;
    for (std::size_t k = 0; k < j; ++k) {
      if (improvements[k] == 0.0) continue;
      const double w = 1.0 - 1.0 / s[k];
      v += w * w * improvements[k];
    }
    for (std::size_t k = j; k < n; ++k) v += improvements[k];
    total += probs[j] * v;
  }
  return total;
}

std::vector<double> objective_gradient(std::span<const double> probs,
                                       std::span<const double> improvements) {
  if (probs.size() != improvements.size() + 1)
    throw DimensionError("probabilities must cover indices 0..N");
  const std::size_t n = improvements.size();
  const auto s = survival_levels(probs);
  std::vector<double> g(n + 1, 0.0);
  double acc = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    if (improvements[k] != 0.0) acc += s[k] > 0.0 ? improvements[k] / (s[k] * s[k]) : kInf;
    g[k] = acc;
  }
  return g;
}

bool KktCertificate::holds(double tol) const {
  return max_stationarity_residual <= tol && max_complementarity <= tol && min_multiplier >= -tol;
}

namespace {

constexpr double kSupportTol = 1e-9;

std::vector<double> lower_bounds(std::size_t size, double p_floor) {
  std::vector<double> lb(size, 0.0);
  lb.back() = p_floor;
  return lb;
}

// Least-squares (lambda, mu) for g_j = j lambda + mu over `free`.
std::pair<double, double> fit_multipliers(const std::vector<double>& g,
                                          const std::vector<int>& free) {
  if (free.empty()) return {0.0, 0.0};
  if (free.size() == 1) return {0.0, g[static_cast<std::size_t>(free[0])]};
  double sj = 0, sjj = 0, sg = 0, sjg = 0;
  const auto m = static_cast<double>(free.size());
  for (int j : free) {
    const double gj = g[static_cast<std::size_t>(j)];
    sj += j;
    sjj += static_cast<double>(j) * j;
    sg += gj;
    sjg += j * gj;
  }
  const double det = m * sjj - sj * sj;
  const double lambda = (m * sjg - sj * sg) / det;
  const double mu = (sg - lambda * sj) / m;
  return {lambda, mu};
}

}  // namespace

KktCertificate kkt_certificate(std::span<const double> probs, const OptimizationInstance& inst,
                               double p_floor) {
  const auto g = objective_gradient(probs, inst.improvements);
  const auto lb = lower_bounds(probs.size(), p_floor);
  std::vector<int> free;
  for (std::size_t j = 0; j < probs.size(); ++j)
    if (probs[j] - lb[j] > kSupportTol) free.push_back(static_cast<int>(j));

  KktCertificate c;
  std::tie(c.lambda, c.mu) = fit_multipliers(g, free);
  double scale = 1.0;
  for (double v : g) scale = std::max(scale, std::abs(v));
  c.u.assign(probs.size(), 0.0);
  c.min_multiplier = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    const double r = g[j] - static_cast<double>(j) * c.lambda - c.mu;
    const bool is_free = probs[j] - lb[j] > kSupportTol;
    if (is_free) {
      c.max_stationarity_residual = std::max(c.max_stationarity_residual, std::abs(r) / scale);
    } else {
      c.u[j] = r;
      c.min_multiplier = std::min(c.min_multiplier, r / scale);
      c.max_complementarity =
          std::max(c.max_complementarity, std::abs(r * (probs[j] - lb[j])) / scale);
    }
  }
  return c;
}

std::vector<double> project_feasible(std::span<const double> y, double cost, double p_floor,
                                     int max_sweeps, double tol) {
  const std::size_t size = y.size();
  const auto lb = lower_bounds(size, p_floor);
  // Affine part: x - A^T (A A^T)^{-1} (A x - c) with rows (1, ..., 1) and (0, 1, ..., N).
  double s1 = 0, s2 = 0;
  for (std::size_t j = 0; j < size; ++j) {
    s1 += static_cast<double>(j);
    s2 += static_cast<double>(j) * static_cast<double>(j);
  }
  const double m = static_cast<double>(size);
  const double det = m * s2 - s1 * s1;
  const auto project_affine = [&](std::vector<double>& x) {
    double r1 = -1.0, r2 = -cost;
    for (std::size_t j = 0; j < size; ++j) {
      r1 += x[j];
      r2 += static_cast<double>(j) * x[j];
    }
    const double a = (s2 * r1 - s1 * r2) / det;
    const double b = (m * r2 - s1 * r1) / det;
    for (std::size_t j = 0; j < size; ++j) x[j] -= a + b * static_cast<double>(j);
  };

  std::vector<double> x(y.begin(), y.end()), p(size, 0.0), q(size, 0.0), a(size), next(size);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (std::size_t j = 0; j < size; ++j) a[j] = x[j] + p[j];
    project_affine(a);
    for (std::size_t j = 0; j < size; ++j) p[j] = x[j] + p[j] - a[j];
    double change = 0.0;
    for (std::size_t j = 0; j < size; ++j) {
      next[j] = std::max(lb[j], a[j] + q[j]);
      q[j] = a[j] + q[j] - next[j];
      change = std::max(change, std::abs(next[j] - x[j]));
    }
    x.swap(next);
    if (change <= tol) break;
  }
  return x;
}

namespace {

struct Polished {
  std::vector<double> probs;
  double objective = kInf;
};

class Solver {
 public:
  Solver(const OptimizationInstance& inst, const OracleOptions& opt)
      : t_(inst.improvements),
        cost_(inst.cost),
        opt_(opt),
        size_(t_.size() + 1),
        lb_(lower_bounds(size_, opt.p_floor)) {}

  Polished run(int restart) const {
    std::vector<double> start(size_);
    if (restart == 0) {
      std::fill(start.begin(), start.end(), 1.0 / static_cast<double>(size_));
    } else {
      Rng rng(opt_.seed, static_cast<std::uint64_t>(restart));
      double total = 0.0;
      for (auto& v : start) {
        v = -std::log(1.0 - rng.uniform());
        total += v;
      }
      for (auto& v : start) v /= total;
    }
    auto p = project_feasible(start, cost_, opt_.p_floor);
    gradient_descent(p);
    polish(p);
    return {p, objective_fast(p, t_)};
  }

 private:
  void gradient_descent(std::vector<double>& p) const {
    double f = objective_fast(p, t_);
    double step = 0.0;
    std::vector<double> trial(size_);
    for (int it = 0; it < opt_.gradient_iterations; ++it) {
      const auto g = objective_gradient(p, t_);
      if (step == 0.0) {
        double gmax = 0.0;
        for (double v : g) gmax = std::max(gmax, std::abs(v));
        step = 1.0 / (1.0 + gmax);
      }
      bool accepted = false;
      std::vector<double> cand;
      double fc = kInf;
      for (int bt = 0; bt < 60; ++bt) {
        for (std::size_t j = 0; j < size_; ++j) trial[j] = p[j] - step * g[j];
        cand = project_feasible(trial, cost_, opt_.p_floor);
        fc = objective_fast(cand, t_);
        double decrease = 0.0;
        for (std::size_t j = 0; j < size_; ++j) decrease += g[j] * (cand[j] - p[j]);
        if (fc <= f + 1e-4 * decrease) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      double change = 0.0;
      for (std::size_t j = 0; j < size_; ++j) change = std::max(change, std::abs(cand[j] - p[j]));
      p.swap(cand);
      f = fc;
      if (change < 1e-13) break;
      step *= 2.0;
    }
  }

  // Active-set Newton on the free coordinates, releasing bound coordinates
  // whose multiplier is negative.
  void polish(std::vector<double>& p) const {
    std::vector<char> is_free(size_, 0);
    for (std::size_t j = 0; j < size_; ++j) is_free[j] = p[j] - lb_[j] > kSupportTol;
    for (std::size_t j = 0; j < size_; ++j)
      if (!is_free[j]) p[j] = lb_[j];

    for (int outer = 0; outer < 4 * static_cast<int>(size_); ++outer) {
      newton(p, is_free);
      const auto g = objective_gradient(p, t_);
      std::vector<int> free;
      for (std::size_t j = 0; j < size_; ++j)
        if (is_free[j]) free.push_back(static_cast<int>(j));
      const auto [lambda, mu] = fit_multipliers(g, free);
      double scale = 1.0;
      for (double v : g) scale = std::max(scale, std::abs(v));
      int worst = -1;
      double worst_u = -1e-11 * scale;
      for (std::size_t j = 0; j < size_; ++j) {
        if (is_free[j]) continue;
        const double u = g[j] - static_cast<double>(j) * lambda - mu;
        if (u < worst_u) {
          worst_u = u;
          worst = static_cast<int>(j);
        }
      }
      if (worst < 0) break;
      is_free[static_cast<std::size_t>(worst)] = 1;
    }
  }

  void newton(std::vector<double>& p, std::vector<char>& is_free) const {
    const std::size_t n = t_.size();
    for (int it = 0; it < 200; ++it) {
      std::vector<int> free;
      for (std::size_t j = 0; j < size_; ++j)
        if (is_free[j]) free.push_back(static_cast<int>(j));
      const auto m = static_cast<Eigen::Index>(free.size());
      if (m == 0) return;

      const auto s = survival_levels(p);
      const auto g = objective_gradient(p, t_);
      // H_il = sum_{k >= max(i,l), k < N} 2 t_k / s_k^3.
      std::vector<double> tail(n + 1, 0.0);
      for (std::size_t k = n; k-- > 0;)
        tail[k] = tail[k + 1] + (t_[k] != 0.0 ? 2.0 * t_[k] / (s[k] * s[k] * s[k]) : 0.0);

      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + 2, m + 2);
      Eigen::VectorXd rhs(m + 2);
      double hmax = 0.0;
      for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) {
          const auto hi = static_cast<std::size_t>(std::max(free[a], free[b]));
          kkt(a, b) = tail[hi];
        }
        hmax = std::max(hmax, kkt(a, a));
        kkt(a, m) = kkt(m, a) = 1.0;
        kkt(a, m + 1) = kkt(m + 1, a) = static_cast<double>(free[a]);
        rhs(a) = -g[static_cast<std::size_t>(free[a])];
      }
      const double reg = 1e-14 * std::max(hmax, 1.0);
      for (Eigen::Index a = 0; a < m; ++a) kkt(a, a) += reg;
      double r1 = -1.0, r2 = -cost_;
      for (std::size_t j = 0; j < size_; ++j) {
        r1 += p[j];
        r2 += static_cast<double>(j) * p[j];
      }
      rhs(m) = -r1;
      rhs(m + 1) = -r2;
      const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);

      double tau_max = 1.0;
      int blocking = -1;
      double dmax = 0.0;
      for (Eigen::Index a = 0; a < m; ++a) {
        const auto j = static_cast<std::size_t>(free[a]);
        dmax = std::max(dmax, std::abs(sol(a)));
        if (sol(a) < 0.0) {
          const double lim = (p[j] - lb_[j]) / -sol(a);
          if (lim < tau_max) {
            tau_max = lim;
            blocking = free[a];
          }
        }
      }
      if (!(dmax > 1e-16)) return;

      const double f0 = objective_fast(p, t_);
      double slope = 0.0;
      for (Eigen::Index a = 0; a < m; ++a) slope += g[static_cast<std::size_t>(free[a])] * sol(a);
      const bool restoring = std::abs(r1) + std::abs(r2) > 1e-12;
      // Once the predicted decrease is at rounding level the objective can
      // no longer arbitrate; take the Newton step as is.
      const bool tiny = -slope <= 1e-10 * std::max(1.0, std::abs(f0));
      double tau = tau_max;
      std::vector<double> cand(p);
      for (int bt = 0; bt < 60; ++bt) {
        for (Eigen::Index a = 0; a < m; ++a) {
          const auto j = static_cast<std::size_t>(free[a]);
          cand[j] = std::max(lb_[j], p[j] + tau * sol(a));
        }
        const double fc = objective_fast(cand, t_);
        if ((restoring || tiny) ? std::isfinite(fc) : fc <= f0 + 1e-4 * tau * std::min(slope, 0.0))
          break;
        tau *= 0.5;
      }
      const bool hit_bound = blocking >= 0 && tau == tau_max;
      if (hit_bound) {
        cand[static_cast<std::size_t>(blocking)] = lb_[static_cast<std::size_t>(blocking)];
        is_free[static_cast<std::size_t>(blocking)] = 0;
      }
      double change = 0.0;
      for (std::size_t j = 0; j < size_; ++j) change = std::max(change, std::abs(cand[j] - p[j]));
      p.swap(cand);
      if (!hit_bound && change < 1e-15 && !restoring) return;
    }
  }

  std::vector<double> t_;
  double cost_;
  OracleOptions opt_;
  std::size_t size_;
  std::vector<double> lb_;
};

}  // namespace

OracleResult brute_force_optimum(const OptimizationInstance& inst, const OracleOptions& options) {
  inst.validate();
  if (options.restarts < 1) throw ValidationError("oracle needs at least one restart");
  if (!(options.p_floor > 0.0) || options.p_floor >= 1.0)
    throw ValidationError("p_floor must lie in (0, 1)");
  const int n = inst.size();
  if (inst.cost < options.p_floor * n)
    throw ValidationError("cost budget is below the floor on P(N)");

  OracleResult out;
  if (inst.cost >= n) {
    out.probs.assign(static_cast<std::size_t>(n) + 1, 0.0);
    out.probs.back() = 1.0;
    out.objective = 0.0;
    out.certificate = kkt_certificate(out.probs, inst, options.p_floor);
    out.distinct_optima = {out.probs};
    out.distinct_objectives = {0.0};
    return out;
  }

  const Solver solver(inst, options);
  std::vector<Polished> runs(static_cast<std::size_t>(options.restarts));
  const int workers = std::max(1, std::min(options.workers, options.restarts));
  if (workers == 1) {
    for (int r = 0; r < options.restarts; ++r) runs[static_cast<std::size_t>(r)] = solver.run(r);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int r = w; r < options.restarts; r += workers)
          runs[static_cast<std::size_t>(r)] = solver.run(r);
      });
    for (auto& th : pool) th.join();
  }

  int best = 0;
  for (int r = 1; r < options.restarts; ++r)
    if (runs[static_cast<std::size_t>(r)].objective < runs[static_cast<std::size_t>(best)].objective)
      best = r;

  for (const auto& run : runs) {
    bool seen = false;
    for (const auto& d : out.distinct_optima) {
      double diff = 0.0;
      for (std::size_t j = 0; j < d.size(); ++j) diff = std::max(diff, std::abs(d[j] - run.probs[j]));
      if (diff <= 1e-6) {
        seen = true;
        break;
      }
    }
    if (!seen) {
      out.distinct_optima.push_back(run.probs);
      out.distinct_objectives.push_back(run.objective);
    }
  }

  out.best_restart = best;
  out.probs = runs[static_cast<std::size_t>(best)].probs;
  out.objective = runs[static_cast<std::size_t>(best)].objective;
  out.certificate = kkt_certificate(out.probs, inst, options.p_floor);
  if (!out.certificate.holds(options.kkt_tol) || !std::isfinite(out.objective))
    throw OracleError("no restart reached a KKT point (stationarity residual " +
                          std::to_string(out.certificate.max_stationarity_residual) + ")",
                      out.probs, out.objective);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> adversarial_improvements(int n, int m, double eps, int big_n) {
  if (n < -1) throw ValidationError("n must be >= -1");
  if (m < 1) throw ValidationError("m must be >= 1");
  if (!(eps > 0.0) || !std::isfinite(eps))
    throw ValidationError("epsilon must be positive: the strict inequalities need room");
  if (n + m + 3 > big_n - 1) throw ValidationError("need n + m + 3 <= N - 1");

  const double delta = std::min(eps, 1.0) / 2.0;
  const double peak = 1.0 + m * eps;
  std::vector<double> t(static_cast<std::size_t>(big_n));
  for (int j = 0; j < big_n; ++j) {
    double v;
    if (j <= n) v = 1.0 + (n + 1 - j);
    else if (j == n + 1) v = 1.0;
    else if (j <= n + m + 1) v = 1.0 - delta;
    else v = peak * std::ldexp(1.0, -(j - (n + m + 2)));
    t[static_cast<std::size_t>(j)] = v;
  }
  const auto bad = adversarial_violations(t, n, m, eps);
  if (!bad.empty()) throw ValidationError("constructed sequence violates: " + bad.front());
  return t;
}

std::vector<std::string> adversarial_violations(std::span<const double> t, int n, int m,
                                                double eps) {
  std::vector<std::string> bad;
  const int big_n = static_cast<int>(t.size());
  if (n + m + 3 > big_n - 1 || n < -1 || m < 1) {
    bad.emplace_back("sequence too short for (n, m)");
    return bad;
  }
  const auto at = [&](int j) { return t[static_cast<std::size_t>(j)]; };
  if (n >= 0 && !(at(n) > at(n + 1))) bad.emplace_back("t_n > t_{n+1}");
  if (!(at(n + 2) + eps > at(n + 1) && at(n + 1) > at(n + 2)))
    bad.emplace_back("t_{n+2} + eps > t_{n+1} > t_{n+2}");
  for (int j = n + 2; j < n + m + 1; ++j)
    if (at(j + 1) != at(j)) {
      bad.emplace_back("flat block t_{n+2} .. t_{n+m+1}");
      break;
    }
  const double target = at(n + 1) + m * eps;
  if (std::abs(at(n + m + 2) - target) > 1e-12 * std::max(1.0, target))
    bad.emplace_back("t_{n+m+2} = t_{n+1} + m eps");
  double tail = 0.0;
  for (int j = n + m + 2; j < big_n; ++j) tail += at(j);
  if (!(tail > target)) bad.emplace_back("tail sum exceeds t_{n+1} + m eps");
  return bad;
}

}  // namespace rtk
