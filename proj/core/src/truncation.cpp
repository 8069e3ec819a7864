#include "rtk/truncation.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "rtk/errors.hpp"

namespace rtk {

AsConfig::AsConfig(double eta) : eta_(eta) {
  if (!std::isfinite(eta) || !(eta > -1.0)) throw ValidationError("AS parameter eta must be > -1");
  if (eta >= static_cast<double>(std::numeric_limits<int>::max() - 2))
    throw ValidationError("AS parameter eta is too large");
  n_ = static_cast<int>(std::floor(eta));
  sigma_ = eta - n_;
}

void RrConfig::validate() const {
  if (min_iters < 0) throw ValidationError("RR min_iters must be non-negative");
  if (!std::isfinite(lambda) || lambda < 0.0)
    throw ValidationError("RR temperature lambda must be finite and non-negative");
}

double RrConfig::survival(int j) const {
  if (j <= min_iters) return 1.0;
  return std::exp(-lambda * static_cast<double>(j - min_iters));
}

// ---------------------------------------------------------------------------

TruncationSchedule::TruncationSchedule(std::vector<double> probs, std::vector<Group> groups)
    : probs_(std::move(probs)), groups_(std::move(groups)) {
  cumulative_.resize(probs_.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < probs_.size(); ++j) {
    acc += probs_[j];
    cumulative_[j] = acc;
  }
}

double TruncationSchedule::prob(int j) const {
  if (j < 0 || j > horizon()) return 0.0;
  return probs_[static_cast<std::size_t>(j)];
}

double TruncationSchedule::cumulative(int j) const {
  if (j < 0) return 0.0;
  if (probs_.empty()) return 0.0;
  if (j > horizon()) return cumulative_.back();
  return cumulative_[static_cast<std::size_t>(j)];
}

double TruncationSchedule::total() const {
  return cumulative_.empty() ? 0.0 : cumulative_.back();
}

double TruncationSchedule::expected_cost() const {
  double cost = 0.0;
  for (std::size_t j = 0; j < probs_.size(); ++j) cost += static_cast<double>(j) * probs_[j];
  return cost;
}

void TruncationSchedule::write_csv(std::ostream& out) const {
  out << "j,P,s\n";
  const auto old_precision = out.precision(17);
  for (int j = 0; j <= horizon(); ++j) {
    if (probs_[static_cast<std::size_t>(j)] == 0.0) continue;
    out << j << ',' << probs_[static_cast<std::size_t>(j)] << ',' << survival(j) << '\n';
  }
  out.precision(old_precision);
}

// ---------------------------------------------------------------------------

double initial_prob(const AsConfig& config, std::optional<double> t_n, double t_next) {
  if (!(t_next >= 0.0)) throw ValidationError("improvements must be non-negative");
  const double sigma = config.sigma();
  if (config.n() == -1) {
    if (t_n) throw ValidationError("no improvement precedes index 0 when n = -1");
    return 1.0 - sigma;
  }
  if (!t_n) throw ValidationError("initial_prob needs t_n when n >= 0");
  if (!(*t_n >= 0.0)) throw ValidationError("improvements must be non-negative");
  if (*t_n == 0.0)
    throw DegenerateInputError("t_n = 0: the recurrence converged before the first random index");
  const double a_n = std::sqrt(*t_n);
  const double a_next = std::sqrt(t_next);
  return std::max(0.0, (1.0 - sigma) * (a_n - a_next) / a_n);
}

namespace {

void check_improvements(std::span<const double> t) {
  for (double v : t)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ValidationError("improvements must be finite and non-negative");
}

}  // namespace

TruncationSchedule as_probabilities_finite(std::span<const double> improvements,
                                           const AsConfig& config) {
  const auto big_n = static_cast<std::int64_t>(improvements.size());
  const int n = config.n();
  if (big_n < 2) throw ValidationError("AS schedule needs at least two iterations");
  if (n > big_n - 2) throw ValidationError("AS parameter eta must be below N - 1");
  check_improvements(improvements);

  const auto t = [&](std::int64_t i) { return i < big_n ? improvements[static_cast<std::size_t>(i)] : 0.0; };
  const double t_anchor = t(n + 1);
  if (t_anchor == 0.0) throw DegenerateInputError("anchor improvement t_{n+1} is zero");

  std::vector<double> probs(static_cast<std::size_t>(big_n) + 1, 0.0);
  const double p0 = initial_prob(config, n >= 0 ? std::optional<double>(t(n)) : std::nullopt, t_anchor);
  const double c = 1.0 - p0;
  const double anchor = std::sqrt(t_anchor);
  probs[static_cast<std::size_t>(n + 1)] = p0;

  std::vector<Group> groups{{n + 1, n + 1, t_anchor}};
  double g_prev = t_anchor;
  std::int64_t first = n + 2;
  while (first <= big_n - 1) {
    if (g_prev == 0.0) {
      // Nothing can pool below a zero mean; the remaining indices never run.
      groups.push_back({first, big_n - 1, 0.0});
      break;
    }
    double sum = t(first);
    std::int64_t count = 1;
    while (g_prev < sum / static_cast<double>(count)) {
      if (first + count >= big_n) {
        // Only zero padding remains: jump to the smallest size that works.
        auto need = static_cast<std::int64_t>(std::ceil(sum / g_prev));
        while (g_prev < sum / static_cast<double>(need)) ++need;
        count = std::max(count + 1, need);
        break;
      }
      sum += t(first + count);
      ++count;
    }
    const double g = sum / static_cast<double>(count);
    probs[static_cast<std::size_t>(first)] += c * (std::sqrt(g_prev) - std::sqrt(g)) / anchor;
    groups.push_back({first, first + count - 1, g});
    g_prev = g;
    first += count;
  }
  probs[static_cast<std::size_t>(big_n)] += c * std::sqrt(g_prev) / anchor;
  return TruncationSchedule(std::move(probs), std::move(groups));
}

// ---------------------------------------------------------------------------

PoolState PoolState::start(int anchor_index, double t_anchor, double p_init) {
  if (!(t_anchor > 0.0)) throw DegenerateInputError("anchor improvement t_{n+1} is zero");
  PoolState s;
  s.g_prev = t_anchor;
  s.anchor = std::sqrt(t_anchor);
  s.p_init = p_init;
  s.next_index = anchor_index + 1;
  s.closed.push_back({anchor_index, anchor_index, t_anchor});
  return s;
}

double PoolState::survival() const { return (1.0 - p_init) * std::sqrt(g_prev) / anchor; }

std::optional<Emission> pool_step(PoolState& state, std::optional<double> t) {
  if (!t) {
    if (state.count > 0) {
      state.closed.push_back({state.open_first, state.next_index - 1, state.g_curr});
      state.count = 0;
    }
    return Emission{state.next_index, state.survival()};
  }
  double value = *t;
  if (!(value >= 0.0)) {
    value = 0.0;
    ++state.clamped;
  }
  const int j = state.next_index++;
  if (state.count == 0) {
    state.g_curr = value;
    state.count = 1;
    state.open_first = j;
  } else {
    state.g_curr = (state.g_curr * state.count + value) / (state.count + 1);
    ++state.count;
  }
  if (state.g_prev < state.g_curr) return std::nullopt;

  const double prob =
      (1.0 - state.p_init) * (std::sqrt(state.g_prev) - std::sqrt(state.g_curr)) / state.anchor;
  state.closed.push_back({state.open_first, j, state.g_curr});
  state.g_prev = state.g_curr;
  state.count = 0;
  return Emission{j, prob};
}

// ---------------------------------------------------------------------------

namespace {

class DeterministicPolicy final : public TruncationPolicy {
 public:
  Decision next(double) override { return {0.0, 1.0}; }
  double finish() override { return 1.0; }
};

class AsPolicy final : public TruncationPolicy {
 public:
  explicit AsPolicy(AsConfig config) : config_(config) {}

  Decision next(double improvement) override {
    if (!(improvement >= 0.0)) {
      improvement = 0.0;
      ++clamped_before_pool_;
    }
    const int j = index_++;
    const int n = config_.n();
    if (j <= n) {
      last_ = improvement;
      return {0.0, 1.0};
    }
    if (j == n + 1) {
      const double p0 =
          initial_prob(config_, n >= 0 ? std::optional<double>(last_) : std::nullopt, improvement);
      pool_ = PoolState::start(j, improvement, p0);
      return {p0, 1.0 - p0};
    }
    const auto emitted = pool_step(*pool_, improvement);
    return {emitted ? emitted->prob : 0.0, pool_->survival()};
  }

  double finish() override {
    if (!pool_) return 1.0;
    flushed_ = pool_->count > 0;
    return pool_step(*pool_, std::nullopt)->prob;
  }

  [[nodiscard]] int clamped() const override {
    return clamped_before_pool_ + (pool_ ? pool_->clamped : 0);
  }
  [[nodiscard]] bool flushed_open_group() const override { return flushed_; }
  [[nodiscard]] const std::optional<PoolState>& pool() const { return pool_; }

 private:
  AsConfig config_;
  int index_ = 0;
  double last_ = 0.0;
  int clamped_before_pool_ = 0;
  bool flushed_ = false;
  std::optional<PoolState> pool_;
};

class RrPolicy final : public TruncationPolicy {
 public:
  explicit RrPolicy(RrConfig config) : config_(config) { config_.validate(); }

  Decision next(double) override {
    const int j = index_++;
    const double before = j == 0 ? 1.0 : config_.survival(j - 1);
    const double after = config_.survival(j);
    return {before - after, after};
  }

  double finish() override { return index_ == 0 ? 1.0 : config_.survival(index_ - 1); }

 private:
  RrConfig config_;
  int index_ = 0;
};

}  // namespace

std::unique_ptr<TruncationPolicy> make_policy(const EstimatorSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::unique_ptr<TruncationPolicy> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, AsConfig>) return std::make_unique<AsPolicy>(s);
        else if constexpr (std::is_same_v<T, RrConfig>) return std::make_unique<RrPolicy>(s);
        else return std::make_unique<DeterministicPolicy>();
      },
      spec);
}

TruncationSchedule as_probabilities_streaming(std::span<const double> improvements,
                                              const AsConfig& config) {
  AsPolicy policy(config);
  std::vector<double> probs(improvements.size() + 1, 0.0);
  for (std::size_t j = 0; j < improvements.size(); ++j) probs[j] = policy.next(improvements[j]).prob;
  probs.back() = policy.finish();
  std::vector<Group> groups;
  if (policy.pool()) groups = policy.pool()->closed;
  return TruncationSchedule(std::move(probs), std::move(groups));
}

// ---------------------------------------------------------------------------

double closed_form_cost(std::span<const double> improvements, const AsConfig& config) {
  const auto big_n = static_cast<int>(improvements.size());
  const int n = config.n();
  const double sigma = config.sigma();
  if (n > big_n - 2) throw ValidationError("AS parameter eta must be below N - 1");
  check_improvements(improvements);
  const auto a = [&](int j) { return std::sqrt(improvements[static_cast<std::size_t>(j)]); };
  if (a(n + 1) == 0.0) throw DegenerateInputError("anchor improvement t_{n+1} is zero");
  double tail = 0.0;
  for (int j = n + 2; j <= big_n - 1; ++j) tail += a(j) / a(n + 1);
  if (n == -1) return sigma + sigma * tail;
  if (a(n) == 0.0) throw DegenerateInputError("t_n = 0");
  return n + 1 + (sigma + (1.0 - sigma) * a(n + 1) / a(n)) * (1.0 + tail);
}

double expected_cost(std::span<const double> improvements, const AsConfig& config) {
  const auto big_n = static_cast<int>(improvements.size());
  bool diminishing = true;
  for (int j = std::max(config.n(), 0) + 1; j < big_n && diminishing; ++j)
    diminishing = improvements[static_cast<std::size_t>(j - 1)] > improvements[static_cast<std::size_t>(j)];
  if (diminishing) return closed_form_cost(improvements, config);
  return as_probabilities_finite(improvements, config).expected_cost();
}

TruncationSchedule rr_schedule(const RrConfig& config, int horizon) {
  config.validate();
  if (horizon < config.min_iters) throw ValidationError("RR horizon must be at least min_iters");
  if (horizon < 0) throw ValidationError("RR horizon must be non-negative");
  std::vector<double> probs(static_cast<std::size_t>(horizon) + 1, 0.0);
  double before = 1.0;
  for (int j = 0; j < horizon; ++j) {
    const double after = config.survival(j);
    probs[static_cast<std::size_t>(j)] = before - after;
    before = after;
  }
  probs[static_cast<std::size_t>(horizon)] = before;
  return TruncationSchedule(std::move(probs));
}

bool sample_truncation(double prob, double survival_prev, Rng& rng) {
  if (!(survival_prev > 0.0)) throw ScheduleError("survival level must be positive before a draw");
  if (!(prob >= 0.0)) throw ScheduleError("negative truncation probability");
  const double ratio = prob / survival_prev;
  if (ratio > 1.0 + 1e-12)
    throw ScheduleError("truncation probability " + std::to_string(prob) +
                        " exceeds the surviving mass " + std::to_string(survival_prev));
  return rng.uniform() < ratio;
}

}  // namespace rtk
