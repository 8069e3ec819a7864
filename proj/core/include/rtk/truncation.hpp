#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "rtk/rng.hpp"

namespace rtk {

// Truncation schedules for randomized Krylov solves.
//
// P(j) is the probability of stopping before iteration j, i.e. after exactly
// j increments were applied; the last index of a schedule means "ran every
// iteration". The survival level s_j = 1 - sum_{i<=j} P(i) is the probability
// that increment j is applied, and the applied increment is scaled by 1/s_j.

/// Parameter of the adaptive (AS) estimator: eta = n + sigma with
/// n = floor(eta) deterministic iterations and sigma in [0, 1).
class AsConfig {
 public:
  explicit AsConfig(double eta);

  [[nodiscard]] double eta() const { return eta_; }
  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] double sigma() const { return sigma_; }

 private:
  double eta_;
  int n_;
  double sigma_;
};

/// Exponential Russian-Roulette baseline: survival Q(j) = 1 for
/// j <= min_iters and exp(-lambda (j - min_iters)) afterwards.
struct RrConfig {
  int min_iters = 0;
  double lambda = 0.05;

  void validate() const;
  [[nodiscard]] double survival(int j) const;
};

/// Runs the recurrence to convergence with unit weights.
struct DeterministicEstimator {};

using EstimatorSpec = std::variant<DeterministicEstimator, AsConfig, RrConfig>;

/// Consecutive indices sharing one survival level; `last` may run past the
/// real iterations when zero-improvement padding closed the group.
struct Group {
  std::int64_t first = 0;
  std::int64_t last = 0;
  double mean = 0.0;
};

class TruncationSchedule {
 public:
  TruncationSchedule() = default;
  explicit TruncationSchedule(std::vector<double> probs, std::vector<Group> groups = {});

  /// Index of the terminal "ran all iterations" entry.
  [[nodiscard]] int horizon() const { return static_cast<int>(probs_.size()) - 1; }
  [[nodiscard]] double prob(int j) const;
  [[nodiscard]] double cumulative(int j) const;
  [[nodiscard]] double survival(int j) const { return 1.0 - cumulative(j); }
  [[nodiscard]] double total() const;
  /// sum_j j P(j).
  [[nodiscard]] double expected_cost() const;
  [[nodiscard]] const std::vector<double>& probs() const { return probs_; }
  [[nodiscard]] const std::vector<Group>& groups() const { return groups_; }

  /// Rows "j,P,s" for every index with P(j) != 0, preceded by a header.
  void write_csv(std::ostream& out) const;

 private:
  std::vector<double> probs_;
  std::vector<double> cumulative_;
  std::vector<Group> groups_;
};

/// P(n+1): 1 - sigma when n = -1, otherwise
/// max{0, (1 - sigma)(sqrt(t_n) - sqrt(t_{n+1})) / sqrt(t_n)}.
/// `t_n` must be given exactly when n >= 0; t_n = 0 is degenerate.
double initial_prob(const AsConfig& config, std::optional<double> t_n, double t_next);

/// Offline AS schedule over j = 0..N for improvements t_0..t_{N-1}, pooling
/// iterations into groups with non-increasing means and placing each group's
/// probability at its first index. Requires N >= 2 and n <= N - 2.
TruncationSchedule as_probabilities_finite(std::span<const double> improvements,
                                           const AsConfig& config);

/// Running state of the streaming pool that follows the anchor index n+1.
///
/// Feeding t_j settles P(j) immediately: either the open group absorbs it
/// (P(j) = 0) or the group closes at j, its maximum index, with
/// P(j) = (1 - p_init)(sqrt(g_prev) - sqrt(g_curr)) / anchor.
struct PoolState {
  double g_prev = 0.0;   // mean of the last closed group
  double g_curr = 0.0;   // running mean of the open group
  int count = 0;         // size of the open group, 0 when none is open
  int open_first = 0;    // first index of the open group
  double anchor = 0.0;   // sqrt(t_{n+1})
  double p_init = 0.0;   // P(n+1)
  int next_index = 0;    // index the next improvement belongs to
  int clamped = 0;       // negative improvements replaced by zero
  std::vector<Group> closed;

  static PoolState start(int anchor_index, double t_anchor, double p_init);
  /// Survival level after the last settled index.
  [[nodiscard]] double survival() const;
};

struct Emission {
  int index = 0;
  double prob = 0.0;
};

/// Advances the pool by one improvement, or flushes it at end of stream
/// (std::nullopt): the flush emits all remaining mass at `next_index`.
std::optional<Emission> pool_step(PoolState& state, std::optional<double> t);

/// Streaming AS schedule of a finished run of K iterations: indices 0..K,
/// the remaining mass sits at K ("ran to convergence").
TruncationSchedule as_probabilities_streaming(std::span<const double> improvements,
                                              const AsConfig& config);

/// Closed form for the expected number of applied iterations
/// under strictly diminishing improvements.
double closed_form_cost(std::span<const double> improvements, const AsConfig& config);

/// Average number of iterations of the finite AS schedule: the closed form
/// when improvements strictly diminish from index max(n, 0), otherwise
/// sum_j j P(j) of the pooled schedule.
double expected_cost(std::span<const double> improvements, const AsConfig& config);

/// RR schedule on 0..horizon; the survival left at `horizon` means "ran to
/// convergence".
TruncationSchedule rr_schedule(const RrConfig& config, int horizon);

/// True (truncate before j) with probability prob / survival_prev. Draws
/// exactly one uniform variate.
bool sample_truncation(double prob, double survival_prev, Rng& rng);

// ---------------------------------------------------------------------------
// Online policies used by the randomized driver.

struct Decision {
  double prob = 0.0;      // P(j)
  double survival = 1.0;  // s_j
};

class TruncationPolicy {
 public:
  virtual ~TruncationPolicy() = default;
  /// Settles P(j) for the next index given its improvement t_j.
  virtual Decision next(double improvement) = 0;
  /// Mass assigned to "ran to convergence" once the stream ends.
  virtual double finish() = 0;
  [[nodiscard]] virtual int clamped() const { return 0; }
  /// Whether finish() closed a partially filled group.
  [[nodiscard]] virtual bool flushed_open_group() const { return false; }
};

std::unique_ptr<TruncationPolicy> make_policy(const EstimatorSpec& spec);

}  // namespace rtk
