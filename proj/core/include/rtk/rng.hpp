#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace rtk {

/// Counter-based Philox4x32-10 generator.
///
/// A (key, stream) pair addresses an independent sequence, so per-trial
/// generators can be derived from a base seed without any shared state and
/// produce the same numbers on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  /// 32 random bits.
  std::uint32_t next_u32();
  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal via the Box-Muller transform.
  double normal();

  /// +1 or -1 with equal probability.
  double rademacher();

  /// A generator on an independent stream keyed by the same seed.
  [[nodiscard]] Rng split(std::uint64_t stream) const;

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::uint64_t stream() const { return stream_; }

  static constexpr std::string_view kGaussianMethod = "box-muller";
  static constexpr std::string_view kName = "philox4x32-10";

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> counter_{};
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

/// Stream id for trial `index` of an experiment seeded with `base_seed`.
std::uint64_t trial_stream(std::uint64_t base_seed, std::uint64_t index);

}  // namespace rtk
