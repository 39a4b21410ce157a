#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace hypm {

/// Deterministic pseudo-random stream. All randomness in the library is
/// drawn from named streams expanded from a single root seed, so that any
/// component can be re-run in isolation with a reproducible draw sequence.
///
/// The generator is SplitMix64; the mapping from bits to doubles and to
/// bounded integers is implemented here explicitly so results are identical
/// across platforms and standard libraries.
class RngStream {
 public:
  RngStream(std::uint64_t root_seed, std::string_view name, std::uint64_t index = 0);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double next_double();

  /// Uniform integer in [0, n). n must be > 0. Rejection-sampled, unbiased.
  std::uint64_t uniform_below(std::uint64_t n);

  /// Standard normal via Box-Muller (second value cached).
  double normal();

  /// Partial Fisher-Yates: k distinct indices drawn uniformly from [0, n).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::uint64_t state_;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

/// FNV-1a 64-bit hash; used to derive per-name stream seeds and config hashes.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace hypm
