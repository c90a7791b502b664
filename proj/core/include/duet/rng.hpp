#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace duet {

/// Deterministic random stream. The engine is std::mt19937_64 (its output
/// sequence is fixed by the standard); all distribution transforms are done
/// by hand because the std:: distributions are implementation-defined and
/// would break byte-identical reproducibility across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n). n must be > 0. Debiased.
  std::uint64_t uniform_int(std::uint64_t n);

  /// Standard normal via Box-Muller (two uniforms per draw).
  double normal();
  double normal(double mean, double stddev);

  /// Deterministic Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Shuffled identity permutation of length n.
  std::vector<std::size_t> permutation(std::size_t n);

  /// Derive an independent child stream from this stream's seed and a tag.
  /// Used to fan one global seed out to per-component streams.
  static std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

 private:
  std::mt19937_64 engine_;
};

}  // namespace duet
