#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tandem/tensor.hpp"

namespace tandem {

/// Counter-based pseudo-random generator. Each draw hashes (seed, counter)
/// through the splitmix64 finalizer, so the integer stream for a given seed
/// is identical on every platform and independent streams can be derived as
/// child seeds without sharing state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return mix(seed_ + ++counter_ * kGamma); }

  /// Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("rng: next_below(0)");
    return next_u64() % n;
  }

  bool next_bool() { return (next_u64() & 1u) != 0; }

  /// Standard normal via the polar method; consumes a variable but
  /// seed-determined number of uniforms.
  double next_gaussian() {
    for (;;) {
      double u = 2.0 * next_double() - 1.0;
      double v = 2.0 * next_double() - 1.0;
      double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) {
        return u * std::sqrt(-2.0 * std::log(s) / s);
      }
    }
  }

  /// Independent stream derived from (seed, stream id). The child's draws do
  /// not interact with this generator's counter.
  Rng child(std::uint64_t stream) const {
    return Rng(mix(seed_ + (stream + 1) * 0xD1B54A32D192ED03ull));
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

/// Samples a tensor from a normal distribution truncated to
/// mean ± cutoff_sigmas * std, by rejection on the standard normal.
template <typename T = float>
TensorT<T> truncated_normal(std::vector<std::size_t> shape, double mean,
                            double std_dev, double cutoff_sigmas, Rng& rng) {
  if (shape.empty()) {
    throw std::invalid_argument("truncated_normal: empty shape");
  }
  if (!(std_dev >= 0.0) || !std::isfinite(std_dev)) {
    throw std::invalid_argument("truncated_normal: std must be finite and >= 0");
  }
  if (!(cutoff_sigmas > 0.0)) {
    throw std::invalid_argument("truncated_normal: cutoff must be positive");
  }
  TensorT<T> out(std::move(shape));
  for (std::size_t i = 0; i < out.size(); ++i) {
    double z;
    do {
      z = rng.next_gaussian();
    } while (std::abs(z) > cutoff_sigmas);
    out[i] = static_cast<T>(mean + std_dev * z);
  }
  return out;
}

}  // namespace tandem
