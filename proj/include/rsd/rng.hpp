#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

#include "rsd/errors.hpp"

namespace rsd {

/// Philox 4x32-10 counter-based block cipher (Salmon et al. constants).
/// Stateless: output depends only on (counter, key), which is what makes
/// per-iteration substreams reproducible at any worker count.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint64_t kMul0 = 0xD2511F53u;
  constexpr std::uint64_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = kMul0 * ctr[0];
    const std::uint64_t p1 = kMul1 * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

/// One random substream: (seed, substream id) select the key/counter prefix,
/// `drawn()` words have been consumed. Fully serializable as three integers.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t substream, std::uint64_t drawn = 0)
      : seed_(seed), substream_(substream), drawn_(drawn) {
    if (drawn_ % 4 != 0) buf_ = block(drawn_ / 4);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t substream() const noexcept { return substream_; }
  std::uint64_t drawn() const noexcept { return drawn_; }

  std::uint32_t next_u32() {
    const unsigned lane = static_cast<unsigned>(drawn_ % 4);
    if (lane == 0) buf_ = block(drawn_ / 4);
    ++drawn_;
    return buf_[lane];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform on the open interval (0, 1); 53-bit resolution.
  double uniform() {
    const std::uint64_t bits = next_u64() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (fixed two-word consumption per call).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
  }

  /// Gamma(shape, rate) by Marsaglia-Tsang squeeze; shape < 1 boosted via
  /// the U^{1/shape} identity.
  double gamma(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0)) throw invalid_input("gamma: shape and rate must be > 0");
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0, rate);
      return g * std::pow(uniform(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      const double x = normal();
      const double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      const double v = t * t * t;
      const double u = uniform();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v / rate;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
  }

  /// Index draw from a finite distribution; probabilities assumed to sum to 1.
  int categorical(std::span<const double> probs) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::array<std::uint32_t, 4> block(std::uint64_t index) const {
    return philox4x32({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                       static_cast<std::uint32_t>(substream_), static_cast<std::uint32_t>(substream_ >> 32)},
                      {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
  }

  std::uint64_t seed_;
  std::uint64_t substream_;
  std::uint64_t drawn_;
  std::array<std::uint32_t, 4> buf_{};
};

}  // namespace rsd
