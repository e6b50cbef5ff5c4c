#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>

namespace branchlim {

/// Counter-based Philox4x32-10 generator.
///
/// The key is the 64-bit seed and the 128-bit counter is split into a 64-bit
/// block counter and a 64-bit stream id, so (seed, stream, position) fixes
/// every draw. split(i) derives an independent stream by hashing. Satisfies
/// UniformRandomBitGenerator, so std distributions accept it.
class Rng {
 public:
  using result_type = std::uint32_t;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (idx_ == 4) {
      refill();
      idx_ = 0;
    }
    return buf_[idx_++];
  }

  /// Uniform on [0,1) with 53 random bits.
  double uniform() {
    const std::uint64_t a = (*this)() >> 5;
    const std::uint64_t b = (*this)() >> 6;
    return (static_cast<double>(a) * 67108864.0 + static_cast<double>(b)) * 0x1.0p-53;
  }

  /// Uniform on (0,1), safe for log.
  double uniform_pos() {
    double u;
    do u = uniform();
    while (u == 0.0);
    return u;
  }

  double normal() {
    // Marsaglia polar method; the spare is discarded to keep draws position-free.
    for (;;) {
      const double x = 2.0 * uniform() - 1.0;
      const double y = 2.0 * uniform() - 1.0;
      const double s = x * x + y * y;
      if (s > 0.0 && s < 1.0) return x * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  double exponential(double rate = 1.0) { return -std::log(uniform_pos()) / rate; }

  /// Independent generator for sub-task i.
  Rng split(std::uint64_t i) const { return Rng(seed_, mix(stream_ * 0x9E3779B97F4A7C15ULL + i + 1)); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  void refill() {
    std::array<std::uint32_t, 4> c{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                                   static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    std::uint32_t k0 = static_cast<std::uint32_t>(seed_), k1 = static_cast<std::uint32_t>(seed_ >> 32);
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ULL * c[0];
      const std::uint64_t p1 = 0xCD9E8D57ULL * c[2];
      c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k0, static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k1, static_cast<std::uint32_t>(p0)};
      k0 += 0x9E3779B9U;
      k1 += 0xBB67AE85U;
    }
    buf_ = c;
    ++counter_;
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int idx_ = 4;
};

/// Default worker count: BL_WORKERS if set, else hardware concurrency.
std::size_t default_workers();

/// Runs body(chunk) for chunk = 0..chunks-1 on up to `workers` threads.
/// Bodies write only to per-chunk slots, so results do not depend on the
/// worker count or scheduling. The first exception is rethrown.
void parallel_for_chunks(std::size_t chunks, std::size_t workers, const std::function<void(std::size_t)>& body);

}  // namespace branchlim
