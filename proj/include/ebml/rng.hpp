#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace ebml {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ull;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebull;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return mix64(h ^ (mix64(v + kGolden) + (h << 6) + (h >> 2)));
}

}  // namespace detail

// Hash-derived key identifying an independent random stream. Child
// derivation is order-sensitive: key.child(a).child(b) and
// key.child(b).child(a) name different streams.
struct RngKey {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  static constexpr RngKey root(std::uint64_t seed) {
    return {detail::mix64(seed + detail::kGolden),
            detail::mix64(seed ^ 0x5851f42d4c957f2dull)};
  }

  constexpr RngKey child(std::uint64_t word) const {
    return {detail::hash_combine(hi, word),
            detail::hash_combine(lo, word ^ 0xa24baed4963ee407ull)};
  }
};

// Purpose tags so that no two call sites ever share a stream.
namespace streams {
inline constexpr std::uint64_t kLangevinNoise = 1;
inline constexpr std::uint64_t kBurnInNoise = 2;
inline constexpr std::uint64_t kDataBatch = 3;
inline constexpr std::uint64_t kDataNoise = 4;
inline constexpr std::uint64_t kBankDraw = 5;
inline constexpr std::uint64_t kRejuvenation = 6;
inline constexpr std::uint64_t kPromotion = 7;
inline constexpr std::uint64_t kBankInit = 8;
inline constexpr std::uint64_t kParamInit = 9;
inline constexpr std::uint64_t kDataset = 10;
inline constexpr std::uint64_t kDefense = 11;
inline constexpr std::uint64_t kFixture = 12;
inline constexpr std::uint64_t kSample = 13;
}  // namespace streams

// Counter-based generator: the n-th draw is a pure function of
// (key, n), so streams can be replayed, split, and advanced in
// parallel without shared state.
class CounterRng {
 public:
  explicit CounterRng(RngKey key) : key_(key) {}

  std::uint64_t next_u64() {
    return detail::mix64(key_.hi ^ detail::mix64(key_.lo + counter_++ * detail::kGolden));
  }

  // Uniform on (0, 1), both endpoints excluded.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform on [0, n).
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % n);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the spare value is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  void fill_gaussian(std::span<double> out) {
    for (double& v : out) v = gaussian();
  }

  std::uint64_t counter() const { return counter_; }

 private:
  RngKey key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ebml
