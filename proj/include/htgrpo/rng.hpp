#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace htgrpo {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Mixes a base seed with stream tags so independent consumers (rollouts,
// support sampling, remask draws) never share a generator state.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t s = splitmix64(base);
  s = splitmix64(s ^ tag);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  return s;
}

// mt19937_64 with hand-rolled mappings; the raw sequence is pinned by the
// standard, so runs are reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // [0, n)
  int uniform_int(int n) {
    return static_cast<int>(uniform() * static_cast<double>(n)) % n;
  }

  // CDF inversion over an (approximately) normalized row.
  int categorical(const double* probs, int n) {
    double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return n - 1;
  }

  int categorical(const std::vector<double>& probs) {
    return categorical(probs.data(), static_cast<int>(probs.size()));
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace htgrpo
