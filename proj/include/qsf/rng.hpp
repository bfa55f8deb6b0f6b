#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "qsf/matrix.hpp"

namespace qsf {

// Counter-free splitmix64 stream. A single u64 of state keeps
// checkpointing trivial and results identical across platforms.
struct RandomStream {
  uint64_t state = 0;

  RandomStream() = default;
  explicit RandomStream(uint64_t seed) : state(seed) {}

  uint64_t next_u64() {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform();
  // [lo, hi)
  double uniform(double lo, double hi);
  // standard normal, Box-Muller
  double normal();
  // [0, n)
  int uniform_int(int n);

  // Fisher-Yates over the first k positions (k = v.size() for a full shuffle).
  template <typename T>
  void partial_shuffle(std::vector<T>& v, size_t k) {
    if (k > v.size()) k = v.size();
    for (size_t i = 0; i < k; ++i) {
      size_t j = i + static_cast<size_t>(uniform_int(static_cast<int>(v.size() - i)));
      std::swap(v[i], v[j]);
    }
  }
};

// Stable seed derivation: hash of (master seed, purpose label).
uint64_t derive_seed(uint64_t master, std::string_view label);

}  // namespace qsf
