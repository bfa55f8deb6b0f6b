#include "qsf/rng.hpp"

#include <cmath>

namespace qsf {

double RandomStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RandomStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RandomStream::normal() {
  // u1 in (0, 1] so the log is finite
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

int RandomStream::uniform_int(int n) {
  return n <= 1 ? 0 : static_cast<int>(next_u64() % static_cast<uint64_t>(n));
}

uint64_t derive_seed(uint64_t master, std::string_view label) {
  uint64_t h = 0xcbf29ce484222325ULL ^ master;
  for (char c : label) {
    h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  // splitmix finalizer to spread the bits
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

}  // namespace qsf
