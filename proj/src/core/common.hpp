#pragma once

// Shared basics: float modes, deterministic RNG, error helpers.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace corld {

enum class Dtype { F32, F64 };

inline const char* dtype_name(Dtype d) { return d == Dtype::F32 ? "f32" : "f64"; }

// In f32 mode every primitive output passes through float precision, so a
// run is reproducible at float resolution while intermediates accumulate in
// double.
inline double round_mode(Dtype d, double x) {
  return d == Dtype::F32 ? static_cast<double>(static_cast<float>(x)) : x;
}

[[noreturn]] inline void fail(const std::string& module, const std::string& msg) {
  throw std::runtime_error(module + ": " + msg);
}

[[noreturn]] inline void fail_invalid(const std::string& module, const std::string& msg) {
  throw std::invalid_argument(module + ": " + msg);
}

inline int wrap_index(int i, int n) {
  int r = i % n;
  return r < 0 ? r + n : r;
}

// Deterministic sampling layers over mt19937_64. The standard distributions
// are not pinned across library versions, so uniform/normal are generated
// explicitly; identical seeds give identical artifacts.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  uint64_t next_u64() {
    // splitmix64; full period over the 64-bit counter, no warm-up needed.
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // standard normal via Box-Muller, pair cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01(), u2 = uniform01();
    while (u1 <= 1e-300) u1 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // uniform integer in [0, n)
  uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Distinct deterministic stream per named purpose of a base seed.
inline uint64_t derive_seed(uint64_t base, const char* tag) {
  uint64_t h = 0xcbf29ce484222325ULL ^ base;
  for (const char* p = tag; *p; ++p) {
    h ^= static_cast<uint64_t>(static_cast<unsigned char>(*p));
    h *= 0x100000001b3ULL;
  }
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h ? h : 1;
}

}  // namespace corld
