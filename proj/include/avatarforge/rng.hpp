#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace avatarforge {

// Seeded random stream with a serializable state. Conversions to uniform and
// normal variates are done here rather than through <random> distributions so
// that no hidden distribution state escapes a checkpoint.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Integer uniform on [lo, hi].
  int64_t uniform_int(int64_t lo, int64_t hi);
  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal();

  std::string state() const;
  void set_state(const std::string& state);

  // Derives an independent child stream; used to split per-space streams.
  static uint64_t derive_seed(uint64_t seed, uint64_t stream);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace avatarforge
