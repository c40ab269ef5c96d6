#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace weakspk {

// Deterministic random stream (xoshiro256** over a splitmix64-expanded key).
// Every stream is a pure function of its derivation path, so
// Rng(seed).fork("corpus").fork(rec_id) yields the same numbers no matter
// how many values other streams have consumed.  This is what makes parallel
// and serial generation bit-identical.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(seed) { init_state(); }

  // Independent substream named by an integer tag.  Derivation depends only
  // on the parent's key, not on its position.
  Rng fork(uint64_t tag) const { return Rng(mix(key_, tag)); }
  Rng fork(std::string_view name) const { return fork(fnv1a(name)); }

  // Key of the stream fork(name) would produce; lets callers hand a derived
  // seed to an API that takes one.
  static uint64_t derive(uint64_t seed, std::string_view name) {
    return mix(seed, fnv1a(name));
  }

  uint64_t next() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  // Standard normal via Box-Muller (the spare value is cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n), n > 0.  Multiply-shift, no rejection loop.
  int uniform_int(int n) {
    return static_cast<int>((static_cast<unsigned __int128>(next()) *
                             static_cast<unsigned __int128>(n)) >>
                            64);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      const int j = uniform_int(i + 1);
      std::swap(v[i], v[static_cast<size_t>(j)]);
    }
  }

  static uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t x = b;
    uint64_t h = splitmix(x);
    x = a ^ h;
    return splitmix(x);
  }

  void init_state() {
    uint64_t x = key_;
    for (auto& s : s_) s = splitmix(x);
  }

  uint64_t key_;
  uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace weakspk
