#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "qverify/hash.hpp"

namespace qverify {

// Experiment randomness. One root seed per run; subsystems receive forks keyed
// by a domain string and index, so adding a consumer never shifts another's stream.
class Rng {
 public:
  using result_type = uint64_t;

  explicit Rng(uint64_t seed) : Rng(Sha256().byte(tag::kRngFork).u64(seed).finish()) {}
  explicit Rng(const Digest& material) : material_(material) {
    std::array<uint32_t, 8> words{};
    for (size_t i = 0; i < 8; ++i) {
      words[i] = static_cast<uint32_t>(material[4 * i]) | (static_cast<uint32_t>(material[4 * i + 1]) << 8) |
                 (static_cast<uint32_t>(material[4 * i + 2]) << 16) |
                 (static_cast<uint32_t>(material[4 * i + 3]) << 24);
    }
    std::seed_seq seq(words.begin(), words.end());
    engine_.seed(seq);
  }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  // Fork depends only on this generator's seed material, not on how far it has advanced.
  Rng fork(std::string_view domain, uint64_t index = 0) const {
    return Rng(Sha256().byte(tag::kRngFork).update(material_).block(domain).u64(index).finish());
  }

  const Digest& material() const { return material_; }

 private:
  Digest material_;
  std::mt19937_64 engine_;
};

// Portable sampling helpers. The std distributions are implementation-defined,
// which would break byte-identical reports across toolchains.
template <class G>
uint64_t uniform_below(G& g, uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below: empty range");
  uint64_t limit = G::max() - (G::max() % n);
  for (;;) {
    uint64_t v = g();
    if (v < limit) return v % n;
  }
}

template <class G>
unsigned random_bit(G& g) {
  return static_cast<unsigned>(g() >> 63);
}

template <class G>
double uniform01(G& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller; used for Haar-like random states.
template <class G>
double standard_normal(G& g) {
  double u1 = uniform01(g);
  double u2 = uniform01(g);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

template <class G>
Digest random_digest(G& g) {
  Digest d{};
  for (size_t i = 0; i < 4; ++i) {
    uint64_t v = g();
    for (size_t j = 0; j < 8; ++j) d[8 * i + j] = static_cast<uint8_t>(v >> (8 * j));
  }
  return d;
}

}  // namespace qverify
