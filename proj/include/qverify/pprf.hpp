#pragma once

// GGM puncturable PRF. The length-doubling PRG is G(k) = (H(0x47‖0‖k), H(0x47‖1‖k))
// with H = SHA-256. Inputs are walked from the most significant bit down.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qverify/hash.hpp"

namespace qverify::pprf {

using Seed = Digest;
using Output = Digest;

inline constexpr unsigned kMaxWidth = 64;

inline Digest prg_half(const Digest& k, unsigned bit) {
  return Sha256().byte(tag::kPrg).byte(static_cast<uint8_t>(bit & 1U)).update(k).finish();
}

inline void check_input(uint64_t x, unsigned width) {
  if (width == 0 || width > kMaxWidth) throw std::invalid_argument("pprf: input width must lie in [1, 64]");
  if (width < 64 && (x >> width) != 0) throw std::invalid_argument("pprf: input wider than the declared width");
}

inline unsigned level_bit(uint64_t x, unsigned width, unsigned level) {
  return static_cast<unsigned>((x >> (width - 1 - level)) & 1U);
}

inline Output prf_eval(const Seed& seed, uint64_t x, unsigned width) {
  check_input(x, width);
  Digest k = seed;
  for (unsigned j = 0; j < width; ++j) k = prg_half(k, level_bit(x, width, j));
  return k;
}

// Key punctured at `point`: copath[j] is the node that branches off the path at level j.
struct PuncturedKey {
  unsigned width = 0;
  uint64_t point = 0;
  std::vector<Digest> copath;
};

inline PuncturedKey prf_puncture(const Seed& seed, uint64_t point, unsigned width) {
  check_input(point, width);
  PuncturedKey key{width, point, {}};
  Digest k = seed;
  for (unsigned j = 0; j < width; ++j) {
    unsigned bit = level_bit(point, width, j);
    key.copath.push_back(prg_half(k, bit ^ 1U));
    k = prg_half(k, bit);
  }
  return key;
}

inline Output prf_punc_eval(const PuncturedKey& key, uint64_t x) {
  check_input(x, key.width);
  if (x == key.point) throw std::domain_error("pprf: evaluation at the punctured point");
  unsigned j = 0;
  while (level_bit(x, key.width, j) == level_bit(key.point, key.width, j)) ++j;
  Digest k = key.copath[j];
  for (++j; j < key.width; ++j) k = prg_half(k, level_bit(x, key.width, j));
  return k;
}

}  // namespace qverify::pprf
