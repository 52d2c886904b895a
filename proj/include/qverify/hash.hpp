#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string_view>

#include "qverify/common.hpp"

namespace qverify {

using Digest = std::array<uint8_t, 32>;

// Domain-separation tags. Every hash call in the library starts with one.
namespace tag {
inline constexpr uint8_t kCommitSeed = 0x43;
inline constexpr uint8_t kTranscriptPk = 0x44;
inline constexpr uint8_t kFhe = 0x45;
inline constexpr uint8_t kRngFork = 0x46;
inline constexpr uint8_t kPrg = 0x47;
inline constexpr uint8_t kHashCommit = 0x48;
inline constexpr uint8_t kAokResponse = 0x4B;
inline constexpr uint8_t kCoinDerive = 0x4D;
inline constexpr uint8_t kRandomOracle = 0x52;
inline constexpr uint8_t kExpand = 0x58;
}  // namespace tag

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), algorithm(), nullptr) != 1) {
      throw std::runtime_error("sha256 init failed");
    }
  }

  Sha256& update(const uint8_t* p, size_t n) {
    if (n != 0 && EVP_DigestUpdate(ctx_.get(), p, n) != 1) throw std::runtime_error("sha256 update failed");
    return *this;
  }
  template <class Range>
  Sha256& update(const Range& r) {
    return update(reinterpret_cast<const uint8_t*>(std::data(r)), std::size(r));
  }
  Sha256& byte(uint8_t b) { return update(&b, 1); }
  Sha256& u32(uint32_t v) {
    uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
    return update(b, 4);
  }
  Sha256& u64(uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
    return update(b, 8);
  }
  // Length-prefixed update; keeps concatenations of variable-length fields injective.
  template <class Range>
  Sha256& block(const Range& r) {
    u64(std::size(r));
    return update(r);
  }

  Digest finish() {
    Digest d{};
    unsigned len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), d.data(), &len) != 1 || len != d.size()) {
      throw std::runtime_error("sha256 final failed");
    }
    return d;
  }

 private:
  // Fetched once; passing EVP_sha256() would repeat the provider lookup on every init.
  static const EVP_MD* algorithm() {
    static const std::unique_ptr<EVP_MD, decltype(&EVP_MD_free)> md(EVP_MD_fetch(nullptr, "SHA256", nullptr), &EVP_MD_free);
    if (!md) throw std::runtime_error("sha256 unavailable");
    return md.get();
  }
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline Digest sha256_tagged(uint8_t domain, const uint8_t* p, size_t n) {
  return Sha256().byte(domain).update(p, n).finish();
}
template <class Range>
Digest sha256_tagged(uint8_t domain, const Range& r) {
  return Sha256().byte(domain).update(r).finish();
}

inline uint64_t load_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t{p[i]} << (8 * i);
  return v;
}

// Deterministic expander: SHA-256 in counter mode over a 32-byte seed.
// Satisfies UniformRandomBitGenerator so key generation can draw from it.
class HashTape {
 public:
  using result_type = uint64_t;
  explicit HashTape(const Digest& seed) : seed_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    if (used_ == 4) refill();
    return load_u64(block_.data() + 8 * used_++);
  }

 private:
  void refill() {
    block_ = Sha256().byte(tag::kExpand).update(seed_).u64(counter_++).finish();
    used_ = 0;
  }
  Digest seed_;
  Digest block_{};
  uint64_t counter_ = 0;
  unsigned used_ = 4;
};

}  // namespace qverify
