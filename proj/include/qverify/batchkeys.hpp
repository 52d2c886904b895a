#pragma once

// Batch key generation: one master key pair standing for N per-slot rTCF key pairs.
//
// The compressed backend replaces the obfuscated key-derivation program with a
// sealed in-process evaluator. It reproduces the program's input/output behaviour
// only; nothing here hides the seed from a party holding the object in memory.

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "qverify/common.hpp"
#include "qverify/hash.hpp"
#include "qverify/pprf.hpp"
#include "qverify/rng.hpp"
#include "qverify/rtcf.hpp"

namespace qverify::batchkeys {

// PRF input width for slot indices; fixed so derivations do not depend on N.
inline constexpr unsigned kIndexWidth = 32;
inline constexpr size_t kMaxTrivialSlots = size_t{1} << 16;
inline constexpr uint64_t kMaxCompressedSlots = uint64_t{1} << 32;

// The basis circuit C : [N] -> {0,1}.
class BasisSpec {
 public:
  static BasisSpec truth_table(std::vector<uint8_t> bits) {
    for (uint8_t b : bits) {
      if (b > 1) throw std::invalid_argument("BasisSpec: truth table entries must be bits");
    }
    BasisSpec c;
    c.n_ = bits.size();
    c.rep_ = std::move(bits);
    return c;
  }
  static BasisSpec from_bits(Bits h) {
    std::vector<uint8_t> t(h.width);
    for (unsigned i = 0; i < h.width; ++i) t[i] = static_cast<uint8_t>(h[i]);
    return truth_table(std::move(t));
  }
  static BasisSpec constant(size_t n, unsigned bit) {
    BasisSpec c;
    c.n_ = n;
    c.rep_ = Constant{bit & 1U};
    return c;
  }
  // C(i) = bit `selector` of PRF_seed(i).
  static BasisSpec prf(const pprf::Seed& seed, size_t n, unsigned selector = 0) {
    if (selector >= 256) throw std::invalid_argument("BasisSpec: selector outside the PRF output");
    BasisSpec c;
    c.n_ = n;
    c.rep_ = Prf{seed, selector};
    return c;
  }

  size_t size() const { return n_; }
  bool succinct() const { return !std::holds_alternative<std::vector<uint8_t>>(rep_); }

  unsigned operator()(size_t i) const {
    if (i >= n_) throw std::out_of_range("BasisSpec: index outside [N]");
    if (const auto* t = std::get_if<std::vector<uint8_t>>(&rep_)) return (*t)[i];
    if (const auto* k = std::get_if<Constant>(&rep_)) return k->bit;
    const auto& p = std::get<Prf>(rep_);
    pprf::Output out = pprf::prf_eval(p.seed, i, kIndexWidth);
    return (out[p.selector / 8] >> (p.selector % 8)) & 1U;
  }

  std::vector<uint8_t> table() const {
    std::vector<uint8_t> t(n_);
    for (size_t i = 0; i < n_; ++i) t[i] = static_cast<uint8_t>((*this)(i));
    return t;
  }
  Bits bits() const {
    if (n_ > 64) throw std::length_error("BasisSpec: more than 64 slots");
    uint64_t v = 0;
    for (size_t i = 0; i < n_; ++i) v |= uint64_t{(*this)(i)} << i;
    return Bits(v, static_cast<unsigned>(n_));
  }

 private:
  struct Constant {
    unsigned bit;
  };
  struct Prf {
    pprf::Seed seed;
    unsigned selector;
  };
  size_t n_ = 0;
  std::variant<std::vector<uint8_t>, Constant, Prf> rep_;
};

enum class Backend : uint8_t { trivial = 0x01, compressed = 0x02 };

inline const char* backend_name(Backend b) { return b == Backend::trivial ? "trivial" : "compressed"; }

// gen(ell, C(i); r) with r = PRF_s(i) expanded into gen's whole randomness tape.
inline rtcf::KeyPair derive_slot(const pprf::Seed& seed, const BasisSpec& c, unsigned ell, size_t i) {
  HashTape tape(pprf::prf_eval(seed, i, kIndexWidth));
  return rtcf::gen(ell, rtcf::mode_from_bit(c(i)), tape);
}

struct Override {
  size_t index;
  rtcf::PublicKey pk;
};

namespace detail {
// Holds the derivation secret; exposes only per-index public keys and a commitment.
class SealedEvaluator {
 public:
  SealedEvaluator(pprf::Seed seed, BasisSpec c, unsigned ell, std::optional<Override> ov)
      : seed_(seed), c_(std::move(c)), ell_(ell), override_(std::move(ov)) {}

  rtcf::PublicKey ext_pk(size_t i) const {
    if (override_ && override_->index == i) return override_->pk;
    return derive_slot(seed_, c_, ell_, i).pk;
  }
  Digest commitment() const { return sha256_tagged(tag::kCommitSeed, seed_); }
  const std::optional<Override>& override_slot() const { return override_; }

 private:
  pprf::Seed seed_;
  BasisSpec c_;
  unsigned ell_;
  std::optional<Override> override_;
};
}  // namespace detail

class MasterPublicKey {
 public:
  Backend backend() const { return backend_; }
  size_t size() const { return n_; }
  unsigned ell() const { return ell_; }

  rtcf::PublicKey ext_pk(size_t i) const {
    if (i >= n_) throw std::out_of_range("ext_pk: index outside [N]");
    if (backend_ == Backend::trivial) return slots_[i];
    return sealed_->ext_pk(i);
  }

  // trivial: tag, N (u32), slot keys. compressed: tag, ell, N (u32), seed commitment,
  // override flag, then index (u32) and pk* when the flag is set.
  Bytes bytes() const {
    ByteWriter w;
    w.u8(static_cast<uint8_t>(backend_));
    if (backend_ == Backend::trivial) {
      w.u32(static_cast<uint32_t>(n_));
      for (const auto& pk : slots_) w.raw(pk.bytes());
      return std::move(w).bytes();
    }
    w.u8(static_cast<uint8_t>(ell_));
    w.u32(static_cast<uint32_t>(n_));
    w.raw(sealed_->commitment());
    const auto& ov = sealed_->override_slot();
    w.u8(ov ? 1 : 0);
    if (ov) {
      w.u32(static_cast<uint32_t>(ov->index));
      w.raw(ov->pk.bytes());
    }
    return std::move(w).bytes();
  }

 private:
  friend class KeyFactory;
  Backend backend_ = Backend::trivial;
  size_t n_ = 0;
  unsigned ell_ = 0;
  std::vector<rtcf::PublicKey> slots_;
  std::shared_ptr<const detail::SealedEvaluator> sealed_;
};

class MasterSecretKey {
 public:
  Backend backend() const { return backend_; }
  size_t size() const { return n_; }

  rtcf::SecretKey ext_sk(size_t i) const {
    if (i >= n_) throw std::out_of_range("ext_sk: index outside [N]");
    if (backend_ == Backend::trivial) return slots_[i];
    if (restricted_ && *restricted_ == i) throw RestrictedError("ext_sk: slot is restricted by programming");
    return derive_slot(seed_, *c_, ell_, i).sk;
  }
  std::optional<size_t> restricted_index() const { return restricted_; }

 private:
  friend class KeyFactory;
  Backend backend_ = Backend::trivial;
  size_t n_ = 0;
  unsigned ell_ = 0;
  std::vector<rtcf::SecretKey> slots_;
  pprf::Seed seed_{};
  std::shared_ptr<const BasisSpec> c_;
  std::optional<size_t> restricted_;
};

struct MasterKeys {
  MasterPublicKey pk;
  MasterSecretKey sk;
};

class KeyFactory {
 public:
  static MasterKeys trivial(unsigned ell, const BasisSpec& c, std::vector<rtcf::KeyPair> pairs) {
    MasterKeys k;
    k.pk.backend_ = k.sk.backend_ = Backend::trivial;
    k.pk.n_ = k.sk.n_ = c.size();
    k.pk.ell_ = k.sk.ell_ = ell;
    for (auto& p : pairs) {
      k.pk.slots_.push_back(std::move(p.pk));
      k.sk.slots_.push_back(std::move(p.sk));
    }
    return k;
  }
  static MasterKeys compressed(unsigned ell, const BasisSpec& c, const pprf::Seed& seed, std::optional<Override> ov) {
    MasterKeys k;
    k.pk.backend_ = k.sk.backend_ = Backend::compressed;
    k.pk.n_ = k.sk.n_ = c.size();
    k.pk.ell_ = k.sk.ell_ = ell;
    if (ov) k.sk.restricted_ = ov->index;
    k.pk.sealed_ = std::make_shared<const detail::SealedEvaluator>(seed, c, ell, std::move(ov));
    k.sk.seed_ = seed;
    k.sk.c_ = std::make_shared<const BasisSpec>(c);
    return k;
  }
};

inline void check_setup_args(unsigned ell, const BasisSpec& c, Backend backend) {
  rtcf::check_ell(ell);
  if (c.size() == 0) throw std::invalid_argument("setup: N must be positive");
  if (backend == Backend::trivial && c.size() > kMaxTrivialSlots) throw std::invalid_argument("setup: N above 2^16");
  if (backend == Backend::compressed && c.size() > kMaxCompressedSlots) throw std::invalid_argument("setup: N above 2^32");
}

// Compressed setup from an explicit seed; `setup` draws the seed from rng.
inline MasterKeys setup_with_seed(unsigned ell, const BasisSpec& c, const pprf::Seed& seed) {
  check_setup_args(ell, c, Backend::compressed);
  return KeyFactory::compressed(ell, c, seed, std::nullopt);
}

template <class G>
MasterKeys setup(unsigned ell, const BasisSpec& c, Backend backend, G& rng) {
  check_setup_args(ell, c, backend);
  if (backend == Backend::trivial) {
    std::vector<rtcf::KeyPair> pairs;
    pairs.reserve(c.size());
    for (size_t i = 0; i < c.size(); ++i) pairs.push_back(rtcf::gen(ell, rtcf::mode_from_bit(c(i)), rng));
    return KeyFactory::trivial(ell, c, std::move(pairs));
  }
  if (backend == Backend::compressed) return setup_with_seed(ell, c, random_digest(rng));
  throw std::invalid_argument("setup: unsupported backend");
}

inline MasterKeys program_with_seed(unsigned ell, const BasisSpec& c, size_t i_star, rtcf::PublicKey pk_star,
                                    const pprf::Seed& seed) {
  check_setup_args(ell, c, Backend::compressed);
  if (i_star >= c.size()) throw std::out_of_range("program: index outside [N]");
  if (pk_star.ell() != ell) throw std::invalid_argument("program: pk* has a different ell");
  return KeyFactory::compressed(ell, c, seed, Override{i_star, std::move(pk_star)});
}

template <class G>
MasterKeys program(unsigned ell, const BasisSpec& c, size_t i_star, rtcf::PublicKey pk_star, Backend backend, G& rng) {
  if (backend != Backend::compressed) throw std::logic_error("program: only the compressed backend supports programming");
  return program_with_seed(ell, c, i_star, std::move(pk_star), random_digest(rng));
}

inline rtcf::PublicKey ext_pk(const MasterPublicKey& pk, size_t i) { return pk.ext_pk(i); }
inline rtcf::SecretKey ext_sk(const MasterSecretKey& sk, size_t i) { return sk.ext_sk(i); }

inline std::optional<Backend> parse_backend(std::string_view name) {
  if (name == "trivial") return Backend::trivial;
  if (name == "compressed") return Backend::compressed;
  return std::nullopt;
}

}  // namespace qverify::batchkeys
