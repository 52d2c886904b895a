#pragma once

// Trapdoor claw-free function interface with an exact toy backend.
//
// The toy backend stores the whole function as a table, so anyone holding the
// public key can find claws. It is insecure on purpose: it exists so that
// protocol correctness and the extraction identities can be checked exactly.

#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qverify/common.hpp"
#include "qverify/qsim.hpp"
#include "qverify/rng.hpp"

namespace qverify::rtcf {

inline constexpr uint8_t kToyBackend = 0x01;
inline constexpr unsigned kMinEll = 1;
inline constexpr unsigned kMaxEll = 4;

enum class Mode : uint8_t { injective = 0, two_to_one = 1 };

inline Mode mode_from_bit(unsigned bit) { return bit ? Mode::two_to_one : Mode::injective; }

struct DomainPoint {
  unsigned b = 0;
  Bits x;
  friend bool operator==(const DomainPoint&, const DomainPoint&) = default;
};

// Both preimages of a two-to-one image point: (0, x0) and (1, x1).
struct Claw {
  Bits x0;
  Bits x1;
  friend bool operator==(const Claw&, const Claw&) = default;
};

inline void check_ell(unsigned ell) {
  if (ell < kMinEll || ell > kMaxEll) throw std::invalid_argument("rtcf: ell must lie in [1, 4]");
}

// Index of b‖x in the table: b is bit 0, x occupies bits 1..ell.
inline uint64_t domain_index(unsigned b, Bits x) { return (b & 1U) | (x.value << 1); }

// Public key: the evaluation table y = f(b, x) over all 2^(ell+1) domain points.
// In two-to-one mode the table is f(b, x) = g(x ⊕ b·s); storing f rather than g
// is what lets a key holder evaluate without knowing s.
class PublicKey {
 public:
  PublicKey() = default;
  PublicKey(unsigned ell, std::vector<uint8_t> table) : ell_(ell), table_(std::move(table)) {
    check_ell(ell);
    if (table_.size() != (size_t{1} << (ell + 1))) throw std::invalid_argument("rtcf: table size");
    for (uint8_t y : table_) {
      if (y >> (ell + 1)) throw std::invalid_argument("rtcf: table entry outside range");
    }
  }

  unsigned ell() const { return ell_; }
  unsigned range_width() const { return ell_ + 1; }
  const std::vector<uint8_t>& table() const { return table_; }

  Bits eval(unsigned b, Bits x) const {
    if (x.width != ell_ || b > 1) throw std::invalid_argument("rtcf: point outside domain");
    return Bits(table_[domain_index(b, x)], ell_ + 1);
  }

  // tag, ell, then one byte per table entry.
  Bytes bytes() const {
    ByteWriter w;
    w.u8(kToyBackend);
    w.u8(static_cast<uint8_t>(ell_));
    w.raw(table_);
    return std::move(w).bytes();
  }
  static PublicKey parse(ByteReader& r) {
    if (r.u8() != kToyBackend) throw ProtocolError("rtcf: unknown backend tag");
    unsigned ell = r.u8();
    if (ell < kMinEll || ell > kMaxEll) throw ProtocolError("rtcf: ell out of range");
    Bytes t = r.raw(size_t{1} << (ell + 1));
    for (uint8_t y : t) {
      if (y >> (ell + 1)) throw ProtocolError("rtcf: table entry outside range");
    }
    return PublicKey(ell, std::move(t));
  }
  static PublicKey from_bytes(const Bytes& b) {
    ByteReader r(b);
    PublicKey pk = parse(r);
    r.expect_done();
    return pk;
  }

  friend bool operator==(const PublicKey&, const PublicKey&) = default;

 private:
  unsigned ell_ = 0;
  std::vector<uint8_t> table_;
};

// Secret key: inverse of the underlying permutation (g⁻¹ over ell bits or g′⁻¹ over
// ell+1 bits) and, in two-to-one mode, the shift s.
class SecretKey {
 public:
  SecretKey() = default;
  SecretKey(unsigned ell, Mode mode, std::vector<uint8_t> inverse, Bits shift)
      : ell_(ell), mode_(mode), inverse_(std::move(inverse)), shift_(shift) {
    check_ell(ell);
    const unsigned w = mode == Mode::two_to_one ? ell : ell + 1;
    if (inverse_.size() != (size_t{1} << w)) throw std::invalid_argument("rtcf: inverse table size");
    std::vector<bool> seen(inverse_.size(), false);
    for (uint8_t v : inverse_) {
      if (v >= inverse_.size() || seen[v]) throw std::invalid_argument("rtcf: inverse table is not a permutation");
      seen[v] = true;
    }
    if (mode == Mode::two_to_one && (shift_.width != ell || shift_.value == 0)) {
      throw std::invalid_argument("rtcf: two-to-one shift must be a nonzero ell-bit string");
    }
    if (mode == Mode::injective) shift_ = Bits(0, ell);
  }

  unsigned ell() const { return ell_; }
  Mode mode() const { return mode_; }
  Bits shift() const { return shift_; }
  const std::vector<uint8_t>& inverse() const { return inverse_; }

  // tag, ell, mode, inverse table, then s in two-to-one mode.
  Bytes bytes() const {
    ByteWriter w;
    w.u8(kToyBackend);
    w.u8(static_cast<uint8_t>(ell_));
    w.u8(static_cast<uint8_t>(mode_));
    w.raw(inverse_);
    if (mode_ == Mode::two_to_one) w.bits(shift_);
    return std::move(w).bytes();
  }
  static SecretKey from_bytes(const Bytes& b) {
    ByteReader r(b);
    if (r.u8() != kToyBackend) throw ProtocolError("rtcf: unknown backend tag");
    unsigned ell = r.u8();
    if (ell < kMinEll || ell > kMaxEll) throw ProtocolError("rtcf: ell out of range");
    uint8_t m = r.u8();
    if (m > 1) throw ProtocolError("rtcf: unknown mode");
    Mode mode = static_cast<Mode>(m);
    const unsigned w = mode == Mode::two_to_one ? ell : ell + 1;
    Bytes inv = r.raw(size_t{1} << w);
    Bits s = mode == Mode::two_to_one ? r.bits(ell) : Bits(0, ell);
    r.expect_done();
    try {
      return SecretKey(ell, mode, std::move(inv), s);
    } catch (const std::invalid_argument& e) {
      throw ProtocolError(e.what());
    }
  }

  friend bool operator==(const SecretKey&, const SecretKey&) = default;

 private:
  unsigned ell_ = 0;
  Mode mode_ = Mode::injective;
  std::vector<uint8_t> inverse_;
  Bits shift_;
};

struct KeyPair {
  PublicKey pk;
  SecretKey sk;
};

// Builds a toy key from an explicit permutation `g` (ell bits for two-to-one,
// ell+1 bits for injective) and shift s.
inline KeyPair make_key(unsigned ell, Mode mode, const std::vector<uint8_t>& g, Bits s = {}) {
  check_ell(ell);
  const unsigned w = mode == Mode::two_to_one ? ell : ell + 1;
  if (g.size() != (size_t{1} << w)) throw std::invalid_argument("rtcf: permutation size");
  std::vector<uint8_t> inv(g.size(), 0);
  std::vector<bool> seen(g.size(), false);
  for (size_t i = 0; i < g.size(); ++i) {
    if (g[i] >= g.size() || seen[g[i]]) throw std::invalid_argument("rtcf: table is not a permutation");
    seen[g[i]] = true;
    inv[g[i]] = static_cast<uint8_t>(i);
  }
  std::vector<uint8_t> table(size_t{1} << (ell + 1));
  for (uint64_t x = 0; x < (uint64_t{1} << ell); ++x) {
    for (unsigned b = 0; b < 2; ++b) {
      uint64_t idx = domain_index(b, Bits(x, ell));
      table[idx] = mode == Mode::two_to_one ? g[x ^ (b ? s.value : 0)] : g[idx];
    }
  }
  if (mode == Mode::injective) s = Bits(0, ell);
  SecretKey sk(ell, mode, std::move(inv), s);
  return {PublicKey(ell, std::move(table)), std::move(sk)};
}

inline std::vector<uint8_t> identity_permutation(unsigned width) {
  std::vector<uint8_t> g(size_t{1} << width);
  std::iota(g.begin(), g.end(), uint8_t{0});
  return g;
}

// Samples g (Fisher-Yates) and, in two-to-one mode, a nonzero s. `tape` is any
// UniformRandomBitGenerator; the batch backend passes a deterministic expander.
template <class G>
KeyPair gen(unsigned ell, Mode mode, G& tape) {
  check_ell(ell);
  const unsigned w = mode == Mode::two_to_one ? ell : ell + 1;
  std::vector<uint8_t> g = identity_permutation(w);
  for (size_t i = g.size() - 1; i > 0; --i) std::swap(g[i], g[uniform_below(tape, i + 1)]);
  Bits s(0, ell);
  if (mode == Mode::two_to_one) s = Bits(1 + uniform_below(tape, (uint64_t{1} << ell) - 1), ell);
  return make_key(ell, mode, g, s);
}

inline Bits eval(const PublicKey& pk, unsigned b, Bits x) { return pk.eval(b, x); }

// Point-mass output distribution of the toy backend.
inline double density(const PublicKey& pk, unsigned b, Bits x, Bits y) {
  if (y.width != pk.range_width()) return 0.0;
  return pk.eval(b, x) == y ? 1.0 : 0.0;
}

inline bool check(const PublicKey& pk, unsigned b, Bits x, Bits y) {
  if (x.width != pk.ell() || b > 1 || y.width != pk.range_width()) return false;
  return pk.eval(b, x) == y;
}

inline std::optional<DomainPoint> invert_injective(const SecretKey& sk, Bits y) {
  const unsigned ell = sk.ell();
  if (sk.mode() != Mode::injective || y.width != ell + 1) return std::nullopt;
  uint64_t idx = sk.inverse()[y.value];
  return DomainPoint{static_cast<unsigned>(idx & 1U), Bits(idx >> 1, ell)};
}

inline std::optional<Claw> invert_two_to_one(const SecretKey& sk, Bits y) {
  const unsigned ell = sk.ell();
  if (sk.mode() != Mode::two_to_one || y.width != ell + 1) return std::nullopt;
  // The padding bit is the top bit of the range point; a set bit is outside the image.
  if (y.value >> ell) return std::nullopt;
  Bits x0(sk.inverse()[y.value], ell);
  return Claw{x0, x0 ^ sk.shift()};
}

// Good(x0, x1, d): the set of admissible equations. It never depends on d's first bit.
using GoodPredicate = std::function<bool(Bits x0, Bits x1, Bits d)>;

// The toy backend accepts every d.
inline bool toy_good(Bits, Bits, Bits) { return true; }

inline bool good(const GoodPredicate& pred, Bits x0, Bits x1, Bits d) {
  if (d.width != x0.width + 1 || x1.width != x0.width) throw std::invalid_argument("good: length mismatch");
  return pred(x0, x1, d.with(0, 0));
}
inline bool good(Bits x0, Bits x1, Bits d) { return good(toy_good, x0, x1, d); }

// d · (1, x0 ⊕ x1) over GF(2); d's bit 0 multiplies the constant 1.
inline unsigned hardcore_bit(Bits x0, Bits x1, Bits d) {
  if (x0.width != x1.width || d.width != x0.width + 1) throw std::invalid_argument("hardcore_bit: length mismatch");
  Bits a(1 | ((x0 ^ x1).value << 1), d.width);
  return dot(d, a);
}

// Adaptive hardcore bit game ------------------------------------------------

struct HardcoreAttempt {
  Bits y;
  unsigned b = 0;
  Bits x;
  Bits d;
};

enum class GameOutcome { win0, win1, fail };

using HardcoreAdversary = std::function<std::optional<HardcoreAttempt>(const PublicKey&, Rng&)>;

// Samples a two-to-one key, runs the adversary, and classifies its answer: fail on
// an invalid preimage or d outside Good, otherwise win0/win1 by the hardcore bit.
inline GameOutcome adaptive_hardcore_game(const HardcoreAdversary& adversary, unsigned ell, Rng& rng,
                                          const GoodPredicate& good_pred = toy_good) {
  KeyPair kp = gen(ell, Mode::two_to_one, rng);
  std::optional<HardcoreAttempt> a = adversary(kp.pk, rng);
  if (!a || a->x.width != ell || a->d.width != ell + 1 || a->y.width != ell + 1 || a->b > 1) return GameOutcome::fail;
  if (!check(kp.pk, a->b, a->x, a->y)) return GameOutcome::fail;
  std::optional<Claw> claw = invert_two_to_one(kp.sk, a->y);
  if (!claw) return GameOutcome::fail;
  if (!good(good_pred, claw->x0, claw->x1, a->d)) return GameOutcome::fail;
  return hardcore_bit(claw->x0, claw->x1, a->d) == 0 ? GameOutcome::win0 : GameOutcome::win1;
}

// Recovers a claw for y straight from the table, which the toy key makes public.
inline std::optional<Claw> claw_from_table(const PublicKey& pk, Bits y) {
  std::optional<Bits> x0, x1;
  for (uint64_t x = 0; x < (uint64_t{1} << pk.ell()); ++x) {
    if (pk.eval(0, Bits(x, pk.ell())) == y) x0 = Bits(x, pk.ell());
    if (pk.eval(1, Bits(x, pk.ell())) == y) x1 = Bits(x, pk.ell());
  }
  if (!x0 || !x1) return std::nullopt;
  return Claw{*x0, *x1};
}

// Collapsing game ----------------------------------------------------------

// The distinguisher's state must contain registers "B" (1 qubit) and "X" (ell qubits);
// other registers are private to the distinguisher.
struct CollapseDistinguisher {
  std::function<std::pair<qsim::PureState, Bits>(const PublicKey&, Rng&)> prepare;
  std::function<unsigned(const qsim::PureState&, Rng&)> guess;
};

namespace detail {
// Zeroes every basis component whose (B, X) value fails check against y; returns kept mass.
inline double project_on_check(qsim::Vector& v, const qsim::RegisterLayout& layout, const PublicKey& pk, Bits y) {
  const std::vector<unsigned> bq = layout.qubits("B");
  const std::vector<unsigned> xq = layout.qubits("X");
  if (bq.size() != 1 || xq.size() != pk.ell()) throw std::invalid_argument("collapse: B/X register widths");
  double kept = 0.0;
  for (uint64_t i = 0; i < v.size(); ++i) {
    unsigned b = static_cast<unsigned>(qsim::gather_bits(i, bq));
    Bits x(qsim::gather_bits(i, xq), pk.ell());
    if (!check(pk, b, x, y)) {
      v[i] = 0.0;
    } else {
      kept += std::norm(v[i]);
    }
  }
  return kept;
}
}  // namespace detail

// Exact post-challenge state given that the superposed check passes, or nullopt
// when the check passes with probability zero.
inline std::optional<qsim::MixedState> collapse_post_state(const PublicKey& pk, Bits y, const qsim::PureState& state,
                                                           unsigned challenge) {
  qsim::Vector v = state.amplitudes();
  double p = detail::project_on_check(v, state.layout(), pk, y);
  if (p < 1e-14) return std::nullopt;
  for (auto& a : v) a /= std::sqrt(p);
  qsim::PureState passed(state.layout(), std::move(v), 1e-10);
  if (challenge == 0) return qsim::MixedState::from_pure(passed);
  qsim::Matrix rho = qsim::Matrix::Zero(static_cast<int64_t>(passed.layout().dimension()),
                                        static_cast<int64_t>(passed.layout().dimension()));
  const std::vector<unsigned> bq = passed.layout().qubits("B");
  for (unsigned b = 0; b < 2; ++b) {
    qsim::Vector w = passed.amplitudes();
    for (uint64_t i = 0; i < w.size(); ++i) {
      if (qsim::gather_bits(i, bq) != b) w[i] = 0.0;
    }
    Eigen::Map<Eigen::VectorXcd> m(w.data(), static_cast<int64_t>(w.size()));
    rho += m * m.adjoint();
  }
  return qsim::MixedState(passed.layout(), 0.5 * (rho + rho.adjoint()));
}

// Runs one collapsing-game round with challenge bit `challenge` and returns the
// distinguisher's guess. A failed check ends the game with a uniform bit.
inline unsigned collapse_game(const CollapseDistinguisher& dist, const PublicKey& pk, unsigned challenge, Rng& rng) {
  auto [state, y] = dist.prepare(pk, rng);
  qsim::Vector v = state.amplitudes();
  double p = detail::project_on_check(v, state.layout(), pk, y);
  if (p < 1e-14 || uniform01(rng) >= p) return random_bit(rng);
  for (auto& a : v) a /= std::sqrt(p);
  qsim::PureState passed(state.layout(), std::move(v), 1e-10);
  if (challenge == 1) passed = qsim::sample_measure(passed, "B", Bits(0, 1), rng).second;
  return dist.guess(passed, rng) & 1U;
}

}  // namespace qverify::rtcf
