#pragma once

// The N-qubit commit-and-measure protocol: verifier algorithms Gen/Test/Out, the
// honest prover's Commit/Open on the simulator, transcripts, and exact branch
// enumeration of the verifier's output.
//
// Slot i of the prover lives in register Z<i> = B_i ⊗ X_i of width ell+1; qubit 0 of
// Z<i> is B_i.

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "qverify/batchkeys.hpp"
#include "qverify/common.hpp"
#include "qverify/distribution.hpp"
#include "qverify/hash.hpp"
#include "qverify/qsim.hpp"
#include "qverify/rtcf.hpp"
#include "qverify/wire.hpp"

namespace qverify::mproto {

using batchkeys::BasisSpec;
using batchkeys::MasterKeys;
using batchkeys::MasterPublicKey;
using batchkeys::MasterSecretKey;

struct ProtocolParams {
  size_t n = 1;
  unsigned ell = 1;
  batchkeys::Backend backend = batchkeys::Backend::trivial;
  uint64_t seed = 0;
};

inline void validate(const ProtocolParams& p) {
  if (p.n == 0) throw std::invalid_argument("ProtocolParams: N must be positive");
  rtcf::check_ell(p.ell);
  if (p.n * (p.ell + 2) > qsim::kMaxQubits) throw std::length_error("ProtocolParams: N·(ell+2) exceeds 26 qubits");
}

inline std::string z_reg(size_t i) { return "Z" + std::to_string(i); }
inline std::vector<std::string> z_regs(size_t n) {
  std::vector<std::string> r;
  for (size_t i = 0; i < n; ++i) r.push_back(z_reg(i));
  return r;
}
inline qsim::RegisterLayout z_layout(size_t n, unsigned ell) {
  qsim::RegisterLayout l;
  for (size_t i = 0; i < n; ++i) l.push(z_reg(i), ell + 1);
  return l;
}

struct SlotKeys {
  std::vector<rtcf::PublicKey> pk;
  std::vector<rtcf::SecretKey> sk;
  size_t size() const { return pk.size(); }
};

inline std::vector<rtcf::PublicKey> public_slots(const MasterPublicKey& pk) {
  std::vector<rtcf::PublicKey> out;
  for (size_t i = 0; i < pk.size(); ++i) out.push_back(pk.ext_pk(i));
  return out;
}
inline SlotKeys slot_keys(const MasterKeys& k) {
  SlotKeys s;
  s.pk = public_slots(k.pk);
  for (size_t i = 0; i < k.sk.size(); ++i) s.sk.push_back(k.sk.ext_sk(i));
  return s;
}

template <class G>
MasterKeys mp_gen(const ProtocolParams& p, const BasisSpec& c, G& rng) {
  validate(p);
  if (c.size() != p.n) throw std::invalid_argument("mp_gen: basis length differs from N");
  return batchkeys::setup(p.ell, c, p.backend, rng);
}

// Messages ----------------------------------------------------------------

struct CommitMessage {
  std::vector<Bits> y;

  // count (u32), entry width (u8), entries packed LSB-first.
  Bytes bytes() const {
    ByteWriter w;
    w.u32(static_cast<uint32_t>(y.size()));
    w.u8(static_cast<uint8_t>(y.empty() ? 0 : y[0].width));
    for (Bits b : y) w.bits(b);
    return std::move(w).bytes();
  }
  static CommitMessage from_bytes(const Bytes& b) {
    ByteReader r(b);
    CommitMessage m;
    uint32_t n = r.u32();
    unsigned w = r.u8();
    if (w > 8 || (n > 0 && w == 0)) throw ProtocolError("commit message: bad entry width");
    if (r.remaining() != static_cast<size_t>(n) * ((w + 7) / 8)) throw ProtocolError("commit message: length mismatch");
    for (uint32_t i = 0; i < n; ++i) m.y.push_back(r.bits(w));
    r.expect_done();
    return m;
  }
  friend bool operator==(const CommitMessage&, const CommitMessage&) = default;
};

struct TestOpening {
  std::vector<rtcf::DomainPoint> points;
  friend bool operator==(const TestOpening&, const TestOpening&) = default;
};
struct MeasureOpening {
  std::vector<Bits> d;
  friend bool operator==(const MeasureOpening&, const MeasureOpening&) = default;
};
using Opening = std::variant<TestOpening, MeasureOpening>;

// variant (u8: 0 test, 1 measure), count (u32), entry width (u8), entries packed.
// A test entry is b‖x with b in bit 0.
inline Bytes opening_bytes(const Opening& z) {
  ByteWriter w;
  if (const auto* t = std::get_if<TestOpening>(&z)) {
    w.u8(0);
    w.u32(static_cast<uint32_t>(t->points.size()));
    w.u8(static_cast<uint8_t>(t->points.empty() ? 0 : t->points[0].x.width + 1));
    for (const auto& p : t->points) w.bits(Bits(rtcf::domain_index(p.b, p.x), p.x.width + 1));
  } else {
    const auto& m = std::get<MeasureOpening>(z);
    w.u8(1);
    w.u32(static_cast<uint32_t>(m.d.size()));
    w.u8(static_cast<uint8_t>(m.d.empty() ? 0 : m.d[0].width));
    for (Bits d : m.d) w.bits(d);
  }
  return std::move(w).bytes();
}

inline Opening opening_from_bytes(const Bytes& b) {
  ByteReader r(b);
  uint8_t kind = r.u8();
  uint32_t n = r.u32();
  unsigned w = r.u8();
  if (kind > 1) throw ProtocolError("opening: unknown variant");
  if (w > 8 || (n > 0 && w < 2)) throw ProtocolError("opening: bad entry width");
  if (r.remaining() != static_cast<size_t>(n) * ((w + 7) / 8)) throw ProtocolError("opening: length mismatch");
  Opening out;
  if (kind == 0) {
    TestOpening t;
    for (uint32_t i = 0; i < n; ++i) {
      Bits e = r.bits(w);
      t.points.push_back({e[0], Bits(e.value >> 1, w - 1)});
    }
    out = std::move(t);
  } else {
    MeasureOpening m;
    for (uint32_t i = 0; i < n; ++i) m.d.push_back(r.bits(w));
    out = std::move(m);
  }
  r.expect_done();
  return out;
}

// Honest prover -----------------------------------------------------------

// Places qubit i of σ on B_i; every X_i starts in |0⟩.
inline qsim::PureState embed_input(const qsim::PureState& sigma, unsigned ell) {
  const size_t n = sigma.width();
  qsim::RegisterLayout l = z_layout(n, ell);
  qsim::Vector v(l.dimension(), qsim::cplx{0.0, 0.0});
  for (uint64_t w = 0; w < sigma.amplitudes().size(); ++w) {
    uint64_t idx = 0;
    for (size_t i = 0; i < n; ++i) idx |= ((w >> i) & 1U) << (i * (ell + 1));
    v[idx] = sigma[w];
  }
  return qsim::PureState(std::move(l), std::move(v), 1e-10);
}

inline void apply_x_hadamards(qsim::PureState& st, size_t n) {
  uint64_t mask = 0;
  for (size_t i = 0; i < n; ++i) {
    const auto& q = st.layout().qubits(z_reg(i));
    for (size_t k = 1; k < q.size(); ++k) mask |= uint64_t{1} << q[k];
  }
  qsim::kernel::apply_hadamards(st.data(), mask);
}

// Post-commit prover state for one outcome y, on the prover's registers (Z and any
// private registers).
struct CommitBranch {
  CommitMessage y;
  double probability;
  qsim::PureState state;
};

// Applies |z_i, y_i⟩ -> |z_i, y_i ⊕ f_i(z_i)⟩ on fresh Y registers and measures every
// Y_i. Only the Z registers are read, so each outcome y keeps the amplitudes with
// f_i(z_i) = y_i for all i; Y is never materialized.
inline std::vector<CommitBranch> oracle_branches(const qsim::PureState& pre, const std::vector<rtcf::PublicKey>& pks) {
  const size_t n = pks.size();
  std::vector<std::vector<unsigned>> zq(n);
  for (size_t i = 0; i < n; ++i) {
    zq[i] = pre.layout().qubits(z_reg(i));
    if (zq[i].size() != pks[i].ell() + 1u) throw std::invalid_argument("commit: Z register width differs from key ell");
  }
  const unsigned yw = pks.empty() ? 0 : pks[0].range_width();
  std::map<uint64_t, qsim::Vector> buckets;
  const qsim::Vector& a = pre.amplitudes();
  for (uint64_t idx = 0; idx < a.size(); ++idx) {
    if (a[idx] == qsim::cplx{0.0, 0.0}) continue;
    uint64_t y = 0;
    for (size_t i = 0; i < n; ++i) y |= uint64_t{pks[i].table()[qsim::gather_bits(idx, zq[i])]} << (i * yw);
    auto it = buckets.find(y);
    if (it == buckets.end()) it = buckets.emplace(y, qsim::Vector(a.size(), qsim::cplx{0.0, 0.0})).first;
    it->second[idx] = a[idx];
  }
  std::vector<CommitBranch> out;
  for (auto& [y, v] : buckets) {
    const double p = qsim::kernel::norm2(v);
    if (p <= 1e-15) continue;
    const double s = 1.0 / std::sqrt(p);
    for (qsim::cplx& x : v) x *= s;
    CommitMessage msg;
    for (size_t i = 0; i < n; ++i) msg.y.push_back(Bits(y >> (i * yw), yw));
    out.push_back({std::move(msg), p, qsim::PureState(pre.layout(), std::move(v), 1e-10)});
  }
  return out;
}

// Every outcome of the honest commit on σ with its probability and post-state.
inline std::vector<CommitBranch> commit_branches(const std::vector<rtcf::PublicKey>& pks, const qsim::PureState& sigma) {
  if (sigma.width() != pks.size()) throw std::invalid_argument("mp_commit: state width differs from N");
  const unsigned ell = pks.empty() ? 1 : pks[0].ell();
  qsim::PureState st = embed_input(sigma, ell);
  apply_x_hadamards(st, pks.size());
  return oracle_branches(st, pks);
}

template <class G>
const CommitBranch& pick_branch(const std::vector<CommitBranch>& branches, G& rng) {
  double u = uniform01(rng);
  double acc = 0.0;
  for (const auto& b : branches) {
    acc += b.probability;
    if (u < acc) return b;
  }
  return branches.back();
}

template <class G>
std::pair<CommitMessage, qsim::PureState> mp_commit(const MasterPublicKey& pk, const qsim::PureState& sigma, G& rng) {
  auto branches = commit_branches(public_slots(pk), sigma);
  const CommitBranch& b = pick_branch(branches, rng);
  return {b.y, b.state};
}

inline Opening opening_from_outcome(Bits outcome, unsigned c, size_t n, unsigned ell) {
  if (c == 0) {
    TestOpening t;
    for (size_t i = 0; i < n; ++i) {
      Bits z(outcome.value >> (i * (ell + 1)), ell + 1);
      t.points.push_back({z[0], Bits(z.value >> 1, ell)});
    }
    return t;
  }
  MeasureOpening m;
  for (size_t i = 0; i < n; ++i) m.d.push_back(Bits(outcome.value >> (i * (ell + 1)), ell + 1));
  return m;
}

// Distribution of the concatenated Z outcome: standard basis for c = 0, Hadamard for c = 1.
inline OutcomeDistribution opening_distribution(const qsim::PureState& st, unsigned c, size_t n) {
  const unsigned w = static_cast<unsigned>(st.layout().qubits(z_regs(n)).size());
  return qsim::measure_bases(st, z_regs(n), c ? Bits(~uint64_t{0}, w) : Bits(0, w));
}

template <class G>
Opening mp_open(const qsim::PureState& st, unsigned c, size_t n, unsigned ell, G& rng) {
  const unsigned w = static_cast<unsigned>(n * (ell + 1));
  Bits basis = c ? Bits(~uint64_t{0}, w) : Bits(0, w);
  Bits outcome = qsim::sample_measure(st, z_regs(n), basis, rng).first;
  return opening_from_outcome(outcome, c, n, ell);
}

// Verifier ------------------------------------------------------------------

inline bool mp_test(const std::vector<rtcf::PublicKey>& pks, const CommitMessage& y, const Opening& z) {
  const auto* t = std::get_if<TestOpening>(&z);
  if (!t) throw ProtocolError("mp_test: opening is not a test opening");
  if (t->points.size() != pks.size() || y.y.size() != pks.size()) throw ProtocolError("mp_test: slot count mismatch");
  for (size_t i = 0; i < pks.size(); ++i) {
    if (!rtcf::check(pks[i], t->points[i].b, t->points[i].x, y.y[i])) return false;
  }
  return true;
}
inline bool mp_test(const MasterPublicKey& pk, const CommitMessage& y, const Opening& z) { return mp_test(public_slots(pk), y, z); }

// Out for one slot. Returns nullopt when d ∉ Good, in which case the bit is a fresh coin.
inline std::optional<unsigned> out_bit(const rtcf::SecretKey& sk, unsigned h, Bits y, Bits d, const rtcf::GoodPredicate& good) {
  if (h == 0) {
    auto p = rtcf::invert_injective(sk, y);
    if (!p) throw ProtocolError("mp_out: inversion failed");
    return p->b;
  }
  auto claw = rtcf::invert_two_to_one(sk, y);
  if (!claw) throw ProtocolError("mp_out: inversion failed");
  if (d.width != sk.ell() + 1) throw ProtocolError("mp_out: equation has the wrong width");
  if (!rtcf::good(good, claw->x0, claw->x1, d)) return std::nullopt;
  return rtcf::hardcore_bit(claw->x0, claw->x1, d);
}

template <class G>
Bits mp_out(const std::vector<rtcf::SecretKey>& sks, const CommitMessage& y, const Opening& z, const BasisSpec& c, G& rng,
            const rtcf::GoodPredicate& good = rtcf::toy_good) {
  const auto* m = std::get_if<MeasureOpening>(&z);
  if (!m) throw ProtocolError("mp_out: opening is not a measurement opening");
  const size_t n = sks.size();
  if (m->d.size() != n || y.y.size() != n || c.size() != n) throw ProtocolError("mp_out: slot count mismatch");
  if (n > 64) throw std::length_error("mp_out: more than 64 slots");
  uint64_t out = 0;
  for (size_t i = 0; i < n; ++i) {
    std::optional<unsigned> b = out_bit(sks[i], c(i), y.y[i], m->d[i], good);
    unsigned bit = b ? *b : random_bit(rng);
    out |= uint64_t{bit} << i;
  }
  return Bits(out, static_cast<unsigned>(n));
}
template <class G>
Bits mp_out(const MasterSecretKey& sk, const CommitMessage& y, const Opening& z, const BasisSpec& c, G& rng,
            const rtcf::GoodPredicate& good = rtcf::toy_good) {
  std::vector<rtcf::SecretKey> sks;
  for (size_t i = 0; i < sk.size(); ++i) sks.push_back(sk.ext_sk(i));
  return mp_out(sks, y, z, c, rng, good);
}

// Exact verifier-side quantities -------------------------------------------

// Measurement-round unitary applied by the prover before the Hadamard-basis
// measurement, chosen from the public keys and its own commitment.
using AttackFn = std::function<qsim::Matrix(const std::vector<rtcf::PublicKey>&, const CommitMessage&)>;

// Accumulates the rejected mass so that a prover with no rejecting branch scores
// exactly 1.0 rather than a rounded sum of branch weights.
inline double test_acceptance(const std::vector<rtcf::PublicKey>& pks, const std::vector<CommitBranch>& branches) {
  const size_t n = pks.size();
  const unsigned ell = pks[0].ell();
  double rejected = 0.0;
  for (const auto& br : branches) {
    OutcomeDistribution d = opening_distribution(br.state, 0, n);
    for (uint64_t o = 0; o < d.size(); ++o) {
      if (d[o] <= 0.0) continue;
      Bits outcome(o, d.width());
      if (!mp_test(pks, br.y, opening_from_outcome(outcome, 0, n, ell))) rejected += br.probability * d[o];
    }
  }
  return 1.0 - rejected;
}

// Exact distribution of m = Out(sk, y, d) over commit branches, Hadamard outcomes and
// Good-fallback coins.
inline OutcomeDistribution output_distribution(const SlotKeys& keys, const BasisSpec& c,
                                               const std::vector<CommitBranch>& branches, const AttackFn& attack = {},
                                               const rtcf::GoodPredicate& good = rtcf::toy_good) {
  const size_t n = keys.size();
  const unsigned ell = keys.pk[0].ell();
  OutcomeDistribution out(static_cast<unsigned>(n));
  for (const auto& br : branches) {
    qsim::PureState st = br.state;
    if (attack) {
      std::vector<unsigned> all(st.width());
      for (unsigned q = 0; q < all.size(); ++q) all[q] = q;
      st.apply(attack(keys.pk, br.y), all);
    }
    OutcomeDistribution d = opening_distribution(st, 1, n);
    for (uint64_t o = 0; o < d.size(); ++o) {
      if (d[o] <= 0.0) continue;
      Opening z = opening_from_outcome(Bits(o, d.width()), 1, n, ell);
      const auto& eqs = std::get<MeasureOpening>(z).d;
      uint64_t fixed = 0;
      std::vector<unsigned> free;
      for (size_t i = 0; i < n; ++i) {
        std::optional<unsigned> b = out_bit(keys.sk[i], c(i), br.y.y[i], eqs[i], good);
        if (b) {
          fixed |= uint64_t{*b} << i;
        } else {
          free.push_back(static_cast<unsigned>(i));
        }
      }
      const double mass = br.probability * d[o] / static_cast<double>(uint64_t{1} << free.size());
      for (uint64_t coins = 0; coins < (uint64_t{1} << free.size()); ++coins) {
        out.add(fixed | qsim::scatter_bits(coins, free), mass);
      }
    }
  }
  return out;
}

// Transcript ----------------------------------------------------------------

inline Digest pk_digest(const MasterPublicKey& pk) { return sha256_tagged(tag::kTranscriptPk, pk.bytes()); }

struct Transcript {
  Digest pk_digest{};
  CommitMessage y;
  unsigned c = 0;
  Opening z;
  std::optional<bool> verdict;
  std::optional<Bits> m;

  std::vector<wire::Frame> frames() const {
    std::vector<wire::Frame> f;
    f.push_back({wire::tag::kPublicKey, Bytes(pk_digest.begin(), pk_digest.end())});
    f.push_back({wire::tag::kCommit, y.bytes()});
    f.push_back({wire::tag::kChallenge, Bytes{static_cast<uint8_t>(c)}});
    f.push_back({wire::tag::kOpening, opening_bytes(z)});
    ByteWriter r;
    if (c == 0) {
      r.u8(0);
      r.u8(verdict.value_or(false) ? 1 : 0);
    } else {
      r.u8(1);
      r.u32(m->width);
      r.bits(*m);
    }
    f.push_back({wire::tag::kResult, std::move(r).bytes()});
    return f;
  }
  Bytes bytes() const { return wire::encode_frames(frames()); }

  static Transcript from_bytes(const Bytes& b) {
    std::vector<wire::Frame> f = wire::decode_frames(b);
    const uint8_t expect[] = {wire::tag::kPublicKey, wire::tag::kCommit, wire::tag::kChallenge, wire::tag::kOpening,
                              wire::tag::kResult};
    if (f.size() != 5) throw ProtocolError("transcript: expected five frames");
    for (size_t i = 0; i < 5; ++i) {
      if (f[i].tag != expect[i]) throw ProtocolError("transcript: unexpected frame tag");
    }
    Transcript t;
    if (f[0].payload.size() != 32) throw ProtocolError("transcript: digest length");
    std::copy(f[0].payload.begin(), f[0].payload.end(), t.pk_digest.begin());
    t.y = CommitMessage::from_bytes(f[1].payload);
    if (f[2].payload.size() != 1 || f[2].payload[0] > 1) throw ProtocolError("transcript: challenge");
    t.c = f[2].payload[0];
    t.z = opening_from_bytes(f[3].payload);
    if (t.z.index() != t.c) throw ProtocolError("transcript: opening variant does not match challenge");
    ByteReader r(f[4].payload);
    uint8_t kind = r.u8();
    if (kind != t.c) throw ProtocolError("transcript: result kind does not match challenge");
    if (kind == 0) {
      uint8_t v = r.u8();
      if (v > 1) throw ProtocolError("transcript: verdict byte");
      t.verdict = v == 1;
    } else {
      uint32_t w = r.u32();
      if (w > 64) throw ProtocolError("transcript: output width");
      t.m = r.bits(w);
    }
    r.expect_done();
    return t;
  }
  friend bool operator==(const Transcript&, const Transcript&) = default;
};

// One honest session: Gen, Commit, a uniform challenge, Open, then Test or Out.
template <class G>
Transcript run_session(const ProtocolParams& p, const BasisSpec& c, const qsim::PureState& sigma, G& rng,
                       const rtcf::GoodPredicate& good = rtcf::toy_good) {
  MasterKeys keys = mp_gen(p, c, rng);
  auto [y, post] = mp_commit(keys.pk, sigma, rng);
  Transcript t;
  t.pk_digest = pk_digest(keys.pk);
  t.y = y;
  t.c = random_bit(rng);
  t.z = mp_open(post, t.c, p.n, p.ell, rng);
  if (t.c == 0) {
    t.verdict = mp_test(keys.pk, t.y, t.z);
  } else {
    t.m = mp_out(keys.sk, t.y, t.z, c, rng, good);
  }
  return t;
}

}  // namespace qverify::mproto
