#pragma once

// Compilers from the verifier-succinct delegation protocol to fully succinct
// arguments: v1 (hash commitments plus three AoK runs, 12 rounds) and v2 (FHE
// evaluation of the decision predicate, 8 rounds), and the Fiat-Shamir hash chain.
//
// The AoK and FHE back ends are interfaces. The bundled TransparentAok sends the
// witness in the clear and PlaintextFhe encrypts nothing; both are functional mocks
// with no succinctness or secrecy.

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qverify/common.hpp"
#include "qverify/delegate.hpp"
#include "qverify/hash.hpp"
#include "qverify/mproto.hpp"
#include "qverify/rng.hpp"
#include "qverify/wire.hpp"

namespace qverify::compile {

namespace tag {
inline constexpr uint8_t kPublicKey = 0x10;
inline constexpr uint8_t kHashKey = 0x11;
inline constexpr uint8_t kCommitDigest = 0x12;
inline constexpr uint8_t kAokFirst = 0x13;
inline constexpr uint8_t kAokChallenge = 0x14;
inline constexpr uint8_t kAokResponse = 0x15;
inline constexpr uint8_t kChallenge = 0x16;
inline constexpr uint8_t kOpeningDigest = 0x17;
inline constexpr uint8_t kCoins = 0x18;
inline constexpr uint8_t kFhePublicKey = 0x19;
inline constexpr uint8_t kVerifierCiphertext = 0x1A;
inline constexpr uint8_t kProverCiphertext = 0x1B;
inline constexpr uint8_t kVerdict = 0x1C;
inline constexpr uint8_t kFsChallenge = 0x1D;
inline constexpr uint8_t kFsProverMessage = 0x1E;
}  // namespace tag

inline bool is_aok_tag(uint8_t t) { return t == tag::kAokFirst || t == tag::kAokChallenge || t == tag::kAokResponse; }

inline Bytes to_bytes(const Digest& d) { return Bytes(d.begin(), d.end()); }

// Hash ----------------------------------------------------------------------

// SHA-256 over (domain tag, key, length-prefixed message). The hash-commit family is
// keyed by the verifier; the random oracle uses its own tag and a zero key.
struct HashFn {
  Digest key{};
  uint8_t domain = qverify::tag::kHashCommit;

  Digest operator()(const Bytes& msg) const { return Sha256().byte(domain).update(key).block(msg).finish(); }

  static HashFn sample(Rng& rng) { return {random_digest(rng), qverify::tag::kHashCommit}; }
  static HashFn oracle() { return {Digest{}, qverify::tag::kRandomOracle}; }
};

// Argument of knowledge -----------------------------------------------------

enum class Relation : uint8_t { hash_preimage = 0x01, decision = 0x02, evaluation = 0x03 };

// The relation check closes over the public inputs; `pub` is their encoding, bound
// into the transcript.
struct AokStatement {
  Relation relation = Relation::hash_preimage;
  Bytes pub;
  std::function<bool(const Bytes& witness)> holds;
};

// Four-message shape; the first verifier message is supplied by the surrounding
// protocol and is not part of the transcript.
struct AokTranscript {
  Bytes m2;
  Bytes m3;
  Bytes m4;
};

struct AokProverOracle {
  std::function<Bytes()> first;
  std::function<Bytes(const Bytes& m3)> respond;
};

class AokScheme {
 public:
  virtual ~AokScheme() = default;
  virtual const char* name() const = 0;
  virtual Bytes prove_first(const AokStatement& st, const Bytes& witness) const = 0;
  virtual Bytes challenge(Rng& rng) const = 0;
  virtual Bytes prove_second(const AokStatement& st, const Bytes& witness, const Bytes& m2, const Bytes& m3) const = 0;
  virtual bool verify(const AokStatement& st, const AokTranscript& t) const = 0;
  // Runs the prover oracle and returns an accepting-or-not transcript with a witness.
  virtual std::pair<AokTranscript, Bytes> extract(const AokStatement& st, const AokProverOracle& prover, double epsilon,
                                                  Rng& rng) const = 0;
};

// m2 is the witness itself, m3 a 32-byte coin string, m4 a hash binding the statement,
// m2 and m3. Extraction reads m2 and leaves the prover untouched, so ε = 0.
class TransparentAok final : public AokScheme {
 public:
  const char* name() const override { return "transparent"; }
  Bytes prove_first(const AokStatement&, const Bytes& witness) const override { return witness; }
  Bytes challenge(Rng& rng) const override { return to_bytes(random_digest(rng)); }
  Bytes prove_second(const AokStatement& st, const Bytes&, const Bytes& m2, const Bytes& m3) const override {
    return to_bytes(response(st, m2, m3));
  }
  bool verify(const AokStatement& st, const AokTranscript& t) const override {
    if (t.m3.size() != 32 || t.m4.size() != 32) return false;
    if (Bytes(t.m4) != to_bytes(response(st, t.m2, t.m3))) return false;
    return st.holds && st.holds(t.m2);
  }
  std::pair<AokTranscript, Bytes> extract(const AokStatement&, const AokProverOracle& prover, double epsilon,
                                          Rng& rng) const override {
    if (epsilon < 0.0) throw std::invalid_argument("extract: epsilon must be nonnegative");
    AokTranscript t;
    t.m2 = prover.first();
    t.m3 = challenge(rng);
    t.m4 = prover.respond(t.m3);
    return {t, t.m2};
  }

 private:
  static Digest response(const AokStatement& st, const Bytes& m2, const Bytes& m3) {
    return Sha256()
        .byte(qverify::tag::kAokResponse)
        .byte(static_cast<uint8_t>(st.relation))
        .block(st.pub)
        .block(m2)
        .block(m3)
        .finish();
  }
};

// Runs one AoK in-process, with an honest prover and verifier.
inline AokTranscript aok_prove(const AokScheme& aok, const AokStatement& st, const Bytes& witness, Rng& rng) {
  AokTranscript t;
  t.m2 = aok.prove_first(st, witness);
  t.m3 = aok.challenge(rng);
  t.m4 = aok.prove_second(st, witness, t.m2, t.m3);
  return t;
}

// FHE -------------------------------------------------------------------------

struct FheKeyPair {
  Bytes pk;
  Bytes sk;
};

// A circuit is identified by a digest; evaluation records it in the ciphertext so that
// evaluating a different circuit is visible even when the outputs agree.
struct FheCircuit {
  Digest id{};
  std::function<Bytes(const Bytes&)> f;
};

class FheScheme {
 public:
  virtual ~FheScheme() = default;
  virtual const char* name() const = 0;
  virtual FheKeyPair gen(Rng& rng) const = 0;
  virtual Bytes enc(const Bytes& pk, const Bytes& m) const = 0;
  virtual Bytes dec(const Bytes& sk, const Bytes& ct) const = 0;
  virtual Bytes eval(const Bytes& pk, const FheCircuit& c, const Bytes& ct) const = 0;
};

// ct = 0xC7, pk (32), evaluation history (32), length-prefixed plaintext.
class PlaintextFhe final : public FheScheme {
 public:
  const char* name() const override { return "plaintext"; }
  FheKeyPair gen(Rng& rng) const override {
    Bytes sk = to_bytes(random_digest(rng));
    return {public_of(sk), sk};
  }
  Bytes enc(const Bytes& pk, const Bytes& m) const override { return make(pk, Digest{}, m); }
  Bytes dec(const Bytes& sk, const Bytes& ct) const override {
    Parsed p = parse(ct);
    if (p.pk != public_of(sk)) throw ProtocolError("fhe: ciphertext under a different key");
    return p.m;
  }
  Bytes eval(const Bytes& pk, const FheCircuit& c, const Bytes& ct) const override {
    Parsed p = parse(ct);
    if (p.pk != pk) throw ProtocolError("fhe: ciphertext under a different key");
    const Digest h = Sha256().byte(qverify::tag::kFhe).byte(0x02).update(p.history).update(c.id).finish();
    return make(pk, h, c.f(p.m));
  }

 private:
  struct Parsed {
    Bytes pk;
    Digest history{};
    Bytes m;
  };
  static constexpr uint8_t kMagic = 0xC7;
  static Bytes public_of(const Bytes& sk) {
    if (sk.size() != 32) throw ProtocolError("fhe: secret key length");
    return to_bytes(Sha256().byte(qverify::tag::kFhe).byte(0x01).update(sk).finish());
  }
  static Bytes make(const Bytes& pk, const Digest& history, const Bytes& m) {
    if (pk.size() != 32) throw ProtocolError("fhe: public key length");
    ByteWriter w;
    w.u8(kMagic);
    w.raw(pk);
    w.raw(history);
    w.block(m);
    return std::move(w).bytes();
  }
  static Parsed parse(const Bytes& ct) {
    ByteReader r(ct);
    if (r.u8() != kMagic) throw ProtocolError("fhe: not a ciphertext");
    Parsed p;
    p.pk = r.raw(32);
    Bytes h = r.raw(32);
    std::copy(h.begin(), h.end(), p.history.begin());
    p.m = r.block();
    r.expect_done();
    return p;
  }
};

// Underlying verifier-succinct protocol ----------------------------------

inline Bytes instance_bytes(const delegate::StabilizerCheckInstance& inst) {
  ByteWriter w;
  w.u8(static_cast<uint8_t>(inst.ell_proof));
  w.u32(static_cast<uint32_t>(inst.checks.size()));
  for (const auto& c : inst.checks) {
    w.u8(c.kind == delegate::CheckKind::X ? 'X' : 'Z');
    w.u64(c.support);
    w.u8(static_cast<uint8_t>(c.parity));
  }
  return std::move(w).bytes();
}

// The delegation protocol as (V1, V2, V) over verifier coins r. V1 and V2 read only r
// and the proof width, never the instance or prover messages.
struct SemiSuccinct {
  delegate::StabilizerCheckInstance inst;
  delegate::DelegationParams params;

  Rng coins(const Digest& r, std::string_view domain) const {
    return Rng(Sha256().byte(qverify::tag::kCoinDerive).update(r).block(domain).finish());
  }
  batchkeys::BasisSpec basis(const Digest& r) const {
    Rng g = coins(r, "basis");
    return delegate::basis_from_prf(random_digest(g), inst.ell_proof);
  }
  batchkeys::MasterKeys v1(const Digest& r) const {
    Rng g = coins(r, "gen");
    return mproto::mp_gen(delegate::protocol_params(inst, params), basis(r), g);
  }
  unsigned v2(const Digest& r) const {
    Rng g = coins(r, "challenge");
    return random_bit(g);
  }
  // V(x, y, β, z, r). Malformed messages reject.
  bool decide(const Bytes& y, unsigned beta, const Bytes& z, const Digest& r) const {
    if (beta > 1) return false;
    mproto::CommitMessage ym;
    mproto::Opening zm;
    try {
      ym = mproto::CommitMessage::from_bytes(y);
      zm = mproto::opening_from_bytes(z);
    } catch (const ProtocolError&) {
      return false;
    }
    if (zm.index() != beta) return false;
    const mproto::SlotKeys keys = mproto::slot_keys(v1(r));
    Rng out = coins(r, "out");
    return delegate::verifier_decide(inst, keys, batchkeys::BasisSpec::truth_table(basis(r).table()), ym, beta, zm, out);
  }
};

// Compiled-prover behaviour. The honest prover leaves every option unset.
struct CompiledProver {
  delegate::DelegationProver base = delegate::DelegationProver::honest();
  // Proves knowledge of a different opening than the one committed in ẑ.
  bool substitute_z = false;
  // v2: evaluates the constant-accept predicate instead of V(x, y, β, z, ·).
  bool wrong_predicate = false;
};

// The underlying prover's state across the compiled rounds.
class UnderlyingProver {
 public:
  UnderlyingProver(const SemiSuccinct& scheme, const delegate::DelegationProver& base) : scheme_(scheme), base_(base) {}

  Bytes commit(const batchkeys::MasterPublicKey& pk, Rng& rng) {
    auto [y, post] = delegate::prover_commit(base_, scheme_.inst, mproto::public_slots(pk), rng);
    post_ = std::move(post);
    y_ = y.bytes();
    return y_;
  }
  Bytes open(unsigned beta, Rng& rng) {
    if (!post_) throw std::logic_error("UnderlyingProver: open before commit");
    const mproto::ProtocolParams p = delegate::protocol_params(scheme_.inst, scheme_.params);
    z_ = mproto::opening_bytes(delegate::prover_open(base_, *post_, beta, p.n, p.ell, rng));
    return z_;
  }
  const Bytes& y() const { return y_; }
  const Bytes& z() const { return z_; }

 private:
  const SemiSuccinct& scheme_;
  delegate::DelegationProver base_;
  std::optional<qsim::PureState> post_;
  Bytes y_;
  Bytes z_;
};

// An opening of the other variant than z, with the same slot count.
inline Bytes substitute_opening(const Bytes& z) {
  mproto::Opening o = mproto::opening_from_bytes(z);
  if (auto* m = std::get_if<mproto::MeasureOpening>(&o)) {
    m->d[0].value ^= 1;
  } else {
    auto& t = std::get<mproto::TestOpening>(o);
    t.points[0].x.value ^= 1;
  }
  return mproto::opening_bytes(o);
}

// Relations -------------------------------------------------------------------

inline Bytes pair_witness(const Bytes& w1, const Bytes& w2) {
  ByteWriter w;
  w.block(w1);
  w.block(w2);
  return std::move(w).bytes();
}
inline std::optional<std::pair<Bytes, Bytes>> split_witness(const Bytes& w) {
  try {
    ByteReader r(w);
    Bytes a = r.block();
    Bytes b = r.block();
    r.expect_done();
    return std::make_pair(std::move(a), std::move(b));
  } catch (const ProtocolError&) {
    return std::nullopt;
  }
}

inline bool check_relation_H(const HashFn& h, const Digest& sigma, const Bytes& w) { return h(w) == sigma; }

inline bool check_relation_V(const SemiSuccinct& scheme, const HashFn& h, const Digest& yhat, const Digest& zhat,
                             const Digest& r, const Bytes& w1, const Bytes& w2) {
  return h(w1) == yhat && h(w2) == zhat && scheme.decide(w1, scheme.v2(r), w2, r);
}

// The circuit V(x, y, β, z, ·) evaluated on the verifier's coins.
inline FheCircuit decision_circuit(const SemiSuccinct& scheme, const Bytes& y, unsigned beta, const Bytes& z) {
  FheCircuit c;
  c.id = Sha256().byte(qverify::tag::kFhe).byte(0x03).block(instance_bytes(scheme.inst)).block(y).u32(beta).block(z).finish();
  c.f = [&scheme, y, beta, z](const Bytes& coins) {
    if (coins.size() != 32) return Bytes{0};
    Digest r{};
    std::copy(coins.begin(), coins.end(), r.begin());
    return Bytes{static_cast<uint8_t>(scheme.decide(y, beta, z, r) ? 1 : 0)};
  };
  return c;
}
inline FheCircuit accept_circuit() {
  return {Sha256().byte(qverify::tag::kFhe).byte(0x04).finish(), [](const Bytes&) { return Bytes{1}; }};
}

inline bool check_relation_E(const SemiSuccinct& scheme, const FheScheme& fhe, const HashFn& h, const Digest& yhat,
                             const Digest& zhat, unsigned beta, const Bytes& fhe_pk, const Bytes& ct_v, const Bytes& ct_p,
                             const Bytes& w1, const Bytes& w2) {
  if (h(w1) != yhat || h(w2) != zhat) return false;
  try {
    return fhe.eval(fhe_pk, decision_circuit(scheme, w1, beta, w2), ct_v) == ct_p;
  } catch (const ProtocolError&) {
    return false;
  }
}

inline AokStatement statement_H(const HashFn& h, const Digest& sigma) {
  ByteWriter w;
  w.raw(h.key);
  w.raw(sigma);
  return {Relation::hash_preimage, std::move(w).bytes(), [h, sigma](const Bytes& wit) { return check_relation_H(h, sigma, wit); }};
}

inline AokStatement statement_V(const SemiSuccinct& scheme, const HashFn& h, const Digest& yhat, const Digest& zhat,
                                const Digest& r) {
  const Bytes x = instance_bytes(scheme.inst);
  ByteWriter w;
  w.block(x);
  w.raw(h.key);
  w.raw(yhat);
  w.raw(zhat);
  w.raw(r);
  return {Relation::decision, std::move(w).bytes(), [&scheme, h, yhat, zhat, r](const Bytes& wit) {
            auto p = split_witness(wit);
            return p && check_relation_V(scheme, h, yhat, zhat, r, p->first, p->second);
          }};
}

inline AokStatement statement_E(const SemiSuccinct& scheme, const FheScheme& fhe, const HashFn& h, const Digest& yhat,
                                const Digest& zhat, unsigned beta, const Bytes& fhe_pk, const Bytes& ct_v,
                                const Bytes& ct_p) {
  ByteWriter w;
  w.block(instance_bytes(scheme.inst));
  w.raw(h.key);
  w.raw(yhat);
  w.raw(zhat);
  w.u8(static_cast<uint8_t>(beta));
  w.block(fhe_pk);
  w.block(ct_v);
  w.block(ct_p);
  return {Relation::evaluation, std::move(w).bytes(), [&scheme, &fhe, h, yhat, zhat, beta, fhe_pk, ct_v, ct_p](const Bytes& wit) {
            auto p = split_witness(wit);
            return p && check_relation_E(scheme, fhe, h, yhat, zhat, beta, fhe_pk, ct_v, ct_p, p->first, p->second);
          }};
}

// Transcript --------------------------------------------------------------

enum class Role : uint8_t { verifier = 0, prover = 1 };

struct Message {
  unsigned round = 0;
  Role role = Role::verifier;
  uint8_t tag = 0;
  Bytes payload;
  friend bool operator==(const Message&, const Message&) = default;
};

// Every message as a frame whose payload is (round u8, role u8, body), then a verdict
// frame. Odd rounds are verifier rounds.
struct CompiledTranscript {
  unsigned version = 1;
  std::vector<Message> messages;
  bool verdict = false;
  std::string reason;

  unsigned rounds() const { return messages.empty() ? 0 : messages.back().round; }

  const Message* find(uint8_t t, size_t occurrence = 0) const {
    for (const auto& m : messages) {
      if (m.tag == t && occurrence-- == 0) return &m;
    }
    return nullptr;
  }

  size_t role_bytes(Role role, bool include_aok = true) const {
    size_t n = 0;
    for (const auto& m : messages) {
      if (m.role == role && (include_aok || !is_aok_tag(m.tag))) n += m.payload.size();
    }
    return n;
  }

  Bytes bytes() const {
    std::vector<wire::Frame> f;
    for (const auto& m : messages) {
      ByteWriter w;
      w.u8(static_cast<uint8_t>(m.round));
      w.u8(static_cast<uint8_t>(m.role));
      w.raw(m.payload);
      f.push_back({m.tag, std::move(w).bytes()});
    }
    f.push_back({tag::kVerdict, Bytes{static_cast<uint8_t>(version), static_cast<uint8_t>(verdict ? 1 : 0)}});
    return wire::encode_frames(f);
  }

  static CompiledTranscript from_bytes(const Bytes& b) {
    std::vector<wire::Frame> f = wire::decode_frames(b);
    if (f.empty() || f.back().tag != tag::kVerdict || f.back().payload.size() != 2) {
      throw ProtocolError("compiled transcript: missing verdict frame");
    }
    CompiledTranscript t;
    t.version = f.back().payload[0];
    if (t.version != 1 && t.version != 2) throw ProtocolError("compiled transcript: unknown version");
    if (f.back().payload[1] > 1) throw ProtocolError("compiled transcript: verdict byte");
    t.verdict = f.back().payload[1] == 1;
    unsigned last = 0;
    for (size_t i = 0; i + 1 < f.size(); ++i) {
      if (f[i].tag < tag::kPublicKey || f[i].tag > tag::kFsProverMessage || f[i].tag == tag::kVerdict) {
        throw ProtocolError("compiled transcript: unexpected frame tag");
      }
      if (f[i].payload.size() < 2) throw ProtocolError("compiled transcript: short frame");
      Message m;
      m.round = f[i].payload[0];
      if (f[i].payload[1] > 1) throw ProtocolError("compiled transcript: role byte");
      m.role = static_cast<Role>(f[i].payload[1]);
      if (m.round < last || m.round > last + 1 || m.round == 0) throw ProtocolError("compiled transcript: round order");
      if ((m.round % 2 == 1) != (m.role == Role::verifier)) throw ProtocolError("compiled transcript: role does not match round");
      last = m.round;
      m.tag = f[i].tag;
      m.payload.assign(f[i].payload.begin() + 2, f[i].payload.end());
      t.messages.push_back(std::move(m));
    }
    return t;
  }
};

// Delivers each message to its receiver; a tampering channel may rewrite it.
using Channel = std::function<void(Message&)>;

struct RunOptions {
  Channel channel;
  // v2: the verifier encrypts these coins in place of r.
  std::optional<Digest> encrypted_coins;
};

namespace detail {

class Session {
 public:
  Session(unsigned version, const RunOptions& opt) : opt_(opt) { t_.version = version; }

  const Bytes& send(unsigned round, Role role, uint8_t tag, Bytes payload) {
    Message m{round, role, tag, std::move(payload)};
    if (opt_.channel) opt_.channel(m);
    t_.messages.push_back(std::move(m));
    return t_.messages.back().payload;
  }
  CompiledTranscript finish(bool verdict, std::string reason) {
    t_.verdict = verdict;
    t_.reason = std::move(reason);
    return std::move(t_);
  }

 private:
  const RunOptions& opt_;
  CompiledTranscript t_;
};

inline std::optional<Digest> as_digest(const Bytes& b) {
  if (b.size() != 32) return std::nullopt;
  Digest d{};
  std::copy(b.begin(), b.end(), d.begin());
  return d;
}
inline std::optional<unsigned> as_bit(const Bytes& b) {
  if (b.size() != 1 || b[0] > 1) return std::nullopt;
  return b[0];
}

}  // namespace detail

// v1: pk+h | ŷ, AoK(R_H) | β | ẑ, AoK(R_H) | r | AoK(R_V). The hash key doubles as each
// AoK's first verifier message, so the three AoK runs add three rounds each.
inline CompiledTranscript compile_v1_run(const SemiSuccinct& scheme, const AokScheme& aok, const CompiledProver& prover,
                                         Rng& rng, const RunOptions& opt = {}) {
  using detail::as_bit;
  using detail::as_digest;
  detail::Session s(1, opt);
  // Verifier coins and first message.
  const Digest r = random_digest(rng);
  const HashFn h = HashFn::sample(rng);
  const batchkeys::MasterKeys keys = scheme.v1(r);
  s.send(1, Role::verifier, tag::kPublicKey, keys.pk.bytes());
  const Bytes h_key = s.send(1, Role::verifier, tag::kHashKey, to_bytes(h.key));
  auto pk_key = as_digest(h_key);
  if (!pk_key) return s.finish(false, "prover: malformed hash key");
  const HashFn hp{*pk_key, qverify::tag::kHashCommit};

  UnderlyingProver under(scheme, prover.base);
  Rng prng = rng.fork("prover", 1);
  const Bytes y = under.commit(keys.pk, prng);
  const Digest yhat = hp(y);
  const AokStatement p_st1 = statement_H(hp, yhat);
  AokTranscript a1;
  a1.m2 = aok.prove_first(p_st1, y);
  const Bytes v_yhat = s.send(2, Role::prover, tag::kCommitDigest, to_bytes(yhat));
  const Bytes v_a1m2 = s.send(2, Role::prover, tag::kAokFirst, a1.m2);
  const Bytes a1m3 = s.send(3, Role::verifier, tag::kAokChallenge, aok.challenge(rng));
  const Bytes v_a1m4 = s.send(4, Role::prover, tag::kAokResponse, aok.prove_second(p_st1, y, a1.m2, a1m3));
  auto vy = as_digest(v_yhat);
  if (!vy) return s.finish(false, "malformed commitment digest");
  if (!aok.verify(statement_H(h, *vy), {v_a1m2, a1m3, v_a1m4})) return s.finish(false, "AoK 1 rejected");

  const Bytes beta_msg = s.send(5, Role::verifier, tag::kChallenge, Bytes{static_cast<uint8_t>(scheme.v2(r))});
  auto pbeta = as_bit(beta_msg);
  if (!pbeta) return s.finish(false, "prover: malformed challenge");
  const Bytes z = under.open(*pbeta, prng);
  const Bytes z_w = prover.substitute_z ? substitute_opening(z) : z;
  const Digest zhat = hp(z);
  const AokStatement p_st2 = statement_H(hp, zhat);
  const Bytes a2m2 = aok.prove_first(p_st2, z);
  const Bytes v_zhat = s.send(6, Role::prover, tag::kOpeningDigest, to_bytes(zhat));
  const Bytes v_a2m2 = s.send(6, Role::prover, tag::kAokFirst, a2m2);
  const Bytes a2m3 = s.send(7, Role::verifier, tag::kAokChallenge, aok.challenge(rng));
  const Bytes v_a2m4 = s.send(8, Role::prover, tag::kAokResponse, aok.prove_second(p_st2, z, a2m2, a2m3));
  auto vz = as_digest(v_zhat);
  if (!vz) return s.finish(false, "malformed opening digest");
  if (!aok.verify(statement_H(h, *vz), {v_a2m2, a2m3, v_a2m4})) return s.finish(false, "AoK 2 rejected");

  const Bytes r_msg = s.send(9, Role::verifier, tag::kCoins, to_bytes(r));
  auto pr = as_digest(r_msg);
  if (!pr) return s.finish(false, "prover: malformed coins");
  const AokStatement p_st3 = statement_V(scheme, hp, yhat, zhat, *pr);
  const Bytes w3 = pair_witness(y, z_w);
  const Bytes a3m2 = aok.prove_first(p_st3, w3);
  const Bytes v_a3m2 = s.send(10, Role::prover, tag::kAokFirst, a3m2);
  const Bytes a3m3 = s.send(11, Role::verifier, tag::kAokChallenge, aok.challenge(rng));
  const Bytes v_a3m4 = s.send(12, Role::prover, tag::kAokResponse, aok.prove_second(p_st3, w3, a3m2, a3m3));
  if (!aok.verify(statement_V(scheme, h, *vy, *vz, r), {v_a3m2, a3m3, v_a3m4})) return s.finish(false, "AoK 3 rejected");
  return s.finish(true, "");
}

// v2 ----------------------------------------------------------------------------

// The verifier's first message and the secrets it keeps.
struct V2Setup {
  Digest r{};
  HashFn h;
  batchkeys::MasterKeys keys;
  FheKeyPair fhe_keys;
  Bytes ct_v;

  // pk, h, FHE pk, ct_V as frames; the Fiat-Shamir s0.
  Bytes first_message() const {
    return wire::encode_frames({{tag::kPublicKey, keys.pk.bytes()},
                                {tag::kHashKey, to_bytes(h.key)},
                                {tag::kFhePublicKey, fhe_keys.pk},
                                {tag::kVerifierCiphertext, ct_v}});
  }
};

inline V2Setup v2_setup(const SemiSuccinct& scheme, const FheScheme& fhe, Rng& rng, const RunOptions& opt = {}) {
  V2Setup v;
  v.r = random_digest(rng);
  v.h = HashFn::sample(rng);
  v.keys = scheme.v1(v.r);
  v.fhe_keys = fhe.gen(rng);
  v.ct_v = fhe.enc(v.fhe_keys.pk, to_bytes(opt.encrypted_coins.value_or(v.r)));
  return v;
}

// Prover messages of v2, in order: t0 = (ŷ, AoK1.m2), t1 = AoK1.m4,
// t2 = (ẑ, ct_P, AoK2.m2), t3 = AoK2.m4.
class V2Prover {
 public:
  V2Prover(const SemiSuccinct& scheme, const AokScheme& aok, const FheScheme& fhe, const CompiledProver& prover,
           Rng prng)
      : scheme_(scheme), aok_(aok), fhe_(fhe), prover_(prover), under_(scheme, prover.base), rng_(std::move(prng)) {}

  // Receives pk, the hash key, the FHE key and ct_V.
  void receive_setup(const batchkeys::MasterPublicKey& pk, const HashFn& h, Bytes fhe_pk, Bytes ct_v) {
    pk_ = &pk;
    h_ = h;
    fhe_pk_ = std::move(fhe_pk);
    ct_v_ = std::move(ct_v);
  }
  std::pair<Digest, Bytes> t0() {
    const Bytes y = under_.commit(*pk_, rng_);
    yhat_ = h_(y);
    st1_ = statement_H(h_, yhat_);
    m2_1_ = aok_.prove_first(st1_, y);
    return {yhat_, m2_1_};
  }
  Bytes t1(const Bytes& m3) { return aok_.prove_second(st1_, under_.y(), m2_1_, m3); }
  struct T2 {
    Digest zhat;
    Bytes ct_p;
    Bytes m2;
  };
  T2 t2(unsigned beta) {
    const Bytes z = under_.open(beta, rng_);
    const Bytes z_w = prover_.substitute_z ? substitute_opening(z) : z;
    zhat_ = h_(z);
    FheCircuit c = prover_.wrong_predicate ? accept_circuit() : decision_circuit(scheme_, under_.y(), beta, z);
    Bytes ct_p;
    try {
      ct_p = fhe_.eval(fhe_pk_, c, ct_v_);
    } catch (const ProtocolError&) {
      ct_p.clear();
    }
    st2_ = statement_E(scheme_, fhe_, h_, yhat_, zhat_, beta, fhe_pk_, ct_v_, ct_p);
    w2_ = pair_witness(under_.y(), z_w);
    m2_2_ = aok_.prove_first(st2_, w2_);
    return {zhat_, ct_p, m2_2_};
  }
  Bytes t3(const Bytes& m3) { return aok_.prove_second(st2_, w2_, m2_2_, m3); }

 private:
  const SemiSuccinct& scheme_;
  const AokScheme& aok_;
  const FheScheme& fhe_;
  CompiledProver prover_;
  UnderlyingProver under_;
  Rng rng_;
  const batchkeys::MasterPublicKey* pk_ = nullptr;
  HashFn h_;
  Bytes fhe_pk_;
  Bytes ct_v_;
  Digest yhat_{};
  Digest zhat_{};
  AokStatement st1_;
  AokStatement st2_;
  Bytes m2_1_;
  Bytes m2_2_;
  Bytes w2_;
};

// The verifier's final predicate on the v2 messages.
inline std::pair<bool, std::string> v2_decide(const SemiSuccinct& scheme, const AokScheme& aok, const FheScheme& fhe,
                                              const V2Setup& v, const Bytes& yhat, const Bytes& a1m2, const Bytes& a1m3,
                                              const Bytes& a1m4, unsigned beta, const Bytes& zhat, const Bytes& ct_p,
                                              const Bytes& a2m2, const Bytes& a2m3, const Bytes& a2m4) {
  auto vy = detail::as_digest(yhat);
  auto vz = detail::as_digest(zhat);
  if (!vy || !vz) return {false, "malformed digest"};
  if (!aok.verify(statement_H(v.h, *vy), {a1m2, a1m3, a1m4})) return {false, "AoK 1 rejected"};
  if (!aok.verify(statement_E(scheme, fhe, v.h, *vy, *vz, beta, v.fhe_keys.pk, v.ct_v, ct_p), {a2m2, a2m3, a2m4})) {
    return {false, "AoK 2 rejected"};
  }
  try {
    if (fhe.dec(v.fhe_keys.sk, ct_p) != Bytes{1}) return {false, "decrypted verdict is not 1"};
  } catch (const ProtocolError&) {
    return {false, "undecryptable verdict"};
  }
  return {true, ""};
}

// v2: pk, h, FHE.pk, Enc(r) | ŷ, AoK(R_H) | β | ẑ, ct_P, AoK(R_E) ; accept iff both AoK
// runs verify and Dec(ct_P) = 1. β is a fresh public coin.
inline CompiledTranscript compile_v2_run(const SemiSuccinct& scheme, const AokScheme& aok, const FheScheme& fhe,
                                         const CompiledProver& prover, Rng& rng, const RunOptions& opt = {}) {
  detail::Session s(2, opt);
  const V2Setup v = v2_setup(scheme, fhe, rng, opt);
  s.send(1, Role::verifier, tag::kPublicKey, v.keys.pk.bytes());
  const Bytes h_key = s.send(1, Role::verifier, tag::kHashKey, to_bytes(v.h.key));
  const Bytes fpk = s.send(1, Role::verifier, tag::kFhePublicKey, v.fhe_keys.pk);
  const Bytes ctv = s.send(1, Role::verifier, tag::kVerifierCiphertext, v.ct_v);
  auto hk = detail::as_digest(h_key);
  if (!hk) return s.finish(false, "prover: malformed hash key");

  V2Prover p(scheme, aok, fhe, prover, rng.fork("prover", 2));
  p.receive_setup(v.keys.pk, HashFn{*hk, qverify::tag::kHashCommit}, fpk, ctv);
  auto [yhat, a1m2] = p.t0();
  const Bytes v_yhat = s.send(2, Role::prover, tag::kCommitDigest, to_bytes(yhat));
  const Bytes v_a1m2 = s.send(2, Role::prover, tag::kAokFirst, a1m2);
  const Bytes a1m3 = s.send(3, Role::verifier, tag::kAokChallenge, aok.challenge(rng));
  const Bytes v_a1m4 = s.send(4, Role::prover, tag::kAokResponse, p.t1(a1m3));
  auto vy = detail::as_digest(v_yhat);
  if (!vy || !aok.verify(statement_H(v.h, *vy), {v_a1m2, a1m3, v_a1m4})) return s.finish(false, "AoK 1 rejected");

  const unsigned beta = random_bit(rng);
  const Bytes beta_msg = s.send(5, Role::verifier, tag::kChallenge, Bytes{static_cast<uint8_t>(beta)});
  auto pbeta = detail::as_bit(beta_msg);
  if (!pbeta) return s.finish(false, "prover: malformed challenge");
  V2Prover::T2 t2 = p.t2(*pbeta);
  const Bytes v_zhat = s.send(6, Role::prover, tag::kOpeningDigest, to_bytes(t2.zhat));
  const Bytes v_ctp = s.send(6, Role::prover, tag::kProverCiphertext, t2.ct_p);
  const Bytes v_a2m2 = s.send(6, Role::prover, tag::kAokFirst, t2.m2);
  const Bytes a2m3 = s.send(7, Role::verifier, tag::kAokChallenge, aok.challenge(rng));
  const Bytes v_a2m4 = s.send(8, Role::prover, tag::kAokResponse, p.t3(a2m3));
  auto [ok, why] = v2_decide(scheme, aok, fhe, v, v_yhat, v_a1m2, a1m3, v_a1m4, beta, v_zhat, v_ctp, v_a2m2, a2m3, v_a2m4);
  return s.finish(ok, why);
}

// Size accounting ---------------------------------------------------------

struct RoundSize {
  unsigned round = 0;
  Role role = Role::verifier;
  size_t bytes = 0;
  size_t aok_bytes = 0;
};

inline std::vector<RoundSize> size_report(const CompiledTranscript& t) {
  std::vector<RoundSize> out;
  for (const auto& m : t.messages) {
    if (out.empty() || out.back().round != m.round) out.push_back({m.round, m.role, 0, 0});
    out.back().bytes += m.payload.size();
    if (is_aok_tag(m.tag)) out.back().aok_bytes += m.payload.size();
  }
  return out;
}

// Fiat-Shamir ---------------------------------------------------------------

// s1 = H(0, (x, s0), (0, t0)); s_i = H(1, s_{i-1}, (i-1, t_{i-1})) for i in [2, c].
inline Digest fs_first(const HashFn& ro, const Bytes& x, const Bytes& s0, const Bytes& t0) {
  ByteWriter w;
  w.u8(0);
  w.block(x);
  w.block(s0);
  w.u64(0);
  w.block(t0);
  return ro(std::move(w).bytes());
}
inline Digest fs_next(const HashFn& ro, const Digest& prev, uint64_t index, const Bytes& t) {
  ByteWriter w;
  w.u8(1);
  w.raw(prev);
  w.u64(index);
  w.block(t);
  return ro(std::move(w).bytes());
}

// s holds s_1..s_c, t holds t_0..t_c.
struct FsProof {
  std::vector<Digest> s;
  std::vector<Bytes> t;

  Bytes bytes() const {
    std::vector<wire::Frame> f;
    for (size_t i = 0; i < t.size(); ++i) {
      if (i > 0) f.push_back({tag::kFsChallenge, to_bytes(s[i - 1])});
      f.push_back({tag::kFsProverMessage, t[i]});
    }
    return wire::encode_frames(f);
  }
  static FsProof from_bytes(const Bytes& b) {
    std::vector<wire::Frame> f = wire::decode_frames(b);
    FsProof p;
    for (size_t i = 0; i < f.size(); ++i) {
      const uint8_t want = i % 2 == 0 ? tag::kFsProverMessage : tag::kFsChallenge;
      if (f[i].tag != want) throw ProtocolError("fs proof: unexpected frame tag");
      if (want == tag::kFsProverMessage) {
        p.t.push_back(f[i].payload);
      } else {
        auto d = detail::as_digest(f[i].payload);
        if (!d) throw ProtocolError("fs proof: challenge length");
        p.s.push_back(*d);
      }
    }
    if (p.t.empty()) throw ProtocolError("fs proof: empty");
    return p;
  }
  friend bool operator==(const FsProof&, const FsProof&) = default;
};

// A public-coin protocol after s0: the prover maps (i, s_i) to t_i, with s_0 handed over
// as bytes; c is the number of challenges after s0.
struct PublicCoinProver {
  size_t c = 0;
  std::function<Bytes(size_t i, const Bytes& s_i)> step;
};

inline FsProof fs_prove(const HashFn& ro, const Bytes& x, const Bytes& s0, const PublicCoinProver& p) {
  FsProof out;
  out.t.push_back(p.step(0, s0));
  Digest s = fs_first(ro, x, s0, out.t[0]);
  for (size_t i = 1; i <= p.c; ++i) {
    out.s.push_back(s);
    out.t.push_back(p.step(i, to_bytes(s)));
    if (i < p.c) s = fs_next(ro, s, i, out.t[i]);
  }
  return out;
}

// Recomputes the chain; then runs the final predicate on the proof.
inline bool fs_verify(const HashFn& ro, const Bytes& x, const Bytes& s0, size_t c, const FsProof& proof,
                      const std::function<bool(const FsProof&)>& predicate) {
  if (proof.s.size() != c || proof.t.size() != c + 1) return false;
  Digest s = fs_first(ro, x, s0, proof.t[0]);
  for (size_t i = 1; i <= c; ++i) {
    if (proof.s[i - 1] != s) return false;
    if (i < c) s = fs_next(ro, s, i, proof.t[i]);
  }
  return predicate(proof);
}

// v2 under the transform: s1 and s3 are the AoK challenges and β is the low bit of s2.
inline constexpr size_t kV2Challenges = 3;

inline unsigned fs_beta(const Bytes& s2) { return s2.empty() ? 0 : s2[0] & 1U; }

struct FsRun {
  V2Setup setup;
  Bytes x;
  Bytes s0;
  FsProof proof;
};

inline FsRun fs_v2_prove(const SemiSuccinct& scheme, const AokScheme& aok, const FheScheme& fhe,
                         const CompiledProver& prover, Rng& rng, const HashFn& ro = HashFn::oracle()) {
  FsRun run{v2_setup(scheme, fhe, rng), instance_bytes(scheme.inst), {}, {}};
  run.s0 = run.setup.first_message();
  V2Prover p(scheme, aok, fhe, prover, rng.fork("prover", 3));
  p.receive_setup(run.setup.keys.pk, run.setup.h, run.setup.fhe_keys.pk, run.setup.ct_v);
  PublicCoinProver pc{kV2Challenges, [&p](size_t i, const Bytes& s_i) -> Bytes {
                        switch (i) {
                          case 0: {
                            auto [yhat, m2] = p.t0();
                            return wire::encode_frames({{tag::kCommitDigest, to_bytes(yhat)}, {tag::kAokFirst, m2}});
                          }
                          case 1:
                            return wire::encode_frames({{tag::kAokResponse, p.t1(s_i)}});
                          case 2: {
                            V2Prover::T2 t2 = p.t2(fs_beta(s_i));
                            return wire::encode_frames({{tag::kOpeningDigest, to_bytes(t2.zhat)},
                                                        {tag::kProverCiphertext, t2.ct_p},
                                                        {tag::kAokFirst, t2.m2}});
                          }
                          default:
                            return wire::encode_frames({{tag::kAokResponse, p.t3(s_i)}});
                        }
                      }};
  run.proof = fs_prove(ro, run.x, run.s0, pc);
  return run;
}

inline std::optional<std::vector<Bytes>> fs_fields(const Bytes& t, std::initializer_list<uint8_t> tags) {
  try {
    std::vector<wire::Frame> f = wire::decode_frames(t);
    if (f.size() != tags.size()) return std::nullopt;
    std::vector<Bytes> out;
    size_t i = 0;
    for (uint8_t want : tags) {
      if (f[i].tag != want) return std::nullopt;
      out.push_back(std::move(f[i].payload));
      ++i;
    }
    return out;
  } catch (const ProtocolError&) {
    return std::nullopt;
  }
}

inline bool fs_v2_verify(const SemiSuccinct& scheme, const AokScheme& aok, const FheScheme& fhe, const V2Setup& setup,
                         const FsProof& proof, const HashFn& ro = HashFn::oracle()) {
  const Bytes x = instance_bytes(scheme.inst);
  return fs_verify(ro, x, setup.first_message(), kV2Challenges, proof, [&](const FsProof& p) {
    auto t0 = fs_fields(p.t[0], {tag::kCommitDigest, tag::kAokFirst});
    auto t1 = fs_fields(p.t[1], {tag::kAokResponse});
    auto t2 = fs_fields(p.t[2], {tag::kOpeningDigest, tag::kProverCiphertext, tag::kAokFirst});
    auto t3 = fs_fields(p.t[3], {tag::kAokResponse});
    if (!t0 || !t1 || !t2 || !t3) return false;
    return v2_decide(scheme, aok, fhe, setup, (*t0)[0], (*t0)[1], to_bytes(p.s[0]), (*t1)[0], fs_beta(to_bytes(p.s[1])),
                     (*t2)[0], (*t2)[1], (*t2)[2], to_bytes(p.s[2]), (*t3)[0])
        .first;
  });
}

}  // namespace qverify::compile
