#pragma once

// Soundness machinery as executable objects: the malicious prover model, protocol
// observables X_i/Z_i, Samp, the distributions D_Out / D_2to1 / D_h / D_Ext, the
// teleportation extractor, the hybrid chain, and the extracted-state identity.
//
// The prover Hilbert space H is Z0..Z{N-1}, an optional private register "I", and one
// ancilla qubit U<i> per slot. Outcome strings are N bits wide: bit i is u_i for
// slots in R (h_i = 1) and v_i for slots in S (h_i = 0). Strings indexed by R or S
// list those slots in increasing order.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qverify/batchkeys.hpp"
#include "qverify/common.hpp"
#include "qverify/distribution.hpp"
#include "qverify/mproto.hpp"
#include "qverify/qsim.hpp"
#include "qverify/rtcf.hpp"

namespace qverify::extract {

using mproto::AttackFn;
using mproto::CommitBranch;
using mproto::CommitMessage;
using mproto::SlotKeys;
using qsim::cplx;
using qsim::Matrix;
using qsim::PureState;
using qsim::RegisterLayout;

inline constexpr const char* kPrivate = "I";

inline std::string u_reg(size_t i) { return "U" + std::to_string(i); }

// Prover ------------------------------------------------------------------

// In-place commit step on Z⊗I, run before the function oracle; it may depend on the keys.
using CommitFn = std::function<void(const std::vector<rtcf::PublicKey>&, PureState&)>;

struct MaliciousProver {
  PureState initial;
  CommitFn commit;
  AttackFn attack;

  size_t n() const {
    size_t k = 0;
    while (initial.layout().contains(mproto::z_reg(k))) ++k;
    return k;
  }
  unsigned ell() const { return initial.layout().at(mproto::z_reg(0)).width - 1; }
};

// Layout must be Z0..Z{N-1} of equal width, optionally followed by I.
inline void check_prover(const MaliciousProver& p) {
  const auto& regs = p.initial.layout().registers();
  const size_t n = p.n();
  if (n == 0) throw std::invalid_argument("prover: no Z registers");
  const unsigned w = p.ell() + 1;
  rtcf::check_ell(w - 1);
  for (size_t i = 0; i < n; ++i) {
    if (regs[i].name != mproto::z_reg(i) || regs[i].width != w) throw std::invalid_argument("prover: malformed Z registers");
  }
  if (regs.size() > n + 1 || (regs.size() == n + 1 && regs[n].name != kPrivate)) {
    throw std::invalid_argument("prover: only a private register I may follow Z");
  }
}

inline MaliciousProver honest_prover(const PureState& sigma, unsigned ell) {
  return MaliciousProver{mproto::embed_input(sigma, ell),
                         [](const std::vector<rtcf::PublicKey>& pks, PureState& st) { mproto::apply_x_hadamards(st, pks.size()); },
                         {}};
}

// Random initial state on Z⊗I, a Haar commit unitary, and a Haar attack unitary
// composed with σ_x on Z0 selected by y_0.
template <class G>
MaliciousProver random_prover(size_t n, unsigned ell, unsigned private_width, G& rng) {
  RegisterLayout l = mproto::z_layout(n, ell);
  if (private_width > 0) l.push(kPrivate, private_width);
  const uint64_t dim = l.dimension();
  Matrix commit_u = qsim::random_unitary(dim, rng);
  Matrix attack_u = qsim::random_unitary(dim, rng);
  PureState init = qsim::random_state(l, rng);
  const unsigned zw = ell + 1;
  return MaliciousProver{
      std::move(init),
      [commit_u](const std::vector<rtcf::PublicKey>&, PureState& st) {
        std::vector<unsigned> all(st.width());
        for (unsigned q = 0; q < all.size(); ++q) all[q] = q;
        st.apply(commit_u, all);
      },
      [attack_u, zw](const std::vector<rtcf::PublicKey>&, const CommitMessage& y) {
        Matrix flip = Matrix::Identity(attack_u.rows(), attack_u.cols());
        const uint64_t mask = y.y.at(0).value & ((uint64_t{1} << zw) - 1);
        for (int64_t i = 0; i < flip.rows(); ++i) {
          flip.col(i).setZero();
          flip(static_cast<int64_t>(static_cast<uint64_t>(i) ^ mask), i) = 1.0;
        }
        return Matrix(attack_u * flip);
      }};
}

inline std::vector<CommitBranch> commit_branches(const MaliciousProver& p, const std::vector<rtcf::PublicKey>& pks) {
  check_prover(p);
  if (pks.size() != p.n()) throw std::invalid_argument("prover: key count differs from N");
  PureState st = p.initial;
  if (p.commit) p.commit(pks, st);
  return mproto::oracle_branches(st, pks);
}

// Test-round openings are the identity map on the committed state.
inline double test_pass_probability(const MaliciousProver& p, const std::vector<rtcf::PublicKey>& pks) {
  return mproto::test_acceptance(pks, commit_branches(p, pks));
}

template <class G>
SlotKeys sample_keys(size_t n, unsigned ell, const batchkeys::BasisSpec& c, batchkeys::Backend backend, G& rng) {
  return mproto::slot_keys(mproto::mp_gen(mproto::ProtocolParams{n, ell, backend, 0}, c, rng));
}

// SimGen: every slot in two-to-one mode.
template <class G>
SlotKeys sim_gen(size_t n, unsigned ell, batchkeys::Backend backend, G& rng) {
  return sample_keys(n, ell, batchkeys::BasisSpec::constant(n, 1), backend, rng);
}

// Bases ---------------------------------------------------------------------

struct BasisSplit {
  std::vector<unsigned> r;  // Hadamard slots
  std::vector<unsigned> s;  // standard slots
  unsigned n = 0;

  explicit BasisSplit(Bits h) : n(h.width) {
    for (unsigned i = 0; i < h.width; ++i) (h[i] ? r : s).push_back(i);
  }
  Bits join(Bits u, Bits v) const {
    if (u.width != r.size() || v.width != s.size()) throw std::invalid_argument("BasisSplit: length mismatch");
    return Bits(qsim::scatter_bits(u.value, r) | qsim::scatter_bits(v.value, s), n);
  }
  Bits u_of(Bits m) const { return Bits(qsim::gather_bits(m.value, r), static_cast<unsigned>(r.size())); }
  Bits v_of(Bits m) const { return Bits(qsim::gather_bits(m.value, s), static_cast<unsigned>(s.size())); }
  // Lifts a string over `positions` to an N-bit slot mask.
  Bits lift(Bits sub, const std::vector<unsigned>& positions) const { return Bits(qsim::scatter_bits(sub.value, positions), n); }
};

// Observables -------------------------------------------------------------

struct ObservableSet {
  RegisterLayout layout;
  std::vector<qsim::BinaryObservable> x;
  std::vector<qsim::BinaryObservable> z;
  size_t n() const { return x.size(); }
};

// σ_x / σ_z on the qubits of an N-qubit register "Q".
inline ObservableSet genuine_paulis(size_t n) {
  RegisterLayout l;
  l.push("Q", static_cast<unsigned>(n));
  ObservableSet o{l, {}, {}};
  for (size_t i = 0; i < n; ++i) {
    o.x.push_back(qsim::pauli_parity(l, qsim::PauliKind::x, Bits::unit(static_cast<unsigned>(i), static_cast<unsigned>(n)), "Q"));
    o.z.push_back(qsim::pauli_parity(l, qsim::PauliKind::z, Bits::unit(static_cast<unsigned>(i), static_cast<unsigned>(n)), "Q"));
  }
  return o;
}

inline RegisterLayout with_ancillas(const RegisterLayout& prover, size_t n) {
  RegisterLayout u;
  for (size_t i = 0; i < n; ++i) u.push(u_reg(i), 1);
  return prover.concat(u);
}

// X_i = U† (H_{Z_i} ⊗ H_{U_i}) X'_i (H_{Z_i} ⊗ H_{U_i}) U, where X'_i is the phase
// (-1)^{d·(1, x0⊕x1)} on Good d and (-1)^{u_i} otherwise. Z_i = σ_z on B_i.
inline ObservableSet protocol_observables(const SlotKeys& keys, const CommitMessage& y, const RegisterLayout& prover_layout,
                                          const std::optional<Matrix>& attack, const rtcf::GoodPredicate& good = rtcf::toy_good) {
  const size_t n = keys.size();
  RegisterLayout h = with_ancillas(prover_layout, n);
  const unsigned pw = prover_layout.total_width();
  std::vector<unsigned> pq(pw);
  for (unsigned q = 0; q < pw; ++q) pq[q] = q;
  std::optional<Matrix> u, udag;
  if (attack) {
    if (static_cast<uint64_t>(attack->rows()) != prover_layout.dimension()) throw std::invalid_argument("observables: attack size");
    if (!qsim::is_unitary(*attack)) throw std::invalid_argument("observables: attack is not unitary");
    u = *attack;
    udag = Matrix(attack->adjoint());
  }
  ObservableSet o{h, {}, {}};
  for (size_t i = 0; i < n; ++i) {
    if (keys.sk[i].mode() != rtcf::Mode::two_to_one) throw std::invalid_argument("observables: X_i needs a two-to-one key");
    auto claw = rtcf::invert_two_to_one(keys.sk[i], y.y.at(i));
    if (!claw) throw ProtocolError("observables: commitment outside the image");
    const std::vector<unsigned> zq = h.qubits(mproto::z_reg(i));
    const unsigned uq = h.qubits(u_reg(i))[0];
    const unsigned zw = static_cast<unsigned>(zq.size());
    // sign[d]: 0/1 phase bit for Good d; 2 marks d ∉ Good (phase from U_i).
    std::vector<uint8_t> sign(size_t{1} << zw);
    for (uint64_t d = 0; d < sign.size(); ++d) {
      Bits dd(d, zw);
      sign[d] = rtcf::good(good, claw->x0, claw->x1, dd) ? static_cast<uint8_t>(rtcf::hardcore_bit(claw->x0, claw->x1, dd)) : 2;
    }
    const uint64_t hmask = qsim::mask_of(zq) | (uint64_t{1} << uq);
    o.x.emplace_back(qsim::Operator(h, [=](std::span<cplx> v) {
      if (u) qsim::kernel::apply_matrix(v, pq, *u);
      qsim::kernel::apply_hadamards(v, hmask);
      for (uint64_t idx = 0; idx < v.size(); ++idx) {
        const uint8_t s = sign[qsim::gather_bits(idx, zq)];
        const bool flip = s == 2 ? ((idx >> uq) & 1U) : s;
        if (flip) v[idx] = -v[idx];
      }
      qsim::kernel::apply_hadamards(v, hmask);
      if (udag) qsim::kernel::apply_matrix(v, pq, *udag);
    }));
    o.z.push_back(qsim::pauli_parity(h, qsim::PauliKind::z, Bits::unit(0, zw), mproto::z_reg(i)));
  }
  return o;
}

// X(mask) = ∏ X_i^{mask_i}; Z(mask) likewise. mask has width N.
inline qsim::BinaryObservable parity_obs(const ObservableSet& set, qsim::PauliKind kind, Bits mask) {
  if (mask.width != set.n()) throw std::invalid_argument("parity_obs: mask length differs from N");
  const auto& ops = kind == qsim::PauliKind::x ? set.x : set.z;
  qsim::Operator acc = qsim::Operator::identity(set.layout);
  for (unsigned i = 0; i < mask.width; ++i) {
    if (mask[i]) acc = ops[i].op() * acc;
  }
  return qsim::BinaryObservable(std::move(acc));
}

// Π_w = E_{w'} (-1)^{w·w'} P(w') over the slots in `positions`, with P the X or Z parity.
inline qsim::Operator proj(const ObservableSet& set, qsim::PauliKind kind, const std::vector<unsigned>& positions, Bits outcome) {
  if (outcome.width != positions.size()) throw std::invalid_argument("proj: outcome length differs from the slot set");
  std::vector<qsim::BinaryObservable> terms;
  const uint64_t count = uint64_t{1} << positions.size();
  for (uint64_t w = 0; w < count; ++w) {
    terms.push_back(parity_obs(set, kind, Bits(qsim::scatter_bits(w, positions), static_cast<unsigned>(set.n()))));
  }
  return qsim::Operator(set.layout, [terms, outcome, count](std::span<cplx> v) {
    qsim::Vector acc(v.size(), cplx{0.0, 0.0});
    qsim::Vector w(v.size());
    for (uint64_t k = 0; k < count; ++k) {
      std::copy(v.begin(), v.end(), w.begin());
      terms[k].apply(w);
      const double c = (dot(Bits(k, outcome.width), outcome) ? -1.0 : 1.0) / static_cast<double>(count);
      for (size_t i = 0; i < w.size(); ++i) acc[i] += c * w[i];
    }
    std::copy(acc.begin(), acc.end(), v.begin());
  });
}

// Samp ------------------------------------------------------------------------

struct Sample {
  ObservableSet obs;
  PureState psi;  // prover state ⊗ |0⟩_U
  CommitMessage y;
  double probability;
};

// Every y-branch of Samp for fixed two-to-one keys, weighted by its probability.
inline std::vector<Sample> samp_branches(const MaliciousProver& p, const SlotKeys& keys, const rtcf::GoodPredicate& good = rtcf::toy_good) {
  std::vector<Sample> out;
  const size_t n = p.n();
  RegisterLayout ul;
  for (size_t i = 0; i < n; ++i) ul.push(u_reg(i), 1);
  for (auto& br : commit_branches(p, keys.pk)) {
    std::optional<Matrix> u;
    if (p.attack) u = p.attack(keys.pk, br.y);
    ObservableSet obs = protocol_observables(keys, br.y, br.state.layout(), u, good);
    PureState psi = br.state.tensor(qsim::alloc(ul));
    out.push_back({std::move(obs), std::move(psi), br.y, br.probability});
  }
  return out;
}

template <class G>
Sample samp(const MaliciousProver& p, batchkeys::Backend backend, G& rng, const rtcf::GoodPredicate& good = rtcf::toy_good) {
  SlotKeys keys = sim_gen(p.n(), p.ell(), backend, rng);
  auto all = samp_branches(p, keys, good);
  double u = uniform01(rng), acc = 0.0;
  for (auto& s : all) {
    acc += s.probability;
    if (u < acc) return std::move(s);
  }
  return std::move(all.back());
}

// Operational distributions -----------------------------------------------

// D_Out: the protocol verifier's output with keys sampled in mode C.
inline OutcomeDistribution dist_out(const MaliciousProver& p, const SlotKeys& keys, const batchkeys::BasisSpec& c,
                                    const rtcf::GoodPredicate& good = rtcf::toy_good) {
  return mproto::output_distribution(keys, c, commit_branches(p, keys.pk), p.attack, good);
}

// Measure B_i for i ∈ S, apply the attack, measure Z in the Hadamard basis, and for
// i ∈ R output the hardcore bit of d_i or a fair coin if d_i ∉ Good. With all keys
// two-to-one this is D_2to1; with keys of mode h it is D_h.
inline OutcomeDistribution dist_measured(const MaliciousProver& p, const SlotKeys& keys, Bits h,
                                         const rtcf::GoodPredicate& good = rtcf::toy_good) {
  const size_t n = p.n();
  if (h.width != n) throw std::invalid_argument("dist: basis length differs from N");
  BasisSplit split(h);
  OutcomeDistribution out(static_cast<unsigned>(n));
  for (const auto& br : commit_branches(p, keys.pk)) {
    const RegisterLayout& l = br.state.layout();
    std::vector<unsigned> bq, all(l.total_width());
    std::vector<std::vector<unsigned>> zq(n);
    for (size_t i = 0; i < n; ++i) {
      zq[i] = l.qubits(mproto::z_reg(i));
      bq.push_back(zq[i][0]);
    }
    for (unsigned q = 0; q < all.size(); ++q) all[q] = q;
    std::vector<std::optional<rtcf::Claw>> claws(n);
    for (unsigned i : split.r) {
      claws[i] = rtcf::invert_two_to_one(keys.sk[i], br.y.y[i]);
      if (!claws[i]) throw ProtocolError("dist: commitment outside the image");
    }
    Matrix u;
    if (p.attack) u = p.attack(keys.pk, br.y);
    uint64_t zmask = 0;
    for (const auto& q : zq) zmask |= qsim::mask_of(q);
    for (uint64_t v = 0; v < (uint64_t{1} << split.s.size()); ++v) {
      qsim::Vector a = br.state.amplitudes();
      for (uint64_t idx = 0; idx < a.size(); ++idx) {
        for (size_t k = 0; k < split.s.size(); ++k) {
          if (((idx >> bq[split.s[k]]) & 1U) != ((v >> k) & 1U)) {
            a[idx] = 0.0;
            break;
          }
        }
      }
      if (p.attack) qsim::kernel::apply_matrix(a, all, u);
      qsim::kernel::apply_hadamards(a, zmask);
      for (uint64_t idx = 0; idx < a.size(); ++idx) {
        const double mass = br.probability * std::norm(a[idx]);
        if (mass == 0.0) continue;
        uint64_t fixed = 0;
        std::vector<unsigned> free;
        for (size_t k = 0; k < split.r.size(); ++k) {
          const unsigned i = split.r[k];
          Bits d(qsim::gather_bits(idx, zq[i]), static_cast<unsigned>(zq[i].size()));
          if (rtcf::good(good, claws[i]->x0, claws[i]->x1, d)) {
            fixed |= uint64_t{rtcf::hardcore_bit(claws[i]->x0, claws[i]->x1, d)} << k;
          } else {
            free.push_back(static_cast<unsigned>(k));
          }
        }
        const double share = mass / static_cast<double>(uint64_t{1} << free.size());
        for (uint64_t coins = 0; coins < (uint64_t{1} << free.size()); ++coins) {
          Bits ub(fixed | qsim::scatter_bits(coins, free), static_cast<unsigned>(split.r.size()));
          out.add(split.join(ub, Bits(v, static_cast<unsigned>(split.s.size()))).value, share);
        }
      }
    }
  }
  return out;
}

inline OutcomeDistribution dist_two_to_one(const MaliciousProver& p, const SlotKeys& two_to_one_keys, Bits h,
                                           const rtcf::GoodPredicate& good = rtcf::toy_good) {
  for (const auto& sk : two_to_one_keys.sk) {
    if (sk.mode() != rtcf::Mode::two_to_one) throw std::invalid_argument("dist_two_to_one: keys must be two-to-one");
  }
  return dist_measured(p, two_to_one_keys, h, good);
}

inline OutcomeDistribution dist_h(const MaliciousProver& p, const SlotKeys& mode_h_keys, Bits h,
                                  const rtcf::GoodPredicate& good = rtcf::toy_good) {
  for (size_t i = 0; i < mode_h_keys.size(); ++i) {
    if (mode_h_keys.sk[i].mode() != rtcf::mode_from_bit(h[static_cast<unsigned>(i)])) {
      throw std::invalid_argument("dist_h: key modes differ from h");
    }
  }
  return dist_measured(p, mode_h_keys, h, good);
}

// Extractor -----------------------------------------------------------------

// Layout [H, A1, A2, W] with W = (r: low N qubits, s: high N qubits).
//  1. A1A2 ← |φ⁺⟩^N, W ← H^{2N}|0⟩.
//  2. Per W = (r, s): X(r)Z(s) on H and σ_x(r)σ_z(s) on A1.
//  3. XOR the Bell outcome of each (A1_i, A2_i) into W via V† · CNOT · V, where V
//     maps (σ_x^a σ_z^b ⊗ Id)|φ⁺⟩ to |b⟩_{A1}|a⟩_{A2} up to phase.
//  4. Keep A2.
inline qsim::MixedState extractor(const ObservableSet& set, const PureState& psi) {
  if (!(psi.layout() == set.layout)) throw std::invalid_argument("extractor: state layout differs from the observables");
  const unsigned n = static_cast<unsigned>(set.n());
  const unsigned hw = set.layout.total_width();
  if (hw + 4 * n > qsim::kMaxQubits) throw std::length_error("extractor: registers exceed 26 qubits");
  RegisterLayout extra;
  extra.push("A1", n);
  extra.push("A2", n);
  extra.push("W", 2 * n);
  PureState st = psi.tensor(qsim::alloc(extra));
  const unsigned a1 = hw, a2 = hw + n, w0 = hw + 2 * n;
  auto bit = [](uint64_t idx, unsigned q) { return (idx >> q) & 1U; };
  auto cnots = [&](const std::vector<std::pair<unsigned, unsigned>>& pairs) {
    qsim::kernel::apply_permutation(st.data(), [pairs, bit](uint64_t idx) {
      for (auto [c, t] : pairs) idx ^= uint64_t{bit(idx, c)} << t;
      return idx;
    });
  };
  const uint64_t a1mask = ((uint64_t{1} << n) - 1) << a1;
  std::vector<std::pair<unsigned, unsigned>> bell_pairs, xor_pairs;
  for (unsigned i = 0; i < n; ++i) {
    bell_pairs.push_back({a1 + i, a2 + i});
    xor_pairs.push_back({a2 + i, w0 + i});
    xor_pairs.push_back({a1 + i, w0 + n + i});
  }
  // Step 1.
  qsim::kernel::apply_hadamards(st.data(), a1mask);
  cnots(bell_pairs);
  qsim::kernel::apply_hadamards(st.data(), ((uint64_t{1} << (2 * n)) - 1) << w0);
  // Step 2.
  const uint64_t chunk = uint64_t{1} << w0;
  std::span<cplx> all = st.data();
  for (uint64_t w = 0; w < (uint64_t{1} << (2 * n)); ++w) {
    const Bits r(w, n), s(w >> n, n);
    std::span<cplx> block = all.subspan(w * chunk, chunk);
    if (s.value) {
      parity_obs(set, qsim::PauliKind::z, s).op().apply_lowest(block);
      qsim::kernel::apply_z_mask(block, s.value << a1);
    }
    if (r.value) {
      parity_obs(set, qsim::PauliKind::x, r).op().apply_lowest(block);
      qsim::kernel::apply_x_mask(block, r.value << a1);
    }
  }
  // Step 3.
  cnots(bell_pairs);
  qsim::kernel::apply_hadamards(st.data(), a1mask);
  cnots(xor_pairs);
  qsim::kernel::apply_hadamards(st.data(), a1mask);
  cnots(bell_pairs);
  return qsim::trace_out(st, {"A2"});
}

// Dense σ_x / σ_z projectors on N qubits: Π_w = E_{w'} (-1)^{w·w'} σ(w') over `positions`.
inline Matrix pauli_projector(unsigned n, qsim::PauliKind kind, const std::vector<unsigned>& positions, Bits outcome) {
  const int64_t dim = int64_t{1} << n;
  Matrix acc = Matrix::Zero(dim, dim);
  const uint64_t count = uint64_t{1} << positions.size();
  for (uint64_t w = 0; w < count; ++w) {
    const uint64_t mask = qsim::scatter_bits(w, positions);
    const double c = (dot(Bits(w, outcome.width), outcome) ? -1.0 : 1.0) / static_cast<double>(count);
    for (int64_t col = 0; col < dim; ++col) {
      const uint64_t x = static_cast<uint64_t>(col);
      if (kind == qsim::PauliKind::x) {
        acc(static_cast<int64_t>(x ^ mask), col) += c;
      } else {
        acc(col, col) += c * (parity64(x & mask) ? -1.0 : 1.0);
      }
    }
  }
  return acc;
}

// ⟨ψ|Π^Z_v A Π^Z_v|ψ⟩ helpers -------------------------------------------------

inline qsim::Vector applied(const qsim::Operator& op, qsim::Vector v) {
  op.apply(v);
  return v;
}

// E_{u'} ⟨ψ|Π^Z_v Z(u'_mask) Π^X_{u ⊕ u'_mask} Z(u'_mask) Π^Z_v|ψ⟩ where u'_mask keeps the
// first `prefix` entries of u' ∈ {0,1}^R and `extra` is XORed into the projector label.
inline double twirled_mass(const ObservableSet& set, const PureState& psi, const BasisSplit& split, Bits u, Bits v,
                           unsigned prefix, std::optional<unsigned> z_insert = {}, unsigned b = 0) {
  const unsigned rn = static_cast<unsigned>(split.r.size());
  qsim::Vector pv = applied(proj(set, qsim::PauliKind::z, split.s, v), psi.amplitudes());
  double total = 0.0;
  const uint64_t count = uint64_t{1} << prefix;
  for (uint64_t up = 0; up < count; ++up) {
    Bits mask_r(up, rn);
    qsim::Vector w = applied(parity_obs(set, qsim::PauliKind::z, split.lift(mask_r, split.r)).op(), pv);
    Bits label = u ^ mask_r;
    if (z_insert && b) {
      w = applied(set.z[split.r[*z_insert]].op(), std::move(w));
      label = label ^ Bits::unit(*z_insert, rn);
    }
    qsim::Vector pw = applied(proj(set, qsim::PauliKind::x, split.r, label), w);
    total += qsim::kernel::norm2(pw);
  }
  return total / static_cast<double>(count);
}

// Probability-mass forms ----------------------------------------------------

inline OutcomeDistribution pmf_two_to_one(const std::vector<Sample>& samples, Bits h) {
  BasisSplit split(h);
  OutcomeDistribution out(h.width);
  for (const auto& smp : samples) {
    for (uint64_t m = 0; m < out.size(); ++m) {
      Bits mb(m, h.width);
      qsim::Vector pv = applied(proj(smp.obs, qsim::PauliKind::z, split.s, split.v_of(mb)), smp.psi.amplitudes());
      qsim::Vector px = applied(proj(smp.obs, qsim::PauliKind::x, split.r, split.u_of(mb)), pv);
      out.add(m, smp.probability * std::real(qsim::kernel::inner(pv, px)));
    }
  }
  return out;
}

inline OutcomeDistribution pmf_ext(const std::vector<Sample>& samples, Bits h) {
  BasisSplit split(h);
  const unsigned rn = static_cast<unsigned>(split.r.size());
  OutcomeDistribution out(h.width);
  for (const auto& smp : samples) {
    for (uint64_t m = 0; m < out.size(); ++m) {
      Bits mb(m, h.width);
      qsim::Vector pv = applied(proj(smp.obs, qsim::PauliKind::z, split.s, split.v_of(mb)), smp.psi.amplitudes());
      double acc = 0.0;
      for (uint64_t up = 0; up < (uint64_t{1} << rn); ++up) {
        Bits upb(up, rn);
        qsim::Vector w = applied(parity_obs(smp.obs, qsim::PauliKind::z, split.lift(upb, split.r)).op(), pv);
        qsim::Vector px = applied(proj(smp.obs, qsim::PauliKind::x, split.r, upb ^ split.u_of(mb)), w);
        acc += std::real(qsim::kernel::inner(w, px));
      }
      out.add(m, smp.probability * acc / static_cast<double>(uint64_t{1} << rn));
    }
  }
  return out;
}

// Hyb_j, j ∈ 0..|R|.
inline OutcomeDistribution hybrid(const std::vector<Sample>& samples, Bits h, unsigned j) {
  BasisSplit split(h);
  if (j > split.r.size()) throw std::out_of_range("hybrid: j exceeds |R|");
  OutcomeDistribution out(h.width);
  for (const auto& smp : samples) {
    for (uint64_t m = 0; m < out.size(); ++m) {
      Bits mb(m, h.width);
      out.add(m, smp.probability * twirled_mass(smp.obs, smp.psi, split, split.u_of(mb), split.v_of(mb), j));
    }
  }
  return out;
}

// Hyb_{j,b}, j ∈ 1..|R|: Z_j^b inserted inside the first j−1 twirls and e_j XORed into the label.
inline OutcomeDistribution hybrid_b(const std::vector<Sample>& samples, Bits h, unsigned j, unsigned b) {
  BasisSplit split(h);
  if (j == 0 || j > split.r.size()) throw std::out_of_range("hybrid_b: j outside 1..|R|");
  OutcomeDistribution out(h.width);
  for (const auto& smp : samples) {
    for (uint64_t m = 0; m < out.size(); ++m) {
      Bits mb(m, h.width);
      out.add(m, smp.probability * twirled_mass(smp.obs, smp.psi, split, split.u_of(mb), split.v_of(mb), j - 1, j - 1, b));
    }
  }
  return out;
}

inline OutcomeDistribution dist_ext(const std::vector<Sample>& samples, Bits h) {
  OutcomeDistribution out(h.width);
  for (const auto& smp : samples) out.accumulate(qsim::measure_bases(extractor(smp.obs, smp.psi), "A2", h), smp.probability);
  return out;
}

// Extracted-state identity: lhs = Tr(Π^{σx}_u Π^{σz}_v τ),
// rhs = E_{u'} ⟨ψ|Π^Z_v Z(u') Π^X_{u'⊕u} Z(u') Π^Z_v|ψ⟩.
struct ClaimSides {
  double lhs;
  double rhs;
};

inline ClaimSides claim_sides(const ObservableSet& set, const PureState& psi, const qsim::MixedState& tau, Bits h, Bits u, Bits v) {
  BasisSplit split(h);
  const unsigned n = h.width;
  Matrix px = pauli_projector(n, qsim::PauliKind::x, split.r, u);
  Matrix pz = pauli_projector(n, qsim::PauliKind::z, split.s, v);
  const double lhs = std::real((px * pz * tau.matrix()).trace());
  const double rhs = twirled_mass(set, psi, split, u, v, static_cast<unsigned>(split.r.size()));
  return {lhs, rhs};
}

inline ClaimSides verify_extracted_claim(const ObservableSet& set, const PureState& psi, Bits h, Bits u, Bits v) {
  return claim_sides(set, psi, extractor(set, psi), h, u, v);
}

// E_{x∼dist} (-1)^{x_j} ⟨x∖j|M|x∖j⟩ for a binary POVM element 0 ⪯ M ⪯ Id on N−1 bits.
inline double signed_statistic(const OutcomeDistribution& dist, const Matrix& m, unsigned j, double tol = 1e-10) {
  const unsigned n = dist.width();
  if (j >= n) throw std::out_of_range("signed_statistic: j outside the outcome");
  if (m.rows() != (int64_t{1} << (n - 1)) || m.cols() != m.rows()) throw std::invalid_argument("signed_statistic: M dimension");
  if ((m - m.adjoint()).cwiseAbs().maxCoeff() > tol) throw std::invalid_argument("signed_statistic: M is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -tol || es.eigenvalues().maxCoeff() > 1.0 + tol) {
    throw std::invalid_argument("signed_statistic: M is not between 0 and Id");
  }
  const uint64_t low = (uint64_t{1} << j) - 1;
  double acc = 0.0;
  for (uint64_t x = 0; x < dist.size(); ++x) {
    if (dist[x] == 0.0) continue;
    const uint64_t rest = (x & low) | ((x >> (j + 1)) << j);
    const double sign = ((x >> j) & 1U) ? -1.0 : 1.0;
    acc += dist[x] * sign * std::real(m(static_cast<int64_t>(rest), static_cast<int64_t>(rest)));
  }
  return acc;
}

inline std::pair<double, double> signed_statistic(const OutcomeDistribution& d0, const OutcomeDistribution& d1, const Matrix& m,
                                                  unsigned j) {
  return {signed_statistic(d0, m, j), signed_statistic(d1, m, j)};
}

}  // namespace qverify::extract
