#pragma once

// Delegation on top of the commit-and-measure protocol: a post-hoc verification
// interface with a toy stabilizer-check instantiation, PRF-derived bases, the
// verifier-succinct protocol, parallel repetition, the orthogonal-projector score and
// batch arguments.
//
// Proof qubit i is protocol slot i. Proof states live in a single register "P".

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qverify/batchkeys.hpp"
#include "qverify/common.hpp"
#include "qverify/mproto.hpp"
#include "qverify/pprf.hpp"
#include "qverify/qsim.hpp"
#include "qverify/rng.hpp"

namespace qverify::delegate {

using batchkeys::Backend;
using batchkeys::BasisSpec;

inline constexpr const char* kProofReg = "P";
inline constexpr unsigned kMaxProofWidth = 4;
inline constexpr size_t kMaxCoins = 256;

inline qsim::RegisterLayout proof_layout(unsigned width) {
  qsim::RegisterLayout l;
  l.push(kProofReg, width);
  return l;
}

// Post-hoc interface -------------------------------------------------------

// P_FHM produces an ell_proof-qubit proof; V_FHM is a classical predicate on the basis
// choice h and the outcome m of measuring the proof in those bases.
struct PostHocInstance {
  std::string label;
  unsigned copies = 1;
  unsigned ell_proof = 0;
  std::function<qsim::PureState()> prove;
  std::function<bool(Bits h, Bits m)> verify;
};

enum class CheckKind : uint8_t { X, Z };

struct ParityCheck {
  CheckKind kind = CheckKind::Z;
  uint64_t support = 0;
  unsigned parity = 0;
};

// Yes-instance iff the generator's state is a common eigenstate of every check with
// eigenvalue (-1)^parity.
struct StabilizerCheckInstance {
  std::string label;
  unsigned ell_proof = 0;
  std::vector<ParityCheck> checks;
  std::function<qsim::PureState()> generator;
};

inline uint64_t width_mask(unsigned w) { return w >= 64 ? ~uint64_t{0} : (uint64_t{1} << w) - 1; }

inline void check_instance(const StabilizerCheckInstance& inst) {
  if (inst.ell_proof == 0 || inst.ell_proof > 16) throw std::invalid_argument("instance: ell_proof must be in [1, 16]");
  for (const auto& c : inst.checks) {
    if (c.support == 0) throw std::invalid_argument("instance: check with empty support");
    if (c.support & ~width_mask(inst.ell_proof)) throw std::invalid_argument("instance: check acts outside ell_proof qubits");
    if (c.parity > 1) throw std::invalid_argument("instance: parity must be a bit");
  }
}

// (-1)^parity · P on the supported qubits, as a dense matrix on `width` qubits.
inline qsim::Matrix check_operator(const ParityCheck& c, unsigned width) {
  const qsim::Matrix p = c.kind == CheckKind::X ? qsim::gates::pauli_x() : qsim::gates::pauli_z();
  qsim::Matrix k = qsim::Matrix::Identity(1, 1);
  for (unsigned q = 0; q < width; ++q) k = qsim::gates::kron(k, ((c.support >> q) & 1U) ? p : qsim::gates::identity(1));
  return c.parity ? qsim::Matrix(-k) : k;
}

inline qsim::Matrix check_projector(const ParityCheck& c, unsigned width) {
  const int64_t d = int64_t{1} << width;
  return 0.5 * (qsim::Matrix::Identity(d, d) + check_operator(c, width));
}

inline bool satisfies(const StabilizerCheckInstance& inst, const qsim::PureState& st, double tol = 1e-10) {
  if (st.width() != inst.ell_proof) throw std::invalid_argument("satisfies: width mismatch");
  const qsim::Vector& a = st.amplitudes();
  Eigen::Map<const Eigen::VectorXcd> v(a.data(), static_cast<int64_t>(a.size()));
  for (const auto& c : inst.checks) {
    if (std::abs(v.dot(check_projector(c, inst.ell_proof) * v) - 1.0) > tol) return false;
  }
  return true;
}

// A state in the joint +1 eigenspace of the checks, or nullopt when it is empty or the
// checks do not commute.
inline std::optional<qsim::PureState> code_state(const StabilizerCheckInstance& inst) {
  check_instance(inst);
  const unsigned w = inst.ell_proof;
  if (w > 12) throw std::length_error("code_state: ell_proof above 12");
  const int64_t d = int64_t{1} << w;
  qsim::Matrix proj = qsim::Matrix::Identity(d, d);
  for (const auto& c : inst.checks) proj = check_projector(c, w) * proj;
  if ((proj * proj - proj).cwiseAbs().maxCoeff() > 1e-10) return std::nullopt;
  int64_t best = 0;
  for (int64_t j = 1; j < d; ++j) {
    if (proj.col(j).squaredNorm() > proj.col(best).squaredNorm()) best = j;
  }
  const double n2 = proj.col(best).squaredNorm();
  if (n2 < 1e-12) return std::nullopt;
  qsim::Vector v(static_cast<size_t>(d));
  for (int64_t i = 0; i < d; ++i) v[static_cast<size_t>(i)] = proj(i, best) / std::sqrt(n2);
  qsim::PureState st(proof_layout(w), std::move(v), 1e-10);
  if (!satisfies(inst, st)) return std::nullopt;
  return st;
}

// Uses the code state as generator; throws when the checks have no common eigenstate.
inline StabilizerCheckInstance make_instance(std::string label, unsigned ell_proof, std::vector<ParityCheck> checks) {
  StabilizerCheckInstance inst{std::move(label), ell_proof, std::move(checks), {}};
  std::optional<qsim::PureState> st = code_state(inst);
  if (!st) throw std::invalid_argument("make_instance: checks have no common eigenstate");
  inst.generator = [s = *st] { return s; };
  return inst;
}

inline qsim::PureState fhm_prove(const StabilizerCheckInstance& inst) {
  check_instance(inst);
  if (inst.ell_proof > kMaxProofWidth) throw std::invalid_argument("fhm_prove: ell_proof above 4");
  if (!inst.generator) throw std::invalid_argument("fhm_prove: instance has no generator");
  qsim::PureState st = inst.generator();
  if (st.width() != inst.ell_proof) throw std::invalid_argument("fhm_prove: generator width differs from ell_proof");
  return st;
}

// An X check is evaluated only when every supported qubit was measured in the Hadamard
// basis, a Z check only when every supported qubit was measured in the standard basis.
inline bool fhm_verify(const StabilizerCheckInstance& inst, Bits h, Bits m) {
  if (h.width != inst.ell_proof || m.width != inst.ell_proof) throw std::invalid_argument("fhm_verify: width mismatch");
  for (const auto& c : inst.checks) {
    const uint64_t want = c.kind == CheckKind::X ? c.support : 0;
    if ((h.value & c.support) != want) continue;
    if (static_cast<unsigned>(std::popcount(m.value & c.support) & 1) != c.parity) return false;
  }
  return true;
}

inline PostHocInstance as_post_hoc(const StabilizerCheckInstance& inst) {
  return {inst.label, 1, inst.ell_proof, [inst] { return fhm_prove(inst); },
          [inst](Bits h, Bits m) { return fhm_verify(inst, h, m); }};
}

// Pr[V_FHM(h, M(h, σ)) = acc], exactly.
inline double fhm_accept_probability(const StabilizerCheckInstance& inst, Bits h, const qsim::PureState& sigma) {
  if (sigma.width() != inst.ell_proof) throw std::invalid_argument("fhm_accept_probability: width mismatch");
  std::vector<std::string> regs;
  for (const auto& r : sigma.layout().registers()) regs.push_back(r.name);
  OutcomeDistribution d = qsim::measure_bases(sigma, regs, h);
  double p = 0.0;
  for (uint64_t m = 0; m < d.size(); ++m) {
    if (d[m] > 0.0 && fhm_verify(inst, h, Bits(m, inst.ell_proof))) p += d[m];
  }
  return p;
}

// Instance files: '#' starts a comment; the first line is `l_proof <width>`, then one
// check per line as `X|Z <mask-hex> <parity>`.
inline StabilizerCheckInstance parse_instance(std::istream& in, std::string label = "instance") {
  std::string line;
  std::optional<unsigned> width;
  std::vector<ParityCheck> checks;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head)) continue;
    const std::string where = "instance line " + std::to_string(lineno) + ": ";
    if (!width) {
      unsigned w = 0;
      if (head != "l_proof" || !(ls >> w)) throw std::invalid_argument(where + "expected `l_proof <width>`");
      width = w;
    } else {
      ParityCheck c;
      if (head == "X") {
        c.kind = CheckKind::X;
      } else if (head == "Z") {
        c.kind = CheckKind::Z;
      } else {
        throw std::invalid_argument(where + "check kind must be X or Z");
      }
      std::string mask;
      if (!(ls >> mask >> c.parity)) throw std::invalid_argument(where + "expected `<mask-hex> <parity>`");
      size_t used = 0;
      c.support = std::stoull(mask, &used, 16);
      if (used != mask.size()) throw std::invalid_argument(where + "mask is not hexadecimal");
      checks.push_back(c);
    }
    std::string extra;
    if (ls >> extra) throw std::invalid_argument(where + "trailing tokens");
  }
  if (!width) throw std::invalid_argument("instance: missing l_proof header");
  return make_instance(std::move(label), *width, std::move(checks));
}

inline StabilizerCheckInstance load_instance(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open instance file " + path);
  return parse_instance(f, path);
}

// PRF bases ----------------------------------------------------------------

// C(i) = low bit of PRF_seed(i).
inline BasisSpec basis_from_prf(const pprf::Seed& seed, size_t ell_proof) {
  if (ell_proof == 0 || ell_proof > (size_t{1} << 16)) throw std::invalid_argument("basis_from_prf: ell_proof outside [1, 2^16]");
  return BasisSpec::prf(seed, ell_proof, 0);
}

// Provers -------------------------------------------------------------------

// A product prover: it commits to `proof(inst)` honestly and opens honestly, except
// that a test-only prover answers every measurement challenge with a test-round
// opening, which the verifier cannot decode.
struct DelegationProver {
  std::string name = "honest";
  std::function<qsim::PureState(const StabilizerCheckInstance&)> proof;
  bool answers_measurement = true;

  static DelegationProver honest() { return {"honest", [](const StabilizerCheckInstance& i) { return fhm_prove(i); }, true}; }
  static DelegationProver with_state(qsim::PureState sigma) {
    return {"wrong-state", [s = std::move(sigma)](const StabilizerCheckInstance&) { return s; }, true};
  }
  static DelegationProver test_only() {
    return {"test-only", [](const StabilizerCheckInstance& i) { return fhm_prove(i); }, false};
  }
};

struct DelegationParams {
  unsigned ell = 1;
  Backend backend = Backend::compressed;
};

struct RoundResult {
  unsigned c = 0;
  bool accept = false;
};

inline mproto::ProtocolParams protocol_params(const StabilizerCheckInstance& inst, const DelegationParams& dp) {
  mproto::ProtocolParams p{inst.ell_proof, dp.ell, dp.backend, 0};
  mproto::validate(p);
  return p;
}

template <class G>
mproto::Opening prover_open(const DelegationProver& prover, const qsim::PureState& post, unsigned c, size_t n,
                            unsigned ell, G& rng) {
  if (c == 1 && !prover.answers_measurement) return mproto::mp_open(post, 0, n, ell, rng);
  return mproto::mp_open(post, c, n, ell, rng);
}

// Verifier's decision on one session; a malformed response rejects.
template <class G>
bool verifier_decide(const StabilizerCheckInstance& inst, const mproto::SlotKeys& keys, const BasisSpec& basis,
                     const mproto::CommitMessage& y, unsigned c, const mproto::Opening& z, G& rng) {
  try {
    if (c == 0) return mproto::mp_test(keys.pk, y, z);
    Bits m = mproto::mp_out(keys.sk, y, z, basis, rng);
    return fhm_verify(inst, basis.bits(), m);
  } catch (const ProtocolError&) {
    return false;
  }
}

// Slot keys are extracted once per session; on the compressed backend each extraction
// re-derives the slot from the seed.
template <class G>
std::pair<mproto::CommitMessage, qsim::PureState> prover_commit(const DelegationProver& prover,
                                                                const StabilizerCheckInstance& inst,
                                                                const std::vector<rtcf::PublicKey>& pks, G& rng) {
  qsim::PureState sigma = prover.proof(inst);
  if (sigma.width() != inst.ell_proof) throw std::invalid_argument("delegation: proof width differs from ell_proof");
  auto branches = mproto::commit_branches(pks, sigma);
  const mproto::CommitBranch& b = mproto::pick_branch(branches, rng);
  return {b.y, b.state};
}

// One repetition: Gen with C = PRF_s, Commit, challenge, Open, then Test or Out∘V_FHM.
template <class G>
RoundResult semi_succinct_run(const StabilizerCheckInstance& inst, const DelegationProver& prover, const pprf::Seed& s,
                              G& rng, const DelegationParams& dp = {}) {
  const mproto::ProtocolParams p = protocol_params(inst, dp);
  const BasisSpec basis = basis_from_prf(s, inst.ell_proof);
  const mproto::SlotKeys keys = mproto::slot_keys(mproto::mp_gen(p, basis, rng));
  auto [y, post] = prover_commit(prover, inst, keys.pk, rng);
  RoundResult r;
  r.c = random_bit(rng);
  mproto::Opening z = prover_open(prover, post, r.c, p.n, p.ell, rng);
  // The verifier keeps C's evaluations after Gen; only pk travels.
  r.accept = verifier_decide(inst, keys, BasisSpec::truth_table(basis.table()), y, r.c, z, rng);
  return r;
}

template <class G>
RoundResult semi_succinct_run(const StabilizerCheckInstance& inst, const DelegationProver& prover, G& rng,
                              const DelegationParams& dp = {}) {
  const pprf::Seed s = random_digest(rng);
  return semi_succinct_run(inst, prover, s, rng, dp);
}

// Exact measurement-round rejection probability for a uniform basis: the mean over h of
// the mass that Out's distribution on keys for h puts outside V_FHM's acceptance set.
template <class G>
double measurement_reject_probability(const StabilizerCheckInstance& inst, const DelegationProver& prover, G& rng,
                                      const DelegationParams& dp = {}) {
  DelegationParams trivial = dp;
  trivial.backend = Backend::trivial;
  const mproto::ProtocolParams p = protocol_params(inst, trivial);
  const qsim::PureState sigma = prover.proof(inst);
  if (!prover.answers_measurement) return 1.0;
  double reject = 0.0;
  const uint64_t hs = uint64_t{1} << inst.ell_proof;
  for (uint64_t hv = 0; hv < hs; ++hv) {
    const Bits h(hv, inst.ell_proof);
    const BasisSpec basis = BasisSpec::from_bits(h);
    const mproto::SlotKeys keys = mproto::slot_keys(mproto::mp_gen(p, basis, rng));
    const OutcomeDistribution out = mproto::output_distribution(keys, basis, mproto::commit_branches(keys.pk, sigma));
    for (uint64_t m = 0; m < out.size(); ++m) {
      if (out[m] > 0.0 && !fhm_verify(inst, h, Bits(m, inst.ell_proof))) reject += out[m];
    }
  }
  return reject / static_cast<double>(hs);
}

// Exact single-repetition acceptance for a uniform challenge and uniform basis.
template <class G>
double single_round_acceptance(const StabilizerCheckInstance& inst, const DelegationProver& prover, G& rng,
                               const DelegationParams& dp = {}) {
  DelegationParams trivial = dp;
  trivial.backend = Backend::trivial;
  const mproto::ProtocolParams p = protocol_params(inst, trivial);
  const mproto::SlotKeys keys =
      mproto::slot_keys(mproto::mp_gen(p, BasisSpec::constant(inst.ell_proof, 0), rng));
  const double test = mproto::test_acceptance(keys.pk, mproto::commit_branches(keys.pk, prover.proof(inst)));
  return 0.5 * test + 0.5 * (1.0 - measurement_reject_probability(inst, prover, rng, dp));
}

// Parallel repetition -----------------------------------------------------

struct RepetitionResult {
  bool accept = false;
  std::vector<RoundResult> rounds;
};

// Slots are independent sessions of a product prover, so each is run on its own fork
// of the caller's generator.
template <class G>
RepetitionResult parallel_repeat(size_t k, const StabilizerCheckInstance& inst, const std::vector<DelegationProver>& provers,
                                 G& rng, const DelegationParams& dp = {}) {
  if (k == 0) throw std::invalid_argument("parallel_repeat: k must be positive");
  if (provers.size() != 1 && provers.size() != k) throw std::invalid_argument("parallel_repeat: need one prover or one per slot");
  const Rng root(random_digest(rng));
  RepetitionResult out;
  out.accept = true;
  for (size_t j = 0; j < k; ++j) {
    Rng slot = root.fork("repetition", j);
    out.rounds.push_back(semi_succinct_run(inst, provers[provers.size() == 1 ? 0 : j], slot, dp));
    out.accept = out.accept && out.rounds.back().accept;
  }
  return out;
}

// Orthogonal-projector score ---------------------------------------------

// Commit-phase states per verifier coin, response unitaries, and the verifier's accept
// projectors. V0 sees no coin; V1 receives the coin index.
struct CheatingProverModel {
  std::vector<qsim::PureState> states;
  qsim::Matrix u0;
  qsim::Matrix u1;
  qsim::Matrix v0;
  std::function<qsim::Matrix(size_t coin)> v1;
};

inline bool is_projector(const qsim::Matrix& p, double tol = 1e-10) {
  if (p.rows() != p.cols()) return false;
  if ((p - p.adjoint()).cwiseAbs().maxCoeff() > tol) return false;
  return (p * p - p).cwiseAbs().maxCoeff() <= tol;
}

// E_r ⟨ψ_r| Π0 Π1 Π0 |ψ_r⟩ with Π_b = U_b† V_b U_b, exhaustively over the coins.
inline double orthogonality_score(const CheatingProverModel& m) {
  if (m.states.empty() || m.states.size() > kMaxCoins) throw std::invalid_argument("orthogonality_score: need 1..256 coins");
  const int64_t d = static_cast<int64_t>(m.states[0].amplitudes().size());
  for (const auto* u : {&m.u0, &m.u1}) {
    if (u->rows() != d || !qsim::is_unitary(*u)) throw std::invalid_argument("orthogonality_score: response map is not a unitary");
  }
  if (m.v0.rows() != d || !is_projector(m.v0)) throw std::invalid_argument("orthogonality_score: V0 is not a projector");
  const qsim::Matrix pi0 = m.u0.adjoint() * m.v0 * m.u0;
  double total = 0.0;
  for (size_t r = 0; r < m.states.size(); ++r) {
    const qsim::Matrix v1 = m.v1(r);
    if (v1.rows() != d || !is_projector(v1)) throw std::invalid_argument("orthogonality_score: V1 is not a projector");
    const qsim::Vector& a = m.states[r].amplitudes();
    if (static_cast<int64_t>(a.size()) != d) throw std::invalid_argument("orthogonality_score: state dimension mismatch");
    Eigen::Map<const Eigen::VectorXcd> psi(a.data(), d);
    const Eigen::VectorXcd w = pi0 * psi;
    total += w.dot(m.u1.adjoint() * v1 * m.u1 * w).real();
  }
  return total / static_cast<double>(m.states.size());
}

// Batch arguments --------------------------------------------------------

struct BatchResult {
  unsigned c = 0;
  bool accept = false;
  std::vector<bool> instance_accepts;
  // Master public key plus the challenge byte.
  size_t verifier_bytes = 0;
};

// One key pair over ell_proof slots with C(i) = h_i serves every instance; each
// instance commits separately and all answer the same challenge.
template <class G>
BatchResult batch_run(const std::vector<StabilizerCheckInstance>& instances, const std::vector<DelegationProver>& provers,
                      G& rng, const DelegationParams& dp = {1, Backend::trivial}) {
  if (instances.empty()) throw std::invalid_argument("batch_run: no instances");
  if (provers.size() != instances.size()) throw std::invalid_argument("batch_run: need one prover per instance");
  const unsigned w = instances[0].ell_proof;
  for (const auto& inst : instances) {
    if (inst.ell_proof != w) throw std::invalid_argument("batch_run: instances differ in ell_proof");
  }
  const mproto::ProtocolParams p = protocol_params(instances[0], dp);
  Bits h(0, w);
  for (unsigned i = 0; i < w; ++i) h.value |= uint64_t{random_bit(rng)} << i;
  const BasisSpec basis = BasisSpec::from_bits(h);
  const batchkeys::MasterKeys master = mproto::mp_gen(p, basis, rng);
  const mproto::SlotKeys keys = mproto::slot_keys(master);
  std::vector<mproto::CommitMessage> ys;
  std::vector<qsim::PureState> posts;
  for (size_t j = 0; j < instances.size(); ++j) {
    auto [y, post] = prover_commit(provers[j], instances[j], keys.pk, rng);
    ys.push_back(std::move(y));
    posts.push_back(std::move(post));
  }
  BatchResult r;
  r.verifier_bytes = master.pk.bytes().size() + 1;
  r.c = random_bit(rng);
  r.accept = true;
  for (size_t j = 0; j < instances.size(); ++j) {
    mproto::Opening z = prover_open(provers[j], posts[j], r.c, p.n, p.ell, rng);
    const bool ok = verifier_decide(instances[j], keys, basis, ys[j], r.c, z, rng);
    r.instance_accepts.push_back(ok);
    r.accept = r.accept && ok;
  }
  return r;
}

// Verifier message size -----------------------------------------------------

// Bytes the verifier sends in one repetition: the master public key and the challenge.
template <class G>
size_t verifier_message_bytes(size_t ell_proof, unsigned ell, Backend backend, G& rng) {
  const BasisSpec basis = basis_from_prf(random_digest(rng), ell_proof);
  batchkeys::MasterKeys keys = batchkeys::setup(ell, basis, backend, rng);
  return keys.pk.bytes().size() + 1;
}

}  // namespace qverify::delegate
