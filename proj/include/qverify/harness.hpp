#pragma once

// Experiment configuration, JSON reports, transcript files and the command suites
// behind the qverify CLI. Every randomized step draws from forks of Rng(seed).

#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "qverify/batchkeys.hpp"
#include "qverify/compile.hpp"
#include "qverify/delegate.hpp"
#include "qverify/distribution.hpp"
#include "qverify/extract.hpp"
#include "qverify/mproto.hpp"
#include "qverify/pprf.hpp"
#include "qverify/qsim.hpp"
#include "qverify/rng.hpp"

namespace qverify::harness {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr const char* kTranscriptExtension = ".qvt";
inline constexpr double kExactTolerance = 1e-9;

using nlohmann::json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  std::string command;
  size_t n = 2;
  unsigned ell = 2;
  uint64_t seed = 1;
  // 0 selects the command's default.
  uint64_t trials = 0;
  batchkeys::Backend backend = batchkeys::Backend::trivial;
  std::optional<double> tolerance;
  std::string json_path;
  std::string instance_path;
  std::string transcript_path;
  unsigned reps = 1;
  unsigned version = 1;
  bool fs = false;

  double tol() const { return tolerance.value_or(kExactTolerance); }
  uint64_t trials_or(uint64_t fallback) const { return trials == 0 ? fallback : trials; }

  json to_json() const {
    json j{{"command", command},
           {"n", n},
           {"l", ell},
           {"seed", seed},
           {"trials", trials},
           {"backend", batchkeys::backend_name(backend)},
           {"reps", reps},
           {"version", version},
           {"fs", fs}};
    if (tolerance) j["tolerance"] = *tolerance;
    if (!instance_path.empty()) j["instance"] = instance_path;
    if (!transcript_path.empty()) j["transcript"] = transcript_path;
    return j;
  }
};

struct Check {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  // One of "<=", ">=", "==".
  std::string relation = "<=";
  bool pass = false;
};

struct Report {
  std::string command;
  json config = json::object();
  std::vector<Check> checks;
  json data = json::object();
  double wall_clock_seconds = 0.0;
  std::string version = kLibraryVersion;

  bool pass() const {
    for (const auto& c : checks) {
      if (!c.pass) return false;
    }
    return true;
  }

  void le(std::string name, double value, double bound) { checks.push_back({std::move(name), value, bound, "<=", value <= bound}); }
  void ge(std::string name, double value, double bound) { checks.push_back({std::move(name), value, bound, ">=", value >= bound}); }
  void eq(std::string name, double value, double bound) { checks.push_back({std::move(name), value, bound, "==", value == bound}); }

  json to_json(bool with_wall_clock = true) const {
    json cs = json::array();
    for (const auto& c : checks) cs.push_back({{"name", c.name}, {"value", c.value}, {"bound", c.bound}, {"relation", c.relation}, {"pass", c.pass}});
    json j{{"command", command}, {"config", config}, {"checks", cs}, {"pass", pass()}, {"data", data}, {"version", version}};
    if (with_wall_clock) j["wall_clock_seconds"] = wall_clock_seconds;
    return j;
  }
};

// Transcript files ----------------------------------------------------------

inline void require_qvt(const std::string& path) {
  const std::string ext = kTranscriptExtension;
  if (path.size() <= ext.size() || path.compare(path.size() - ext.size(), ext.size(), ext) != 0) {
    throw ConfigError("transcript path must end in " + ext + ": " + path);
  }
}

inline void save_transcript(const std::string& path, const Bytes& framed) {
  require_qvt(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(framed.data()), static_cast<std::streamsize>(framed.size()));
}

inline Bytes load_transcript(const std::string& path) {
  require_qvt(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Shared fixtures -------------------------------------------------------------

inline qsim::PureState random_input(size_t n, Rng& rng) {
  qsim::RegisterLayout l;
  l.push("S", static_cast<unsigned>(n));
  return qsim::random_state(l, rng);
}

inline delegate::StabilizerCheckInstance default_instance() {
  using delegate::CheckKind;
  return delegate::make_instance("bell", 2, {{CheckKind::X, 0x3, 0}, {CheckKind::Z, 0x3, 0}});
}

inline delegate::StabilizerCheckInstance instance_for(const ExperimentConfig& cfg) {
  if (cfg.instance_path.empty()) return default_instance();
  try {
    return delegate::load_instance(cfg.instance_path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("--instance: ") + e.what());
  }
}

inline void check_protocol_size(size_t n, unsigned ell) {
  try {
    mproto::validate(mproto::ProtocolParams{n, ell, batchkeys::Backend::trivial, 0});
  } catch (const std::exception& e) {
    throw ConfigError(std::string("--n/--l: ") + e.what());
  }
}

// Commands ------------------------------------------------------------------

// Test-round acceptance over every commit branch, measurement-round TV against the
// ideal measurement for every basis, and sampled sessions on the chosen backend.
inline void run_protocol(const ExperimentConfig& cfg, Report& rep) {
  check_protocol_size(cfg.n, cfg.ell);
  const Rng root(cfg.seed);
  Rng rng = root.fork("protocol");
  const qsim::PureState sigma = random_input(cfg.n, rng);
  const mproto::ProtocolParams p{cfg.n, cfg.ell, cfg.backend, 0};

  Bits h0(0, static_cast<unsigned>(cfg.n));
  for (unsigned i = 0; i < cfg.n; ++i) h0.value |= uint64_t{random_bit(rng)} << i;
  const mproto::SlotKeys k0 = mproto::slot_keys(mproto::mp_gen(p, batchkeys::BasisSpec::from_bits(h0), rng));
  rep.eq("test_round_acceptance", mproto::test_acceptance(k0.pk, mproto::commit_branches(k0.pk, sigma)), 1.0);

  double worst = 0.0;
  json per_h = json::array();
  for (uint64_t hv = 0; hv < (uint64_t{1} << cfg.n); ++hv) {
    const Bits h(hv, static_cast<unsigned>(cfg.n));
    const batchkeys::BasisSpec c = batchkeys::BasisSpec::from_bits(h);
    const mproto::SlotKeys k = mproto::slot_keys(mproto::mp_gen(p, c, rng));
    const double tv = tv_distance(mproto::output_distribution(k, c, mproto::commit_branches(k.pk, sigma)),
                                  qsim::measure_bases(sigma, "S", h));
    worst = std::max(worst, tv);
    per_h.push_back({{"h", h.str()}, {"tv", tv}});
  }
  rep.le("measurement_round_tv", worst, cfg.tol());
  rep.data["measurement_round_tv"] = per_h;

  const uint64_t trials = cfg.trials_or(100);
  uint64_t tests = 0, test_accepts = 0, round_trips = 0;
  Rng sessions = root.fork("sessions");
  mproto::Transcript last;
  for (uint64_t t = 0; t < trials; ++t) {
    last = mproto::run_session(p, batchkeys::BasisSpec::from_bits(h0), sigma, sessions);
    if (last.c == 0) {
      ++tests;
      test_accepts += last.verdict.value_or(false);
    }
    round_trips += mproto::Transcript::from_bytes(last.bytes()) == last;
  }
  rep.eq("sampled_test_rounds_accepted", static_cast<double>(test_accepts), static_cast<double>(tests));
  rep.eq("transcript_round_trips", static_cast<double>(round_trips), static_cast<double>(trials));
  rep.data["sessions"] = {{"trials", trials}, {"test_rounds", tests}, {"measurement_rounds", trials - tests}};
  if (!cfg.transcript_path.empty()) save_transcript(cfg.transcript_path, last.bytes());
}

// The extracted-state claim for random attacks, and the collapse of D_Out, D_2to1 and
// D_Ext for an honest prover.
inline void run_extract_check(const ExperimentConfig& cfg, Report& rep) {
  if (cfg.n == 0 || cfg.n > 3 || cfg.ell == 0 || cfg.ell > 2) throw ConfigError("extract-check: needs 1 <= --n <= 3 and 1 <= --l <= 2");
  const Rng root(cfg.seed);
  const unsigned n = static_cast<unsigned>(cfg.n);
  const uint64_t trials = cfg.trials_or(10);
  double worst = 0.0;
  json entries = json::array();
  for (uint64_t t = 0; t < trials; ++t) {
    Rng rng = root.fork("attack", t);
    const extract::MaliciousProver p = extract::random_prover(cfg.n, cfg.ell, 1, rng);
    const mproto::SlotKeys keys = extract::sim_gen(cfg.n, cfg.ell, batchkeys::Backend::trivial, rng);
    const extract::Sample s = extract::samp_branches(p, keys).front();
    const qsim::MixedState tau = extract::extractor(s.obs, s.psi);
    for (uint64_t hv = 0; hv < (uint64_t{1} << n); ++hv) {
      const Bits h(hv, n);
      const extract::BasisSplit split(h);
      for (uint64_t m = 0; m < (uint64_t{1} << n); ++m) {
        const Bits u = split.u_of(Bits(m, n)), v = split.v_of(Bits(m, n));
        const extract::ClaimSides c = extract::claim_sides(s.obs, s.psi, tau, h, u, v);
        worst = std::max(worst, std::abs(c.lhs - c.rhs));
        entries.push_back({{"trial", t}, {"h", h.str()}, {"u", u.str()}, {"v", v.str()}, {"lhs", c.lhs}, {"rhs", c.rhs}});
      }
    }
  }
  rep.le("claim_max_deviation", worst, cfg.tol());
  rep.data["claim"] = entries;

  Rng rng = root.fork("honest");
  const qsim::PureState sigma = random_input(cfg.n, rng);
  const extract::MaliciousProver honest = extract::honest_prover(sigma, cfg.ell);
  const auto samples = extract::samp_branches(honest, extract::sim_gen(cfg.n, cfg.ell, batchkeys::Backend::trivial, rng));
  double out_21 = 0.0, d21_ext = 0.0, out_ext = 0.0;
  json tvs = json::array();
  for (uint64_t hv = 0; hv < (uint64_t{1} << n); ++hv) {
    const Bits h(hv, n);
    const batchkeys::BasisSpec c = batchkeys::BasisSpec::from_bits(h);
    const OutcomeDistribution d_out = extract::dist_out(honest, extract::sample_keys(cfg.n, cfg.ell, c, batchkeys::Backend::trivial, rng), c);
    const OutcomeDistribution d_21 = extract::pmf_two_to_one(samples, h);
    const OutcomeDistribution d_ext = extract::dist_ext(samples, h);
    const double a = tv_distance(d_out, d_21), b = tv_distance(d_21, d_ext), e = tv_distance(d_out, d_ext);
    out_21 = std::max(out_21, a);
    d21_ext = std::max(d21_ext, b);
    out_ext = std::max(out_ext, e);
    tvs.push_back({{"h", h.str()}, {"out_2to1", a}, {"2to1_ext", b}, {"out_ext", e}});
  }
  rep.le("honest_tv_out_2to1", out_21, cfg.tol());
  rep.le("honest_tv_2to1_ext", d21_ext, cfg.tol());
  rep.le("honest_tv_out_ext", out_ext, cfg.tol());
  rep.data["honest_tv"] = tvs;
}

// k-fold repetition on an instance: honest runs all accept, a test-only cheater accepts
// at 2^-k within 4σ.
inline void run_delegate(const ExperimentConfig& cfg, Report& rep) {
  const delegate::StabilizerCheckInstance inst = instance_for(cfg);
  if (cfg.reps == 0) throw ConfigError("--reps must be positive");
  const delegate::DelegationParams dp{1, cfg.backend};
  const Rng root(cfg.seed);
  const uint64_t trials = cfg.trials_or(100);
  Rng exact_rng = root.fork("exact");
  rep.le("honest_exact_single_round_rejection",
         1.0 - delegate::single_round_acceptance(inst, delegate::DelegationProver::honest(), exact_rng, dp), cfg.tol());
  uint64_t honest = 0, cheat = 0;
  Rng hr = root.fork("honest"), cr = root.fork("cheater");
  for (uint64_t t = 0; t < trials; ++t) {
    honest += delegate::parallel_repeat(cfg.reps, inst, {delegate::DelegationProver::honest()}, hr, dp).accept;
    cheat += delegate::parallel_repeat(cfg.reps, inst, {delegate::DelegationProver::test_only()}, cr, dp).accept;
  }
  rep.eq("honest_accepts", static_cast<double>(honest), static_cast<double>(trials));
  const double expect = std::ldexp(1.0, -static_cast<int>(cfg.reps));
  const double freq = static_cast<double>(cheat) / static_cast<double>(trials);
  rep.le("test_only_deviation", std::abs(freq - expect), four_sigma(expect, trials));
  rep.data["instance"] = {{"label", inst.label}, {"l_proof", inst.ell_proof}, {"checks", inst.checks.size()}};
  rep.data["test_only"] = {{"expected", expect}, {"observed", freq}};
}

// Batch delegation of n copies of an instance: honest batches accept and the verifier
// message does not grow with n.
inline void run_batch(const ExperimentConfig& cfg, Report& rep) {
  const delegate::StabilizerCheckInstance inst = instance_for(cfg);
  if (cfg.n == 0) throw ConfigError("--n must be positive");
  const delegate::DelegationParams dp{1, cfg.backend};
  const Rng root(cfg.seed);
  const uint64_t trials = cfg.trials_or(50);
  Rng rng = root.fork("batch");
  const std::vector<delegate::StabilizerCheckInstance> many(cfg.n, inst);
  const std::vector<delegate::DelegationProver> honest(cfg.n, delegate::DelegationProver::honest());
  uint64_t accepts = 0;
  size_t bytes = 0;
  for (uint64_t t = 0; t < trials; ++t) {
    delegate::BatchResult r = delegate::batch_run(many, honest, rng, dp);
    accepts += r.accept;
    bytes = r.verifier_bytes;
  }
  const size_t single = delegate::batch_run({inst}, {delegate::DelegationProver::honest()}, rng, dp).verifier_bytes;
  rep.eq("honest_batches_accepted", static_cast<double>(accepts), static_cast<double>(trials));
  rep.eq("verifier_bytes", static_cast<double>(bytes), static_cast<double>(single));
  rep.data["verifier_bytes"] = bytes;
}

inline json size_json(const compile::CompiledTranscript& t) {
  json rounds = json::array();
  for (const auto& r : compile::size_report(t)) {
    rounds.push_back({{"round", r.round}, {"role", r.role == compile::Role::verifier ? "verifier" : "prover"}, {"bytes", r.bytes}, {"aok_bytes", r.aok_bytes}});
  }
  return {{"rounds", rounds},
          {"verifier_bytes", t.role_bytes(compile::Role::verifier)},
          {"prover_bytes", t.role_bytes(compile::Role::prover)},
          {"prover_bytes_without_aok", t.role_bytes(compile::Role::prover, false)}};
}

// Flips one uniformly chosen bit of one uniformly chosen chain element.
inline compile::FsProof tamper(const compile::FsProof& p, Rng& rng) {
  compile::FsProof out = p;
  const size_t slots = p.s.size() + p.t.size();
  const size_t k = uniform_below(rng, slots);
  if (k < p.s.size()) {
    const size_t bit = uniform_below(rng, 256);
    out.s[k][bit / 8] ^= static_cast<uint8_t>(1U << (bit % 8));
  } else {
    Bytes& t = out.t[k - p.s.size()];
    const size_t bit = uniform_below(rng, t.size() * 8);
    t[bit / 8] ^= static_cast<uint8_t>(1U << (bit % 8));
  }
  return out;
}

inline void run_fs(const ExperimentConfig& cfg, Report& rep) {
  const compile::SemiSuccinct scheme{instance_for(cfg), {1, cfg.backend}};
  const compile::TransparentAok aok;
  const compile::PlaintextFhe fhe;
  const Rng root(cfg.seed);
  Rng rng = root.fork("fs");
  const compile::FsRun run = compile::fs_v2_prove(scheme, aok, fhe, {}, rng);
  const Bytes proof = run.proof.bytes();
  rep.eq("honest_verifies", compile::fs_v2_verify(scheme, aok, fhe, run.setup, compile::FsProof::from_bytes(proof)), 1.0);
  const uint64_t trials = cfg.trials_or(100);
  uint64_t rejected = 0;
  Rng tr = root.fork("tamper");
  for (uint64_t t = 0; t < trials; ++t) rejected += !compile::fs_v2_verify(scheme, aok, fhe, run.setup, tamper(run.proof, tr));
  rep.eq("tampered_rejected", static_cast<double>(rejected), static_cast<double>(trials));
  rep.data["proof_bytes"] = proof.size();
  rep.data["challenges"] = run.proof.s.size();
  if (!cfg.transcript_path.empty()) save_transcript(cfg.transcript_path, proof);
}

// Compiled runs: round counts, honest acceptance, digest sizes, and the per-round size
// report of the last transcript.
inline void run_compile(const ExperimentConfig& cfg, Report& rep) {
  if (cfg.version != 1 && cfg.version != 2) throw ConfigError("--version must be 1 or 2");
  if (cfg.fs) {
    if (cfg.version != 2) throw ConfigError("--fs applies to --version 2");
    run_fs(cfg, rep);
    return;
  }
  const compile::SemiSuccinct scheme{instance_for(cfg), {1, cfg.backend}};
  const compile::TransparentAok aok;
  const compile::PlaintextFhe fhe;
  const Rng root(cfg.seed);
  Rng rng = root.fork("compile", cfg.version);
  const uint64_t trials = cfg.trials_or(20);
  const unsigned want = cfg.version == 1 ? 12 : 8;
  uint64_t accepts = 0, schedule = 0, digests = 0;
  compile::CompiledTranscript last;
  for (uint64_t t = 0; t < trials; ++t) {
    last = cfg.version == 1 ? compile::compile_v1_run(scheme, aok, {}, rng) : compile::compile_v2_run(scheme, aok, fhe, {}, rng);
    accepts += last.verdict;
    schedule += last.rounds() == want;
    const auto* y = last.find(compile::tag::kCommitDigest);
    const auto* z = last.find(compile::tag::kOpeningDigest);
    digests += y && z && y->payload.size() == 32 && z->payload.size() == 32;
  }
  rep.eq("honest_accepts", static_cast<double>(accepts), static_cast<double>(trials));
  rep.eq("rounds_as_scheduled", static_cast<double>(schedule), static_cast<double>(trials));
  rep.eq("digests_32_bytes", static_cast<double>(digests), static_cast<double>(trials));
  rep.data["sizes"] = size_json(last);
  if (!cfg.transcript_path.empty()) save_transcript(cfg.transcript_path, last.bytes());
}

// Basis bits C(i) = PRF_s(i) for i < n, and GGM puncturing checked exhaustively at width l.
inline void run_prf(const ExperimentConfig& cfg, Report& rep) {
  if (cfg.n == 0 || cfg.n > (size_t{1} << 16)) throw ConfigError("prf: --n must be in [1, 65536]");
  if (cfg.ell == 0 || cfg.ell > 12) throw ConfigError("prf: --l must be in [1, 12] for the puncture sweep");
  const Rng root(cfg.seed);
  Rng rng = root.fork("prf");
  const pprf::Seed seed = random_digest(rng);
  const batchkeys::BasisSpec c = delegate::basis_from_prf(seed, cfg.n);
  std::string bits;
  uint64_t ones = 0;
  for (size_t i = 0; i < cfg.n; ++i) {
    bits.push_back(c(i) ? '1' : '0');
    ones += c(i);
  }
  const uint64_t size = uint64_t{1} << cfg.ell;
  uint64_t agree = 0, total = 0, refused = 0;
  for (uint64_t p = 0; p < size; ++p) {
    const pprf::PuncturedKey k = pprf::prf_puncture(seed, p, cfg.ell);
    for (uint64_t x = 0; x < size; ++x) {
      if (x == p) {
        try {
          pprf::prf_punc_eval(k, x);
        } catch (const std::domain_error&) {
          ++refused;
        }
        continue;
      }
      ++total;
      agree += pprf::prf_punc_eval(k, x) == pprf::prf_eval(seed, x, cfg.ell);
    }
  }
  rep.eq("puncture_agreement", static_cast<double>(agree), static_cast<double>(total));
  rep.eq("punctured_point_refused", static_cast<double>(refused), static_cast<double>(size));
  rep.data["basis"] = bits;
  rep.data["ones"] = ones;
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"protocol", "extract-check", "delegate", "batch", "compile", "fs", "prf"};
  return names;
}

inline Report run_command(const ExperimentConfig& cfg) {
  Report rep;
  rep.command = cfg.command;
  rep.config = cfg.to_json();
  const auto start = std::chrono::steady_clock::now();
  if (cfg.command == "protocol") {
    run_protocol(cfg, rep);
  } else if (cfg.command == "extract-check") {
    run_extract_check(cfg, rep);
  } else if (cfg.command == "delegate") {
    run_delegate(cfg, rep);
  } else if (cfg.command == "batch") {
    run_batch(cfg, rep);
  } else if (cfg.command == "compile") {
    run_compile(cfg, rep);
  } else if (cfg.command == "fs") {
    run_fs(cfg, rep);
  } else if (cfg.command == "prf") {
    run_prf(cfg, rep);
  } else {
    throw ConfigError("unknown command: " + cfg.command);
  }
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace qverify::harness
