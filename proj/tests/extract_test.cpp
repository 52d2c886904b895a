#include "qverify/extract.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace qverify::extract {
namespace {

using batchkeys::Backend;
using batchkeys::BasisSpec;
using qsim::PauliKind;

PureState input(unsigned n, qsim::Vector amps) {
  RegisterLayout l;
  l.push("S", n);
  return PureState(l, std::move(amps), 1e-10);
}
PureState random_input(unsigned n, Rng& rng) {
  RegisterLayout l;
  l.push("S", n);
  return qsim::random_state(l, rng);
}
const double kR = 1.0 / std::sqrt(2.0);

Matrix dense(const qsim::BinaryObservable& o) { return o.op().dense(); }
double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

TEST(SampTest, HonestStateIsCommitPostStateWithAncillas) {
  Rng rng(1);
  PureState sigma = input(1, {kR, kR});
  SlotKeys keys = sim_gen(1, 2, Backend::trivial, rng);
  auto commits = mproto::commit_branches(keys.pk, sigma);
  auto samples = samp_branches(honest_prover(sigma, 2), keys);
  ASSERT_EQ(samples.size(), commits.size());
  RegisterLayout ul;
  ul.push("U0", 1);
  for (size_t k = 0; k < samples.size(); ++k) {
    EXPECT_EQ(samples[k].y, commits[k].y);
    EXPECT_NEAR(samples[k].probability, commits[k].probability, 1e-12);
    PureState expect = commits[k].state.tensor(qsim::alloc(ul));
    EXPECT_NEAR(std::abs(samples[k].psi.inner(expect)), 1.0, 1e-12);
  }
  Sample one = samp(honest_prover(sigma, 2), Backend::compressed, rng);
  EXPECT_EQ(one.obs.n(), 1u);
}

TEST(ObservableTest, InvolutionsAndCommutationForRandomAttack) {
  Rng rng(2);
  MaliciousProver p = random_prover(2, 1, 1, rng);
  SlotKeys keys = sim_gen(2, 1, Backend::trivial, rng);
  for (const auto& s : samp_branches(p, keys)) {
    const Matrix id = Matrix::Identity(int64_t{1} << s.obs.layout.total_width(), int64_t{1} << s.obs.layout.total_width());
    std::vector<Matrix> x, z;
    for (size_t i = 0; i < 2; ++i) {
      x.push_back(dense(s.obs.x[i]));
      z.push_back(dense(s.obs.z[i]));
      EXPECT_LE(max_abs(x[i] * x[i] - id), 1e-10);
      EXPECT_LE(max_abs(z[i] * z[i] - id), 1e-10);
      EXPECT_LE(max_abs(z[i] - dense(qsim::pauli_parity(s.obs.layout, PauliKind::z, Bits::unit(0, 2), mproto::z_reg(i)))), 0.0);
    }
    EXPECT_LE(max_abs(x[0] * x[1] - x[1] * x[0]), 1e-10);
    EXPECT_LE(max_abs(z[0] * z[1] - z[1] * z[0]), 1e-10);
  }
}

TEST(ObservableTest, CrossSlotCommutationForProductAttack) {
  Rng rng(3);
  const unsigned ell = 1;
  Matrix u0 = qsim::random_unitary(4, rng), u1 = qsim::random_unitary(4, rng);
  Matrix product = qsim::gates::kron(u1, u0);
  MaliciousProver p = honest_prover(random_input(2, rng), ell);
  p.attack = [product](const std::vector<rtcf::PublicKey>&, const CommitMessage&) { return product; };
  SlotKeys keys = sim_gen(2, ell, Backend::trivial, rng);
  for (const auto& s : samp_branches(p, keys)) {
    for (size_t i = 0; i < 2; ++i) {
      for (size_t j = 0; j < 2; ++j) {
        if (i == j) continue;
        Matrix zi = dense(s.obs.z[i]), xj = dense(s.obs.x[j]);
        EXPECT_LE(max_abs(zi * xj - xj * zi), 1e-9);
      }
    }
  }
}

TEST(ProjectorTest, CompletenessOrthogonalityIdempotence) {
  Rng rng(4);
  MaliciousProver p = random_prover(2, 1, 0, rng);
  SlotKeys keys = sim_gen(2, 1, Backend::trivial, rng);
  Sample s = samp_branches(p, keys).front();
  const std::vector<unsigned> r = {0, 1};
  const int64_t d = int64_t{1} << s.obs.layout.total_width();
  Matrix sum = Matrix::Zero(d, d);
  std::vector<Matrix> ps;
  for (uint64_t u = 0; u < 4; ++u) {
    ps.push_back(proj(s.obs, PauliKind::x, r, Bits(u, 2)).dense());
    sum += ps.back();
    EXPECT_LE(max_abs(ps.back() * ps.back() - ps.back()), 1e-9);
  }
  EXPECT_LE(max_abs(sum - Matrix::Identity(d, d)), 1e-9);
  for (size_t a = 0; a < 4; ++a) {
    for (size_t b = 0; b < 4; ++b) {
      if (a != b) {
        EXPECT_LE(max_abs(ps[a] * ps[b]), 1e-9);
      }
    }
  }
  EXPECT_LE(max_abs(dense(parity_obs(s.obs, PauliKind::x, Bits(0, 2))) - Matrix::Identity(d, d)), 0.0);
  EXPECT_THROW(proj(s.obs, PauliKind::x, r, Bits(0, 1)), std::invalid_argument);
}

TEST(ProjectorTest, GenuinePaulisMatchDenseProjectors) {
  ObservableSet g = genuine_paulis(3);
  const std::vector<unsigned> r = {0, 2};
  for (uint64_t u = 0; u < 4; ++u) {
    EXPECT_LE(max_abs(proj(g, PauliKind::x, r, Bits(u, 2)).dense() - pauli_projector(3, PauliKind::x, r, Bits(u, 2))), 1e-15);
    EXPECT_LE(max_abs(proj(g, PauliKind::z, r, Bits(u, 2)).dense() - pauli_projector(3, PauliKind::z, r, Bits(u, 2))), 1e-15);
  }
}

TEST(DistOutTest, SpecExamples) {
  Rng rng(5);
  BasisSpec h01 = BasisSpec::from_bits(Bits::parse("01"));
  // σ = |0⟩ ⊗ |+⟩ with qubit 0 in |0⟩.
  PureState zero_plus = input(2, {kR, 0.0, kR, 0.0});
  SlotKeys k01 = sample_keys(2, 2, h01, Backend::trivial, rng);
  EXPECT_NEAR(dist_out(honest_prover(zero_plus, 2), k01, h01).at(Bits::parse("00")), 1.0, 1e-12);

  BasisSpec h00 = BasisSpec::constant(2, 0);
  PureState bell = input(2, {kR, 0.0, 0.0, kR});
  OutcomeDistribution d = dist_out(honest_prover(bell, 2), sample_keys(2, 2, h00, Backend::trivial, rng), h00);
  EXPECT_NEAR(d.at(Bits::parse("00")), 0.5, 1e-12);
  EXPECT_NEAR(d.at(Bits::parse("11")), 0.5, 1e-12);

  // A classical commitment to (1, x) with no superposition step.
  RegisterLayout l = mproto::z_layout(1, 2);
  MaliciousProver classical{PureState::basis(l, rtcf::domain_index(1, Bits::parse("10"))), {}, {}};
  BasisSpec h0 = BasisSpec::constant(1, 0);
  EXPECT_NEAR(dist_out(classical, sample_keys(1, 2, h0, Backend::trivial, rng), h0).at(Bits::parse("1")), 1.0, 1e-12);
}

TEST(DistTest, HonestDistributionsCoincide) {
  Rng rng(6);
  for (uint64_t hv = 0; hv < 4; ++hv) {
    Bits h(hv, 2);
    BasisSpec c = BasisSpec::from_bits(h);
    PureState sigma = random_input(2, rng);
    MaliciousProver p = honest_prover(sigma, 2);
    OutcomeDistribution ideal = qsim::measure_bases(sigma, "S", h);
    OutcomeDistribution out = dist_out(p, sample_keys(2, 2, c, Backend::trivial, rng), c);
    OutcomeDistribution dh = dist_h(p, sample_keys(2, 2, c, Backend::trivial, rng), h);
    OutcomeDistribution d21 = dist_two_to_one(p, sim_gen(2, 2, Backend::trivial, rng), h);
    EXPECT_LE(tv_distance(out, ideal), 1e-9);
    EXPECT_LE(tv_distance(dh, out), 1e-9);
    EXPECT_LE(tv_distance(d21, dh), 1e-9);
  }
  PureState zero = input(1, {1.0, 0.0});
  OutcomeDistribution u = dist_two_to_one(honest_prover(zero, 2), sim_gen(1, 2, Backend::trivial, rng), Bits::parse("1"));
  EXPECT_LE(tv_distance(u, OutcomeDistribution::uniform(1)), 1e-12);
  EXPECT_THROW(dist_two_to_one(honest_prover(zero, 2), sample_keys(1, 2, BasisSpec::constant(1, 0), Backend::trivial, rng),
                               Bits::parse("0")),
               std::invalid_argument);
}

TEST(DistTest, ObservableFormMatchesOperationalSampling) {
  Rng rng(7);
  // Rejects every d whose second bit is set, so the U ancilla branch is exercised.
  const rtcf::GoodPredicate partial = [](Bits, Bits, Bits d) { return d[1] == 0; };
  for (int t = 0; t < 4; ++t) {
    MaliciousProver p = random_prover(2, 1, 1, rng);
    SlotKeys keys = sim_gen(2, 1, Backend::trivial, rng);
    for (const rtcf::GoodPredicate& g : {rtcf::GoodPredicate(rtcf::toy_good), partial}) {
      auto samples = samp_branches(p, keys, g);
      for (uint64_t hv = 0; hv < 4; ++hv) {
        Bits h(hv, 2);
        OutcomeDistribution pmf = pmf_two_to_one(samples, h);
        EXPECT_TRUE(pmf.normalized());
        EXPECT_LE(tv_distance(pmf, dist_two_to_one(p, keys, h, g)), 1e-9) << hv;
      }
    }
  }
}

TEST(ExtractorTest, GenuinePaulisTeleport) {
  ObservableSet g1 = genuine_paulis(1);
  RegisterLayout q1, t1;
  q1.push("Q", 1);
  t1.push("A2", 1);
  for (const qsim::Vector& amps : {qsim::Vector{1.0, 0.0}, qsim::Vector{kR, kR}}) {
    qsim::MixedState expect = qsim::MixedState::from_pure(PureState(t1, amps));
    EXPECT_LE(qsim::trace_distance(extractor(g1, PureState(q1, amps)), expect), 1e-9);
  }
  Rng rng(8);
  for (unsigned n = 1; n <= 3; ++n) {
    ObservableSet g = genuine_paulis(n);
    RegisterLayout q, a2;
    q.push("Q", n);
    a2.push("A2", n);
    for (int t = 0; t < 3; ++t) {
      PureState psi = qsim::random_state(q, rng);
      PureState target(a2, psi.amplitudes());
      EXPECT_LE(qsim::trace_distance(extractor(g, psi), qsim::MixedState::from_pure(target)), 1e-9);
    }
  }
}

TEST(ExtractorTest, HonestProverYieldsLogicalQubit) {
  Rng rng(9);
  PureState sigma = random_input(1, rng);
  RegisterLayout a2;
  a2.push("A2", 1);
  qsim::MixedState expect = qsim::MixedState::from_pure(PureState(a2, sigma.amplitudes()));
  for (const auto& s : samp_branches(honest_prover(sigma, 1), sim_gen(1, 1, Backend::trivial, rng))) {
    EXPECT_LE(qsim::trace_distance(extractor(s.obs, s.psi), expect), 1e-9);
  }
}

TEST(ClaimTest, SpecExamples) {
  ObservableSet g = genuine_paulis(1);
  RegisterLayout q;
  q.push("Q", 1);
  PureState zero = PureState::basis(q, 0);
  ClaimSides c = verify_extracted_claim(g, zero, Bits::parse("0"), Bits(0, 0), Bits::parse("0"));
  EXPECT_NEAR(c.lhs, 1.0, 1e-12);
  EXPECT_NEAR(c.rhs, 1.0, 1e-12);

  Rng rng(10);
  for (const auto& s : samp_branches(honest_prover(input(1, {1.0, 0.0}), 2), sim_gen(1, 2, Backend::trivial, rng))) {
    for (uint64_t u = 0; u < 2; ++u) {
      ClaimSides cs = verify_extracted_claim(s.obs, s.psi, Bits::parse("1"), Bits(u, 1), Bits(0, 0));
      EXPECT_NEAR(cs.lhs, 0.5, 1e-12);
      EXPECT_NEAR(cs.rhs, 0.5, 1e-12);
    }
  }
}

TEST(ClaimTest, HoldsForRandomAttacks) {
  Rng rng(11);
  for (int t = 0; t < 3; ++t) {
    MaliciousProver p = random_prover(2, 1, 1, rng);
    SlotKeys keys = sim_gen(2, 1, Backend::trivial, rng);
    Sample s = samp_branches(p, keys).front();
    qsim::MixedState tau = extractor(s.obs, s.psi);
    for (uint64_t hv = 0; hv < 4; ++hv) {
      Bits h(hv, 2);
      BasisSplit split(h);
      for (uint64_t m = 0; m < 4; ++m) {
        ClaimSides c = claim_sides(s.obs, s.psi, tau, h, split.u_of(Bits(m, 2)), split.v_of(Bits(m, 2)));
        EXPECT_NEAR(c.lhs, c.rhs, 1e-9) << hv << " " << m;
      }
    }
  }
}

TEST(ClaimTest, ExtractedDistributionMatchesMassForm) {
  Rng rng(12);
  MaliciousProver p = random_prover(2, 1, 0, rng);
  auto samples = samp_branches(p, sim_gen(2, 1, Backend::trivial, rng));
  for (uint64_t hv = 0; hv < 4; ++hv) {
    Bits h(hv, 2);
    EXPECT_LE(tv_distance(dist_ext(samples, h), pmf_ext(samples, h)), 1e-9);
  }
}

TEST(HybridTest, StructuralIdentitiesForRandomAttacks) {
  Rng rng(13);
  MaliciousProver p = random_prover(2, 1, 1, rng);
  auto samples = samp_branches(p, sim_gen(2, 1, Backend::trivial, rng));
  const Bits h = Bits::parse("11");
  EXPECT_LE(tv_distance(hybrid(samples, h, 0), pmf_two_to_one(samples, h)), 1e-9);
  EXPECT_LE(tv_distance(hybrid(samples, h, 2), pmf_ext(samples, h)), 1e-9);
  for (unsigned j = 1; j <= 2; ++j) {
    OutcomeDistribution h0 = hybrid_b(samples, h, j, 0), h1 = hybrid_b(samples, h, j, 1), hj = hybrid(samples, h, j);
    EXPECT_LE(tv_distance(h0, hybrid(samples, h, j - 1)), 1e-9);
    for (uint64_t m = 0; m < 4; ++m) EXPECT_NEAR(hj[m], 0.5 * (h0[m] + h1[m]), 1e-9);
  }
  EXPECT_THROW(hybrid(samples, h, 3), std::out_of_range);
  EXPECT_THROW(hybrid_b(samples, h, 0, 1), std::out_of_range);
}

TEST(HybridTest, HonestChainIsConstant) {
  Rng rng(14);
  auto samples = samp_branches(honest_prover(random_input(2, rng), 1), sim_gen(2, 1, Backend::trivial, rng));
  for (uint64_t hv = 0; hv < 4; ++hv) {
    Bits h(hv, 2);
    const unsigned rn = h.popcount();
    OutcomeDistribution first = hybrid(samples, h, 0);
    for (unsigned j = 1; j <= rn; ++j) EXPECT_LE(tv_distance(hybrid(samples, h, j), first), 1e-9);
    for (unsigned j = 1; j <= rn; ++j) {
      Matrix m = Matrix::Identity(2, 2) * 0.5;
      m(0, 0) = 1.0;
      auto [s0, s1] = signed_statistic(hybrid_b(samples, h, j, 0), hybrid_b(samples, h, j, 1), m, BasisSplit(h).r[j - 1]);
      EXPECT_NEAR(s0, s1, 1e-9);
    }
  }
}

TEST(SignedStatisticTest, ClosedFormsAndPsdCheck) {
  const Matrix id = Matrix::Identity(2, 2);
  EXPECT_NEAR(signed_statistic(OutcomeDistribution::uniform(2), id, 1), 0.0, 1e-15);
  OutcomeDistribution fixed(2);
  fixed.add(0, 0.5);
  fixed.add(1, 0.5);  // bit 1 always 0
  EXPECT_NEAR(signed_statistic(fixed, id, 1), 1.0, 1e-15);
  Matrix bad = id * 2.0;
  EXPECT_THROW(signed_statistic(fixed, bad, 1), std::invalid_argument);
  Matrix neg = -id;
  EXPECT_THROW(signed_statistic(fixed, neg, 0), std::invalid_argument);
}

}  // namespace
}  // namespace qverify::extract
