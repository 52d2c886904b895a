#include "qverify/mproto.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace qverify::mproto {
namespace {

using qsim::cplx;
using qsim::PureState;
using qsim::RegisterLayout;

rtcf::KeyPair toy_two_to_one() {
  return rtcf::make_key(2, rtcf::Mode::two_to_one, rtcf::identity_permutation(2), Bits::parse("01"));
}
rtcf::KeyPair toy_injective() { return rtcf::make_key(2, rtcf::Mode::injective, rtcf::identity_permutation(3)); }

MasterKeys keys_from(std::vector<rtcf::KeyPair> pairs, const BasisSpec& c) {
  const unsigned ell = pairs[0].pk.ell();
  return batchkeys::KeyFactory::trivial(ell, c, std::move(pairs));
}

PureState plus_state() {
  RegisterLayout l;
  l.push("S", 1);
  const double r = 1.0 / std::sqrt(2.0);
  return PureState(l, {r, r});
}
PureState basis_state(unsigned n, uint64_t v) {
  RegisterLayout l;
  l.push("S", n);
  return PureState::basis(l, v);
}
PureState random_input(unsigned n, Rng& rng) {
  RegisterLayout l;
  l.push("S", n);
  return qsim::random_state(l, rng);
}

const CommitBranch& branch_with(const std::vector<CommitBranch>& bs, const CommitMessage& y) {
  for (const auto& b : bs) {
    if (b.y == y) return b;
  }
  throw std::logic_error("no such branch");
}

TEST(MprotoGenTest, ModesFollowBasisAndSeed) {
  ProtocolParams p{2, 2, batchkeys::Backend::trivial, 0};
  Rng rng(1);
  MasterKeys k = mp_gen(p, BasisSpec::truth_table({0, 1}), rng);
  EXPECT_EQ(k.sk.ext_sk(0).mode(), rtcf::Mode::injective);
  EXPECT_EQ(k.sk.ext_sk(1).mode(), rtcf::Mode::two_to_one);
  ProtocolParams p1{1, 2, batchkeys::Backend::compressed, 0};
  Rng a(4), b(4);
  EXPECT_EQ(mp_gen(p1, BasisSpec::constant(1, 1), a).pk.bytes(), mp_gen(p1, BasisSpec::constant(1, 1), b).pk.bytes());
  Rng c(4);
  EXPECT_EQ(mp_gen(p1, BasisSpec::constant(1, 1), c).sk.ext_sk(0).mode(), rtcf::Mode::two_to_one);
  EXPECT_THROW(mp_gen(p, BasisSpec::constant(3, 0), rng), std::invalid_argument);
  EXPECT_THROW(validate(ProtocolParams{7, 2, batchkeys::Backend::trivial, 0}), std::length_error);
}

TEST(MprotoCommitTest, TwoToOneSpecExample) {
  MasterKeys k = keys_from({toy_two_to_one()}, BasisSpec::constant(1, 1));
  auto bs = commit_branches(public_slots(k.pk), plus_state());
  // Image of the toy key is the four strings with padding bit 0, each reached twice from 8 equal-weight points.
  ASSERT_EQ(bs.size(), 4u);
  for (const auto& b : bs) EXPECT_NEAR(b.probability, 0.25, 1e-12);
  const CommitBranch& br = branch_with(bs, CommitMessage{{Bits::parse("010")}});
  const double r = 1.0 / std::sqrt(2.0);
  for (uint64_t idx = 0; idx < 8; ++idx) {
    const bool on = idx == rtcf::domain_index(0, Bits::parse("01")) || idx == rtcf::domain_index(1, Bits::parse("00"));
    EXPECT_NEAR(std::abs(br.state[idx] - cplx(on ? r : 0.0, 0.0)), 0.0, 1e-12) << idx;
  }
}

TEST(MprotoCommitTest, InjectiveCollapsesInputQubit) {
  MasterKeys k = keys_from({toy_injective()}, BasisSpec::constant(1, 0));
  auto bs = commit_branches(public_slots(k.pk), basis_state(1, 1));
  ASSERT_EQ(bs.size(), 4u);
  for (const auto& b : bs) {
    auto p = rtcf::invert_injective(k.sk.ext_sk(0), b.y.y[0]);
    ASSERT_TRUE(p);
    EXPECT_EQ(p->b, 1u);
    EXPECT_NEAR(std::norm(b.state[rtcf::domain_index(1, p->x)]), 1.0, 1e-12);
  }
}

TEST(MprotoCommitTest, SampledCommitMatchesBranchAndWidthChecked) {
  MasterKeys k = keys_from({toy_two_to_one()}, BasisSpec::constant(1, 1));
  Rng rng(2);
  auto [y, post] = mp_commit(k.pk, plus_state(), rng);
  auto bs = commit_branches(public_slots(k.pk), plus_state());
  const CommitBranch& br = branch_with(bs, y);
  EXPECT_NEAR(std::abs(post.inner(br.state)), 1.0, 1e-12);
  EXPECT_THROW(mp_commit(k.pk, basis_state(2, 0), rng), std::invalid_argument);
}

TEST(MprotoOpenTest, SpecExampleDistributions) {
  MasterKeys k = keys_from({toy_two_to_one()}, BasisSpec::constant(1, 1));
  auto bs = commit_branches(public_slots(k.pk), plus_state());
  const CommitBranch& br = branch_with(bs, CommitMessage{{Bits::parse("010")}});
  OutcomeDistribution std_basis = opening_distribution(br.state, 0, 1);
  EXPECT_NEAR(std_basis.at(Bits(rtcf::domain_index(0, Bits::parse("01")), 3)), 0.5, 1e-12);
  EXPECT_NEAR(std_basis.at(Bits(rtcf::domain_index(1, Bits::parse("00")), 3)), 0.5, 1e-12);

  // Hadamard amplitude of (|p⟩+|q⟩)/√2 at d is ((-1)^{d·p} + (-1)^{d·q}) / 4.
  OutcomeDistribution had = opening_distribution(br.state, 1, 1);
  const Bits p(rtcf::domain_index(0, Bits::parse("01")), 3), q(rtcf::domain_index(1, Bits::parse("00")), 3);
  for (uint64_t d = 0; d < 8; ++d) {
    const double amp = ((dot(Bits(d, 3), p) ? -1.0 : 1.0) + (dot(Bits(d, 3), q) ? -1.0 : 1.0)) / 4.0;
    EXPECT_NEAR(had[d], amp * amp, 1e-12) << d;
    if (had[d] > 1e-12) {
      EXPECT_EQ(rtcf::hardcore_bit(Bits::parse("01"), Bits::parse("00"), Bits(d, 3)), 0u);
    }
  }

  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    Opening z = mp_open(br.state, 0, 1, 2, rng);
    const auto& pt = std::get<TestOpening>(z).points.at(0);
    EXPECT_TRUE(pt == (rtcf::DomainPoint{0, Bits::parse("01")}) || pt == (rtcf::DomainPoint{1, Bits::parse("00")}));
  }
}

TEST(MprotoOpenTest, InjectiveTestOpeningIsThePreimage) {
  MasterKeys k = keys_from({toy_injective()}, BasisSpec::constant(1, 0));
  Rng rng(4);
  auto [y, post] = mp_commit(k.pk, plus_state(), rng);
  Opening z = mp_open(post, 0, 1, 2, rng);
  EXPECT_EQ(std::get<TestOpening>(z).points[0], *rtcf::invert_injective(k.sk.ext_sk(0), y.y[0]));
}

TEST(MprotoTestTest, AcceptsHonestRejectsCorruption) {
  Rng rng(5);
  ProtocolParams p{3, 2, batchkeys::Backend::trivial, 0};
  MasterKeys k = mp_gen(p, BasisSpec::truth_table({0, 1, 1}), rng);
  auto [y, post] = mp_commit(k.pk, random_input(3, rng), rng);
  Opening z = mp_open(post, 0, 3, 2, rng);
  EXPECT_TRUE(mp_test(k.pk, y, z));
  for (size_t slot = 0; slot < 3; ++slot) {
    TestOpening bad = std::get<TestOpening>(z);
    bad.points[slot].x = bad.points[slot].x ^ Bits::unit(0, 2);
    EXPECT_FALSE(mp_test(k.pk, y, bad)) << slot;
  }
  EXPECT_THROW(mp_test(k.pk, y, MeasureOpening{}), ProtocolError);
  TestOpening short_z = std::get<TestOpening>(z);
  short_z.points.pop_back();
  EXPECT_THROW(mp_test(k.pk, y, short_z), ProtocolError);
}

TEST(MprotoTestTest, CompletenessExactUpToThreeSlots) {
  Rng rng(6);
  for (unsigned n = 1; n <= 3; ++n) {
    for (int t = 0; t < 3; ++t) {
      ProtocolParams p{n, 2, batchkeys::Backend::trivial, 0};
      std::vector<uint8_t> c(n);
      for (auto& b : c) b = static_cast<uint8_t>(random_bit(rng));
      MasterKeys k = mp_gen(p, BasisSpec::truth_table(c), rng);
      auto pks = public_slots(k.pk);
      EXPECT_EQ(test_acceptance(pks, commit_branches(pks, random_input(n, rng))), 1.0);
    }
  }
}

TEST(MprotoOutTest, HonestDeterministicCases) {
  Rng rng(7);
  MasterKeys inj = keys_from({toy_injective()}, BasisSpec::constant(1, 0));
  auto [y0, post0] = mp_commit(inj.pk, basis_state(1, 0), rng);
  for (int t = 0; t < 20; ++t) {
    EXPECT_EQ(mp_out(inj.sk, y0, mp_open(post0, 1, 1, 2, rng), BasisSpec::constant(1, 0), rng), Bits::parse("0"));
  }
  MasterKeys tt = keys_from({toy_two_to_one()}, BasisSpec::constant(1, 1));
  SlotKeys sk = slot_keys(tt);
  OutcomeDistribution d = output_distribution(sk, BasisSpec::constant(1, 1), commit_branches(sk.pk, plus_state()));
  EXPECT_NEAR(d.at(Bits::parse("0")), 1.0, 1e-12);
  EXPECT_THROW(mp_out(tt.sk, y0, TestOpening{}, BasisSpec::constant(1, 1), rng), ProtocolError);
}

TEST(MprotoOutTest, MalformedCommitmentIsAnError) {
  Rng rng(8);
  MasterKeys tt = keys_from({toy_two_to_one()}, BasisSpec::constant(1, 1));
  // Padding bit set: outside the two-to-one image.
  CommitMessage bad{{Bits::parse("001")}};
  EXPECT_THROW(mp_out(tt.sk, bad, MeasureOpening{{Bits::parse("000")}}, BasisSpec::constant(1, 1), rng), ProtocolError);
}

TEST(MprotoOutTest, RejectingGoodHookGivesFairCoins) {
  Rng rng(9);
  MasterKeys tt = keys_from({toy_two_to_one(), toy_two_to_one()}, BasisSpec::constant(2, 1));
  const rtcf::GoodPredicate none = [](Bits, Bits, Bits) { return false; };
  RegisterLayout l;
  l.push("S", 2);
  auto [y, post] = mp_commit(tt.pk, PureState::basis(l, 0), rng);
  const uint64_t trials = 10000;
  uint64_t ones[2] = {0, 0};
  for (uint64_t t = 0; t < trials; ++t) {
    Bits m = mp_out(tt.sk, y, mp_open(post, 1, 2, 2, rng), BasisSpec::constant(2, 1), rng, none);
    ones[0] += m[0];
    ones[1] += m[1];
  }
  for (uint64_t c : ones) EXPECT_LE(std::abs(static_cast<double>(c) / trials - 0.5), four_sigma(0.5, trials));
  SlotKeys sk = slot_keys(tt);
  OutcomeDistribution exact = output_distribution(sk, BasisSpec::constant(2, 1), commit_branches(sk.pk, PureState::basis(l, 0)), {}, none);
  EXPECT_LE(tv_distance(exact, OutcomeDistribution::uniform(2)), 1e-12);
}

TEST(MprotoOutTest, MeasurementCompletenessAgainstIdealMeasurement) {
  Rng rng(10);
  for (uint64_t h = 0; h < 4; ++h) {
    BasisSpec c = BasisSpec::from_bits(Bits(h, 2));
    for (int t = 0; t < 4; ++t) {
      MasterKeys k = mp_gen(ProtocolParams{2, 2, batchkeys::Backend::trivial, 0}, c, rng);
      SlotKeys sk = slot_keys(k);
      PureState sigma = random_input(2, rng);
      OutcomeDistribution got = output_distribution(sk, c, commit_branches(sk.pk, sigma));
      EXPECT_LE(tv_distance(got, qsim::measure_bases(sigma, "S", Bits(h, 2))), 1e-9) << h;
    }
  }
}

TEST(MprotoOutTest, SampledOutputMatchesExactDistribution) {
  Rng rng(11);
  BasisSpec c = BasisSpec::truth_table({1, 0});
  MasterKeys k = mp_gen(ProtocolParams{2, 1, batchkeys::Backend::compressed, 0}, c, rng);
  PureState sigma = random_input(2, rng);
  SlotKeys sk = slot_keys(k);
  OutcomeDistribution exact = output_distribution(sk, c, commit_branches(sk.pk, sigma));
  const uint64_t trials = 4000;
  std::vector<uint64_t> counts(4, 0);
  for (uint64_t t = 0; t < trials; ++t) {
    auto [y, post] = mp_commit(k.pk, sigma, rng);
    ++counts[mp_out(k.sk, y, mp_open(post, 1, 2, 1, rng), c, rng).value];
  }
  for (uint64_t o = 0; o < 4; ++o) {
    EXPECT_LE(std::abs(static_cast<double>(counts[o]) / trials - exact[o]), four_sigma(exact[o], trials) + 1e-12) << o;
  }
}

TEST(MprotoWireTest, OpeningAndCommitRoundTrip) {
  CommitMessage y{{Bits::parse("010"), Bits::parse("111")}};
  EXPECT_EQ(CommitMessage::from_bytes(y.bytes()), y);
  Opening t = TestOpening{{{1, Bits::parse("01")}, {0, Bits::parse("11")}}};
  Opening m = MeasureOpening{{Bits::parse("101"), Bits::parse("000")}};
  EXPECT_EQ(opening_from_bytes(opening_bytes(t)), t);
  EXPECT_EQ(opening_from_bytes(opening_bytes(m)), m);
  Bytes trunc = y.bytes();
  trunc.pop_back();
  EXPECT_THROW(CommitMessage::from_bytes(trunc), ProtocolError);
  Bytes badkind = opening_bytes(m);
  badkind[0] = 7;
  EXPECT_THROW(opening_from_bytes(badkind), ProtocolError);
}

TEST(MprotoTranscriptTest, DeterministicAndRoundTrips) {
  ProtocolParams p{2, 2, batchkeys::Backend::compressed, 0};
  BasisSpec c = BasisSpec::truth_table({1, 0});
  RegisterLayout l;
  l.push("S", 2);
  PureState sigma = PureState::basis(l, 2);
  for (uint64_t seed = 0; seed < 8; ++seed) {
    Rng a(seed), b(seed);
    Transcript ta = run_session(p, c, sigma, a);
    Transcript tb = run_session(p, c, sigma, b);
    Bytes bytes = ta.bytes();
    EXPECT_EQ(bytes, tb.bytes());
    EXPECT_EQ(bytes[0], wire::tag::kPublicKey);
    EXPECT_EQ(Transcript::from_bytes(bytes), ta);
    EXPECT_EQ(ta.verdict.has_value(), ta.c == 0);
    EXPECT_EQ(ta.m.has_value(), ta.c == 1);
    // Basis state with qubit 1 set; slot 1 is measured in the standard basis.
    if (ta.c == 0) {
      EXPECT_TRUE(*ta.verdict);
    } else {
      EXPECT_EQ((*ta.m)[1], 1u);
    }
  }
}

TEST(MprotoTranscriptTest, RejectsInconsistentFrames) {
  Rng rng(12);
  Transcript t = run_session(ProtocolParams{1, 1, batchkeys::Backend::trivial, 0}, BasisSpec::constant(1, 0),
                             basis_state(1, 0), rng);
  auto frames = t.frames();
  frames[2].payload[0] ^= 1;
  EXPECT_THROW(Transcript::from_bytes(wire::encode_frames(frames)), ProtocolError);
  frames = t.frames();
  frames.pop_back();
  EXPECT_THROW(Transcript::from_bytes(wire::encode_frames(frames)), ProtocolError);
}

}  // namespace
}  // namespace qverify::mproto
