#include "qverify/batchkeys.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace qverify::batchkeys {
namespace {

pprf::Seed seed_from(uint64_t v) {
  Rng rng(v);
  return random_digest(rng);
}

bool contains_subsequence(const Bytes& hay, const Digest& needle) {
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

// Slot keys must satisfy the rTCF contract for the mode C(i).
void expect_valid_pair(const rtcf::PublicKey& pk, const rtcf::SecretKey& sk, unsigned ell, unsigned mode_bit) {
  ASSERT_EQ(pk.ell(), ell);
  ASSERT_EQ(sk.mode(), rtcf::mode_from_bit(mode_bit));
  for (unsigned b = 0; b < 2; ++b) {
    for (uint64_t xv = 0; xv < (uint64_t{1} << ell); ++xv) {
      Bits x(xv, ell);
      Bits y = pk.eval(b, x);
      if (mode_bit == 0) {
        auto p = rtcf::invert_injective(sk, y);
        ASSERT_TRUE(p);
        EXPECT_EQ(*p, (rtcf::DomainPoint{b, x}));
      } else {
        auto c = rtcf::invert_two_to_one(sk, y);
        ASSERT_TRUE(c);
        EXPECT_EQ(b == 0 ? c->x0 : c->x1, x);
      }
    }
  }
}

TEST(PprfTest, PunctureAgreesEverywhereElseExhaustive) {
  for (unsigned width = 1; width <= 8; ++width) {
    pprf::Seed s = seed_from(width);
    for (uint64_t p = 0; p < (uint64_t{1} << width); ++p) {
      pprf::PuncturedKey k = pprf::prf_puncture(s, p, width);
      ASSERT_EQ(k.copath.size(), width);
      for (uint64_t x = 0; x < (uint64_t{1} << width); ++x) {
        if (x == p) {
          EXPECT_THROW(pprf::prf_punc_eval(k, x), std::domain_error);
        } else {
          EXPECT_EQ(pprf::prf_punc_eval(k, x), pprf::prf_eval(s, x, width));
        }
      }
    }
  }
}

TEST(PprfTest, WidthThreeSevenOfEightAgree) {
  pprf::Seed s = seed_from(99);
  pprf::PuncturedKey k = pprf::prf_puncture(s, 5, 3);
  int agree = 0;
  for (uint64_t x = 0; x < 8; ++x) {
    try {
      agree += pprf::prf_punc_eval(k, x) == pprf::prf_eval(s, x, 3);
    } catch (const std::domain_error&) {
    }
  }
  EXPECT_EQ(agree, 7);
}

TEST(PprfTest, SeedsDifferingInOneByteGiveDifferentOutputs) {
  Rng rng(7);
  int differing = 0;
  for (int t = 0; t < 100; ++t) {
    pprf::Seed a = random_digest(rng);
    pprf::Seed b = a;
    b[uniform_below(rng, 32)] ^= static_cast<uint8_t>(1 + uniform_below(rng, 255));
    bool diff = false;
    for (uint64_t x = 0; x < 8; ++x) diff |= pprf::prf_eval(a, x, 3) != pprf::prf_eval(b, x, 3);
    differing += diff;
  }
  EXPECT_EQ(differing, 100);
}

TEST(PprfTest, RejectsInputsWiderThanWidth) {
  EXPECT_THROW(pprf::prf_eval(seed_from(1), 8, 3), std::invalid_argument);
}

TEST(BasisSpecTest, Representations) {
  BasisSpec t = BasisSpec::truth_table({0, 1, 1});
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(t(1), 1u);
  EXPECT_THROW(t(3), std::out_of_range);
  EXPECT_EQ(BasisSpec::constant(4, 1).bits(), Bits::parse("1111"));
  BasisSpec p = BasisSpec::prf(seed_from(3), 16);
  EXPECT_TRUE(p.succinct());
  for (size_t i = 0; i < 16; ++i) EXPECT_EQ(p(i), pprf::prf_eval(seed_from(3), i, kIndexWidth)[0] & 1U);
}

TEST(SetupTest, TrivialModesFollowBasis) {
  Rng rng(1);
  MasterKeys k = setup(2, BasisSpec::truth_table({0, 1}), Backend::trivial, rng);
  EXPECT_EQ(k.sk.ext_sk(0).mode(), rtcf::Mode::injective);
  EXPECT_EQ(k.sk.ext_sk(1).mode(), rtcf::Mode::two_to_one);
  EXPECT_THROW(k.pk.ext_pk(2), std::out_of_range);
  EXPECT_THROW(k.sk.ext_sk(2), std::out_of_range);
}

TEST(SetupTest, CompressedDeterministicInSeed) {
  BasisSpec c = BasisSpec::truth_table({1, 0, 1, 1});
  MasterKeys a = setup_with_seed(2, c, seed_from(5));
  MasterKeys b = setup_with_seed(2, c, seed_from(5));
  EXPECT_EQ(a.pk.bytes(), b.pk.bytes());
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.pk.ext_pk(i), b.pk.ext_pk(i));
    EXPECT_EQ(a.sk.ext_sk(i), b.sk.ext_sk(i));
  }
  Rng r1(8), r2(8);
  EXPECT_EQ(setup(2, c, Backend::compressed, r1).pk.bytes(), setup(2, c, Backend::compressed, r2).pk.bytes());
}

TEST(SetupTest, CompressedMatchesIndependentRederivation) {
  const pprf::Seed s = seed_from(6);
  BasisSpec c = BasisSpec::truth_table({0, 1, 1, 0, 1, 0, 0, 1});
  MasterKeys k = setup_with_seed(3, c, s);
  for (size_t i = 0; i < 8; ++i) {
    // gen(ell, C(i); PRF_s(i)) recomputed here from the primitives.
    HashTape tape(pprf::prf_eval(s, i, kIndexWidth));
    rtcf::KeyPair expect = rtcf::gen(3, rtcf::mode_from_bit(c(i)), tape);
    EXPECT_EQ(k.pk.ext_pk(i), expect.pk);
    EXPECT_EQ(k.sk.ext_sk(i), expect.sk);
  }
}

TEST(SetupTest, SetupCorrectnessExhaustiveUpToSixteen) {
  Rng rng(9);
  for (size_t n = 1; n <= 16; ++n) {
    std::vector<uint8_t> t(n);
    for (auto& b : t) b = static_cast<uint8_t>(random_bit(rng));
    BasisSpec c = BasisSpec::truth_table(t);
    for (Backend be : {Backend::trivial, Backend::compressed}) {
      MasterKeys k = setup(2, c, be, rng);
      for (size_t i = 0; i < n; ++i) expect_valid_pair(k.pk.ext_pk(i), k.sk.ext_sk(i), 2, c(i));
    }
  }
}

TEST(ProgramTest, OverrideAndRestriction) {
  Rng rng(10);
  BasisSpec c = BasisSpec::truth_table({0, 1, 0, 1});
  rtcf::KeyPair star = rtcf::gen(2, rtcf::Mode::two_to_one, rng);
  const pprf::Seed s = seed_from(11);
  MasterKeys plain = setup_with_seed(2, c, s);
  MasterKeys prog = program_with_seed(2, c, 2, star.pk, s);
  EXPECT_EQ(prog.pk.ext_pk(2).bytes(), star.pk.bytes());
  EXPECT_THROW(prog.sk.ext_sk(2), RestrictedError);
  for (size_t j : {0, 1, 3}) {
    EXPECT_EQ(prog.pk.ext_pk(j), plain.pk.ext_pk(j));
    EXPECT_EQ(prog.sk.ext_sk(j), plain.sk.ext_sk(j));
  }
  EXPECT_THROW(program(2, c, 0, star.pk, Backend::trivial, rng), std::logic_error);
  EXPECT_THROW(program_with_seed(2, c, 4, star.pk, s), std::out_of_range);
}

TEST(ProgramTest, ProgrammingCorrectnessExhaustive) {
  Rng rng(12);
  for (size_t n = 1; n <= 16; ++n) {
    BasisSpec c = BasisSpec::constant(n, 0);
    for (size_t i = 0; i < n; ++i) {
      rtcf::KeyPair star = rtcf::gen(1, rtcf::Mode::two_to_one, rng);
      MasterKeys k = program(1, c, i, star.pk, Backend::compressed, rng);
      EXPECT_EQ(k.pk.ext_pk(i), star.pk);
      EXPECT_EQ(k.sk.restricted_index(), i);
    }
  }
}

TEST(WireFormTest, CompressedLengthInvariantAndSeedHidden) {
  size_t len = 0;
  for (size_t n : {1, 4, 16, 1000}) {
    const pprf::Seed s = seed_from(n);
    MasterKeys k = setup_with_seed(2, BasisSpec::constant(n, 1), s);
    Bytes b = k.pk.bytes();
    if (len == 0) len = b.size();
    EXPECT_EQ(b.size(), len);
    EXPECT_FALSE(contains_subsequence(b, s));
    EXPECT_EQ(b[0], static_cast<uint8_t>(Backend::compressed));
  }
  EXPECT_EQ(len, 1u + 1u + 4u + 32u + 1u);
}

TEST(WireFormTest, TrivialLengthLinearInN) {
  Rng rng(13);
  for (size_t n : {1, 4, 16}) {
    MasterKeys k = setup(2, BasisSpec::constant(n, 0), Backend::trivial, rng);
    EXPECT_EQ(k.pk.bytes().size(), 1u + 4u + n * (2u + 8u));
  }
}

}  // namespace
}  // namespace qverify::batchkeys
