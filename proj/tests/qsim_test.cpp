#include "qverify/qsim.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace qverify::qsim {
namespace {

const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

PureState plus_state() { return PureState(RegisterLayout{{"a", 1}}, {kInvSqrt2, kInvSqrt2}); }
PureState minus_state() { return PureState(RegisterLayout{{"a", 1}}, {kInvSqrt2, -kInvSqrt2}); }

PureState bell_state() {
  return PureState(RegisterLayout{{"a", 1}, {"b", 1}}, {kInvSqrt2, 0.0, 0.0, kInvSqrt2});
}

void expect_state_near(const PureState& a, const Vector& b, double tol = 1e-12) {
  ASSERT_EQ(a.amplitudes().size(), b.size());
  for (size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(std::abs(a[i] - b[i]), 0.0, tol) << "index " << i;
}

TEST(RegisterLayoutTest, OffsetsFollowDeclarationOrder) {
  RegisterLayout l{{"w", 2}, {"x", 3}};
  EXPECT_EQ(l.at("w").offset, 0u);
  EXPECT_EQ(l.at("x").offset, 2u);
  EXPECT_EQ(l.total_width(), 5u);
  EXPECT_EQ(l.qubits(std::vector<std::string>{"x", "w"}), (std::vector<unsigned>{2, 3, 4, 0, 1}));
}

TEST(RegisterLayoutTest, RejectsDuplicatesZeroWidthAndOverflow) {
  EXPECT_THROW((RegisterLayout{{"a", 1}, {"a", 1}}), std::invalid_argument);
  EXPECT_THROW((RegisterLayout{{"a", 0}}), std::invalid_argument);
  EXPECT_THROW((RegisterLayout{{"a", 20}, {"b", 7}}), std::length_error);
  EXPECT_NO_THROW((RegisterLayout{{"a", 20}, {"b", 6}}));
}

TEST(AllocTest, ZeroState) {
  PureState s = alloc(RegisterLayout{{"a", 1}});
  expect_state_near(s, {1.0, 0.0});
  PureState t = alloc(RegisterLayout{{"a", 1}, {"b", 1}});
  EXPECT_EQ(t[0], cplx(1.0, 0.0));
  EXPECT_DOUBLE_EQ(t.norm2(), 1.0);
}

TEST(ApplyUnitaryTest, HadamardIdentityAndInvolution) {
  PureState s = alloc(RegisterLayout{{"a", 1}});
  expect_state_near(apply_unitary(s, gates::hadamard(), {"a"}), {kInvSqrt2, kInvSqrt2});
  expect_state_near(apply_unitary(plus_state(), gates::identity(1), {"a"}), plus_state().amplitudes());
  PureState xx = apply_unitary(apply_unitary(s, gates::pauli_x(), {"a"}), gates::pauli_x(), {"a"});
  expect_state_near(xx, {1.0, 0.0});
}

TEST(ApplyUnitaryTest, RejectsNonUnitaryAndUnknownRegister) {
  PureState s = alloc(RegisterLayout{{"a", 1}});
  Matrix m(2, 2);
  m << 1, 1, 0, 1;
  EXPECT_THROW(apply_unitary(s, m, {"a"}), std::invalid_argument);
  EXPECT_THROW(apply_unitary(s, gates::pauli_x(), {"nope"}), std::invalid_argument);
}

TEST(ApplyUnitaryTest, TargetsOrderedAsListed) {
  // CNOT with control = local bit 0. Listing (b, a) makes b the control.
  Matrix cnot = Matrix::Zero(4, 4);
  cnot(0, 0) = 1;
  cnot(3, 1) = 1;
  cnot(2, 2) = 1;
  cnot(1, 3) = 1;
  PureState s = PureState::basis(RegisterLayout{{"a", 1}, {"b", 1}}, 0b10);  // a=0, b=1
  PureState t = apply_unitary(s, cnot, {"b", "a"});
  EXPECT_NEAR(std::abs(t[0b11]), 1.0, 1e-12);
}

TEST(ApplyUnitaryTest, NormPreservedUnderRandomUnitaries) {
  Rng rng(11);
  RegisterLayout l{{"a", 2}, {"b", 3}};
  PureState s = random_state(l, rng);
  for (int k = 0; k < 20; ++k) {
    Matrix u = random_unitary(4, rng);
    EXPECT_TRUE(is_unitary(u));
    s.apply(u, std::vector<unsigned>{static_cast<unsigned>(k % 5), static_cast<unsigned>((k + 2) % 5)});
    EXPECT_NEAR(s.norm2(), 1.0, 1e-10);
  }
}

TEST(MeasureBasesTest, SpecExamples) {
  PureState one = PureState::basis(RegisterLayout{{"a", 1}}, 1);
  EXPECT_NEAR(measure_bases(one, "a", Bits::parse("0"))[1], 1.0, 1e-12);
  EXPECT_NEAR(measure_bases(minus_state(), "a", Bits::parse("1"))[1], 1.0, 1e-12);
  PureState zp = PureState(RegisterLayout{{"q", 2}}, {kInvSqrt2, 0.0, kInvSqrt2, 0.0});  // |0>⊗|+>
  OutcomeDistribution d = measure_bases(zp, "q", Bits::parse("01"));
  EXPECT_NEAR(d.at(Bits::parse("00")), 1.0, 1e-12);
}

TEST(MeasureBasesTest, LengthMismatchIsAnError) {
  EXPECT_THROW(measure_bases(plus_state(), "a", Bits::parse("01")), std::invalid_argument);
}

TEST(MeasureBasesTest, SumsToOneAndMixedAgreesWithPure) {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    RegisterLayout l{{"a", 2}, {"b", 2}};
    PureState s = random_state(l, rng);
    Bits h(uniform_below(rng, 16), 4);
    OutcomeDistribution d = measure_bases(s, std::vector<std::string>{"a", "b"}, h);
    EXPECT_NEAR(d.total(), 1.0, 1e-10);
    OutcomeDistribution m = measure_bases(MixedState::from_pure(s), std::vector<std::string>{"a", "b"}, h);
    EXPECT_LE(tv_distance(d, m), 1e-12);
    // Marginal on a alone equals measuring only a.
    OutcomeDistribution da = measure_bases(s, "a", Bits(h.value & 3, 2));
    EXPECT_LE(tv_distance(d.marginal({0, 1}), da), 1e-12);
  }
}

TEST(SampleMeasureTest, SpecExamples) {
  Rng rng(3);
  PureState zero = alloc(RegisterLayout{{"a", 1}});
  auto [o, post] = sample_measure(zero, "a", Bits::parse("0"), rng);
  EXPECT_EQ(o, Bits::parse("0"));
  expect_state_near(post, {1.0, 0.0});

  for (int t = 0; t < 20; ++t) {
    auto [b, p] = sample_measure(bell_state(), "a", Bits::parse("0"), rng);
    Vector expect(4, 0.0);
    expect[b.value ? 3 : 0] = 1.0;
    expect_state_near(p, expect);
  }
}

TEST(SampleMeasureTest, FrequencyWithinFourSigma) {
  Rng rng(17);
  const uint64_t n = 100000;
  uint64_t zeros = 0;
  PureState plus = plus_state();
  for (uint64_t t = 0; t < n; ++t) zeros += sample_measure(plus, "a", Bits::parse("0"), rng).first.value == 0;
  double f = static_cast<double>(zeros) / n;
  EXPECT_NEAR(f, 0.5, 0.01);
  EXPECT_NEAR(f, 0.5, four_sigma(0.5, n));
}

TEST(ProjectTest, ZeroProbabilityIsInternalError) {
  PureState zero = alloc(RegisterLayout{{"a", 1}});
  EXPECT_THROW(project(zero, {"a"}, Bits::parse("0"), Bits::parse("1")), std::logic_error);
}

TEST(MeasureBranchesTest, SplitsBellPair) {
  auto branches = measure_branches(bell_state(), {"a"});
  ASSERT_EQ(branches.size(), 2u);
  for (const auto& br : branches) {
    EXPECT_NEAR(br.probability, 0.5, 1e-12);
    EXPECT_EQ(br.post.layout().registers().size(), 1u);
    EXPECT_NEAR(std::abs(br.post[br.outcome.value]), 1.0, 1e-12);
  }
}

TEST(PauliParityTest, SpecExamples) {
  RegisterLayout l{{"q", 2}};
  // σ_z(10) on |10>: qubit 0 is 1.
  PureState s = PureState::basis(l, 0b01);
  Vector v = s.amplitudes();
  pauli_parity(l, PauliKind::z, Bits::parse("10"), "q").apply(v);
  EXPECT_NEAR((v[0b01] + 1.0).real(), 0.0, 1e-12);

  RegisterLayout one{{"a", 1}};
  Vector z{1.0, 0.0};
  pauli_parity(one, PauliKind::x, Bits::parse("1"), "a").apply(z);
  EXPECT_NEAR(std::abs(z[1]), 1.0, 1e-12);

  Vector w = PureState::basis(l, 0b11).amplitudes();
  pauli_parity(l, PauliKind::z, Bits::parse("11"), "q").apply(w);
  EXPECT_NEAR((w[0b11] - 1.0).real(), 0.0, 1e-12);

  Matrix id = pauli_parity(l, PauliKind::x, Bits::parse("00"), "q").op().dense();
  EXPECT_LE((id - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PauliParityTest, MasksComposeByXor) {
  RegisterLayout l{{"q", 3}};
  for (PauliKind k : {PauliKind::x, PauliKind::z}) {
    for (uint64_t m1 = 0; m1 < 8; ++m1) {
      for (uint64_t m2 = 0; m2 < 8; ++m2) {
        Matrix a = pauli_parity(l, k, Bits(m1, 3), "q").op().dense();
        Matrix b = pauli_parity(l, k, Bits(m2, 3), "q").op().dense();
        Matrix c = pauli_parity(l, k, Bits(m1 ^ m2, 3), "q").op().dense();
        EXPECT_LE((a * b - c).cwiseAbs().maxCoeff(), 1e-10);
      }
    }
  }
}

TEST(PauliParityTest, XzCommutationSign) {
  RegisterLayout l{{"q", 3}};
  for (uint64_t r = 0; r < 8; ++r) {
    for (uint64_t s = 0; s < 8; ++s) {
      Matrix x = pauli_parity(l, PauliKind::x, Bits(r, 3), "q").op().dense();
      Matrix z = pauli_parity(l, PauliKind::z, Bits(s, 3), "q").op().dense();
      double sign = parity64(r & s) ? -1.0 : 1.0;
      EXPECT_LE((x * z - sign * z * x).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(BinaryObservableTest, ProjectorsIdempotentAndComplementary) {
  RegisterLayout l{{"q", 2}};
  BinaryObservable o = pauli_parity(l, PauliKind::x, Bits::parse("11"), "q");
  Matrix p = o.plus_projector().dense();
  Matrix m = o.projector(1).dense();
  EXPECT_LE((p * p - p).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((p + m - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-10);
  BinaryObservable back = BinaryObservable::from_plus_projector(l, p);
  EXPECT_LE((back.op().dense() - o.op().dense()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(TraceOutTest, BellPairGivesMaximallyMixed) {
  MixedState r = trace_out(bell_state(), {"a"});
  EXPECT_LE((r.matrix() - 0.5 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
  // diag(1/2,1/2) - diag(1,0) has eigenvalues ±1/2.
  MixedState zero = MixedState::from_pure(alloc(RegisterLayout{{"a", 1}}));
  EXPECT_NEAR(trace_distance(r, zero), 0.5, 1e-12);
  EXPECT_NEAR(trace_distance(zero, r), 0.5, 1e-12);
  EXPECT_NEAR(trace_distance(r, r), 0.0, 1e-12);
}

TEST(TraceOutTest, ProductStateKeepsFactor) {
  PureState s = PureState::basis(RegisterLayout{{"a", 1}, {"b", 1}}, 0b10);
  MixedState r = trace_out(s, {"b"});
  EXPECT_NEAR(r.matrix()(1, 1).real(), 1.0, 1e-12);
  EXPECT_NEAR(r.matrix()(0, 0).real(), 0.0, 1e-12);
  EXPECT_THROW(trace_out(s, {}), std::invalid_argument);
}

TEST(TraceOutTest, MixedAndPurePathsAgree) {
  Rng rng(23);
  PureState s = random_state(RegisterLayout{{"a", 1}, {"b", 2}, {"c", 1}}, rng);
  MixedState via_pure = trace_out(s, {"c", "a"});
  MixedState via_mixed = trace_out(MixedState::from_pure(s), {"c", "a"});
  EXPECT_LE((via_pure.matrix() - via_mixed.matrix()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(via_pure.trace(), 1.0, 1e-10);
}

TEST(OperatorTest, ApplyLowestActsOnLowQubits) {
  RegisterLayout low{{"a", 1}};
  Operator x = pauli_parity(low, PauliKind::x, Bits::parse("1"), "a").op();
  Vector v(4, 0.0);
  v[0b10] = 1.0;
  x.apply_lowest(v);
  EXPECT_NEAR(std::abs(v[0b11]), 1.0, 1e-12);
}

}  // namespace
}  // namespace qverify::qsim
