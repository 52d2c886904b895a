#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qverify/common.hpp"
#include "qverify/distribution.hpp"
#include "qverify/rng.hpp"

namespace qverify::qsim {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = std::vector<cplx>;

inline constexpr unsigned kMaxQubits = 26;
// Structured operators are never expanded to dense matrices above this width.
inline constexpr unsigned kMaxDenseQubits = 14;

class RegisterLayout {
 public:
  struct Register {
    std::string name;
    unsigned width;
    unsigned offset;
  };

  RegisterLayout() = default;
  RegisterLayout(std::initializer_list<std::pair<std::string, unsigned>> regs)
      : RegisterLayout(std::vector<std::pair<std::string, unsigned>>(regs)) {}
  explicit RegisterLayout(const std::vector<std::pair<std::string, unsigned>>& regs) {
    for (const auto& [name, width] : regs) push(name, width);
  }

  // Adds a register above all existing ones.
  RegisterLayout& push(const std::string& name, unsigned width) {
    if (width == 0) throw std::invalid_argument("RegisterLayout: zero-width register " + name);
    if (contains(name)) throw std::invalid_argument("RegisterLayout: duplicate register " + name);
    if (total_ + width > kMaxQubits) throw std::length_error("RegisterLayout: more than 26 qubits");
    regs_.push_back({name, width, total_});
    total_ += width;
    return *this;
  }

  // This layout in the low qubits, `upper` above it.
  RegisterLayout concat(const RegisterLayout& upper) const {
    RegisterLayout out = *this;
    for (const auto& r : upper.regs_) out.push(r.name, r.width);
    return out;
  }

  unsigned total_width() const { return total_; }
  uint64_t dimension() const { return uint64_t{1} << total_; }
  const std::vector<Register>& registers() const { return regs_; }

  bool contains(std::string_view name) const {
    return std::any_of(regs_.begin(), regs_.end(), [&](const Register& r) { return r.name == name; });
  }
  const Register& at(std::string_view name) const {
    for (const auto& r : regs_) {
      if (r.name == name) return r;
    }
    throw std::invalid_argument("RegisterLayout: unknown register " + std::string(name));
  }

  // Global qubit indices of the named registers, concatenated in argument order.
  std::vector<unsigned> qubits(const std::vector<std::string>& names) const {
    std::vector<unsigned> q;
    for (const auto& n : names) {
      const Register& r = at(n);
      for (unsigned i = 0; i < r.width; ++i) q.push_back(r.offset + i);
    }
    return q;
  }
  std::vector<unsigned> qubits(std::string_view name) const { return qubits(std::vector<std::string>{std::string(name)}); }

  // Layout containing only the named registers, in argument order.
  RegisterLayout select(const std::vector<std::string>& names) const {
    RegisterLayout out;
    for (const auto& n : names) out.push(n, at(n).width);
    return out;
  }
  RegisterLayout without(const std::vector<std::string>& names) const {
    RegisterLayout out;
    for (const auto& r : regs_) {
      if (std::find(names.begin(), names.end(), r.name) == names.end()) out.push(r.name, r.width);
    }
    return out;
  }

  friend bool operator==(const RegisterLayout& a, const RegisterLayout& b) {
    if (a.regs_.size() != b.regs_.size()) return false;
    for (size_t i = 0; i < a.regs_.size(); ++i) {
      if (a.regs_[i].name != b.regs_[i].name || a.regs_[i].width != b.regs_[i].width) return false;
    }
    return true;
  }

 private:
  std::vector<Register> regs_;
  unsigned total_ = 0;
};

namespace gates {
inline Matrix hadamard() {
  Matrix h(2, 2);
  const double r = 1.0 / std::sqrt(2.0);
  h << r, r, r, -r;
  return h;
}
inline Matrix pauli_x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}
inline Matrix pauli_z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}
inline Matrix identity(unsigned qubits) { return Matrix::Identity(int64_t{1} << qubits, int64_t{1} << qubits); }
// kron(a, b) has `a` on the low qubits, matching little-endian indexing.
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int64_t i = 0; i < b.rows(); ++i) {
    for (int64_t j = 0; j < b.cols(); ++j) out.block(i * a.rows(), j * a.cols(), a.rows(), a.cols()) = b(i, j) * a;
  }
  return out;
}
}  // namespace gates

inline bool is_unitary(const Matrix& u, double tol = 1e-10) {
  if (u.rows() != u.cols()) return false;
  return (u.adjoint() * u - Matrix::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff() <= tol;
}

// Packs the bits of `index` found at `qubits` into a little-endian integer.
inline uint64_t gather_bits(uint64_t index, const std::vector<unsigned>& qubits) {
  uint64_t o = 0;
  for (size_t k = 0; k < qubits.size(); ++k) o |= ((index >> qubits[k]) & 1U) << k;
  return o;
}
inline uint64_t scatter_bits(uint64_t packed, const std::vector<unsigned>& qubits) {
  uint64_t o = 0;
  for (size_t k = 0; k < qubits.size(); ++k) o |= ((packed >> k) & 1U) << qubits[k];
  return o;
}
inline uint64_t mask_of(const std::vector<unsigned>& qubits) {
  uint64_t m = 0;
  for (unsigned q : qubits) m |= uint64_t{1} << q;
  return m;
}

namespace kernel {

// amps <- (M on `qubits`) amps. Local bit k of M's index is global qubit qubits[k].
inline void apply_matrix(std::span<cplx> amps, const std::vector<unsigned>& qubits, const Matrix& m) {
  const uint64_t local = uint64_t{1} << qubits.size();
  if (static_cast<uint64_t>(m.rows()) != local || m.cols() != m.rows()) {
    throw std::invalid_argument("apply_matrix: operator size does not match target width");
  }
  std::vector<uint64_t> offs(local);
  for (uint64_t j = 0; j < local; ++j) offs[j] = scatter_bits(j, qubits);
  const uint64_t tmask = mask_of(qubits);
  Eigen::VectorXcd v(static_cast<int64_t>(local));
  for (uint64_t base = 0; base < amps.size(); ++base) {
    if (base & tmask) continue;
    for (uint64_t j = 0; j < local; ++j) v[static_cast<int64_t>(j)] = amps[base | offs[j]];
    Eigen::VectorXcd w = m * v;
    for (uint64_t j = 0; j < local; ++j) amps[base | offs[j]] = w[static_cast<int64_t>(j)];
  }
}

inline void apply_hadamards(std::span<cplx> amps, uint64_t qubit_mask) {
  const double r = 1.0 / std::sqrt(2.0);
  for (unsigned q = 0; q < 64; ++q) {
    if (!((qubit_mask >> q) & 1U)) continue;
    const uint64_t bit = uint64_t{1} << q;
    if (bit >= amps.size()) throw std::out_of_range("apply_hadamards: qubit outside state");
    for (uint64_t i = 0; i < amps.size(); ++i) {
      if (i & bit) continue;
      cplx a = amps[i];
      cplx b = amps[i | bit];
      amps[i] = r * (a + b);
      amps[i | bit] = r * (a - b);
    }
  }
}

inline void apply_x_mask(std::span<cplx> amps, uint64_t mask) {
  if (mask == 0) return;
  for (uint64_t i = 0; i < amps.size(); ++i) {
    uint64_t j = i ^ mask;
    if (i < j) std::swap(amps[i], amps[j]);
  }
}

inline void apply_z_mask(std::span<cplx> amps, uint64_t mask) {
  if (mask == 0) return;
  for (uint64_t i = 0; i < amps.size(); ++i) {
    if (parity64(i & mask)) amps[i] = -amps[i];
  }
}

// amps <- amps permuted by the basis bijection |i> -> |f(i)>.
inline void apply_permutation(std::span<cplx> amps, const std::function<uint64_t(uint64_t)>& f) {
  Vector out(amps.size(), cplx{0.0, 0.0});
  std::vector<bool> hit(amps.size(), false);
  for (uint64_t i = 0; i < amps.size(); ++i) {
    uint64_t j = f(i);
    if (j >= amps.size() || hit[j]) throw std::invalid_argument("apply_permutation: map is not a bijection");
    hit[j] = true;
    out[j] = amps[i];
  }
  std::copy(out.begin(), out.end(), amps.begin());
}

inline cplx inner(std::span<const cplx> a, std::span<const cplx> b) {
  cplx s{0.0, 0.0};
  for (size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

inline double norm2(std::span<const cplx> a) {
  double s = 0.0;
  for (const cplx& v : a) s += std::norm(v);
  return s;
}

}  // namespace kernel

// Linear operator on the state space of a layout, stored as its in-place action.
class Operator {
 public:
  using Fn = std::function<void(std::span<cplx>)>;

  Operator(RegisterLayout layout, Fn fn) : layout_(std::move(layout)), fn_(std::move(fn)) {}

  static Operator identity(RegisterLayout layout) {
    return Operator(std::move(layout), [](std::span<cplx>) {});
  }
  static Operator from_matrix(RegisterLayout layout, Matrix m) {
    if (static_cast<uint64_t>(m.rows()) != layout.dimension() || m.cols() != m.rows()) {
      throw std::invalid_argument("Operator: matrix size does not match layout");
    }
    std::vector<unsigned> all(layout.total_width());
    for (unsigned i = 0; i < all.size(); ++i) all[i] = i;
    return Operator(std::move(layout), [m = std::move(m), all](std::span<cplx> v) { kernel::apply_matrix(v, all, m); });
  }

  const RegisterLayout& layout() const { return layout_; }

  void apply(std::span<cplx> v) const {
    if (v.size() != layout_.dimension()) throw std::invalid_argument("Operator: vector size does not match layout");
    fn_(v);
  }
  Vector operator()(Vector v) const {
    apply(v);
    return v;
  }
  // Acts as (this ⊗ Id) on a vector whose lowest qubits carry this operator's layout.
  void apply_lowest(std::span<cplx> big) const {
    const uint64_t d = layout_.dimension();
    if (big.size() % d != 0) throw std::invalid_argument("Operator: vector not a multiple of the layout dimension");
    for (uint64_t off = 0; off < big.size(); off += d) fn_(big.subspan(off, d));
  }

  Matrix dense() const {
    if (layout_.total_width() > kMaxDenseQubits) throw std::length_error("Operator: refusing dense form above 14 qubits");
    const uint64_t d = layout_.dimension();
    Matrix m(static_cast<int64_t>(d), static_cast<int64_t>(d));
    Vector col(d);
    for (uint64_t j = 0; j < d; ++j) {
      std::fill(col.begin(), col.end(), cplx{0.0, 0.0});
      col[j] = 1.0;
      fn_(col);
      for (uint64_t i = 0; i < d; ++i) m(static_cast<int64_t>(i), static_cast<int64_t>(j)) = col[i];
    }
    return m;
  }

  // (a * b) applies b first.
  friend Operator operator*(const Operator& a, const Operator& b) {
    if (!(a.layout_ == b.layout_)) throw std::invalid_argument("Operator: layout mismatch");
    return Operator(a.layout_, [fa = a.fn_, fb = b.fn_](std::span<cplx> v) {
      fb(v);
      fa(v);
    });
  }

 private:
  RegisterLayout layout_;
  Fn fn_;
};

// Two-outcome observable O = P⁺ − P⁻, stored as the involution O. Outcome +1 is bit 0.
class BinaryObservable {
 public:
  explicit BinaryObservable(Operator involution) : op_(std::move(involution)) {}

  static BinaryObservable from_plus_projector(RegisterLayout layout, const Matrix& plus) {
    Matrix o = 2.0 * plus - Matrix::Identity(plus.rows(), plus.cols());
    return BinaryObservable(Operator::from_matrix(std::move(layout), std::move(o)));
  }

  const RegisterLayout& layout() const { return op_.layout(); }
  const Operator& op() const { return op_; }
  void apply(std::span<cplx> v) const { op_.apply(v); }

  // (Id + (−1)^bit O) / 2.
  Operator projector(unsigned bit) const {
    const double sign = (bit & 1U) ? -1.0 : 1.0;
    return Operator(op_.layout(), [o = op_, sign](std::span<cplx> v) {
      Vector w(v.begin(), v.end());
      o.apply(w);
      for (size_t i = 0; i < v.size(); ++i) v[i] = 0.5 * (v[i] + sign * w[i]);
    });
  }
  Operator plus_projector() const { return projector(0); }

  friend BinaryObservable operator*(const BinaryObservable& a, const BinaryObservable& b) {
    return BinaryObservable(a.op_ * b.op_);
  }

 private:
  Operator op_;
};

class PureState {
 public:
  PureState(RegisterLayout layout, Vector amps, double tol = 1e-12) : layout_(std::move(layout)), amps_(std::move(amps)) {
    if (amps_.size() != layout_.dimension()) throw std::invalid_argument("PureState: amplitude count does not match layout");
    if (std::abs(kernel::norm2(amps_) - 1.0) > tol) throw std::invalid_argument("PureState: state is not normalized");
  }

  static PureState basis(RegisterLayout layout, uint64_t index) {
    Vector v(layout.dimension(), cplx{0.0, 0.0});
    v.at(index) = 1.0;
    return PureState(std::move(layout), std::move(v));
  }

  const RegisterLayout& layout() const { return layout_; }
  unsigned width() const { return layout_.total_width(); }
  const Vector& amplitudes() const { return amps_; }
  std::span<cplx> data() { return amps_; }
  cplx operator[](uint64_t i) const { return amps_.at(i); }
  double norm2() const { return kernel::norm2(amps_); }

  void apply(const Matrix& u, const std::vector<unsigned>& qubits, double tol = 1e-10) {
    if (!is_unitary(u, tol)) throw std::invalid_argument("apply_unitary: operator is not unitary");
    kernel::apply_matrix(amps_, qubits, u);
  }
  void apply(const Matrix& u, const std::vector<std::string>& targets) { apply(u, layout_.qubits(targets)); }

  // this ⊗ upper, with this state on the low qubits.
  PureState tensor(const PureState& upper) const {
    RegisterLayout l = layout_.concat(upper.layout_);
    Vector v(l.dimension());
    const uint64_t d = layout_.dimension();
    for (uint64_t j = 0; j < upper.amps_.size(); ++j) {
      for (uint64_t i = 0; i < d; ++i) v[j * d + i] = amps_[i] * upper.amps_[j];
    }
    return PureState(std::move(l), std::move(v), 1e-10);
  }

  cplx inner(const PureState& other) const {
    if (!(layout_ == other.layout_)) throw std::invalid_argument("PureState: layout mismatch");
    return kernel::inner(amps_, other.amps_);
  }

 private:
  RegisterLayout layout_;
  Vector amps_;
};

class MixedState {
 public:
  MixedState(RegisterLayout layout, Matrix rho, double tol = 1e-10) : layout_(std::move(layout)), rho_(std::move(rho)) {
    if (static_cast<uint64_t>(rho_.rows()) != layout_.dimension() || rho_.cols() != rho_.rows()) {
      throw std::invalid_argument("MixedState: matrix size does not match layout");
    }
    if (!is_hermitian(tol)) throw std::invalid_argument("MixedState: density operator is not Hermitian");
    if (std::abs(trace() - 1.0) > tol) throw std::invalid_argument("MixedState: trace is not 1");
  }

  static MixedState from_pure(const PureState& s) {
    if (s.width() > kMaxDenseQubits) throw std::length_error("MixedState: refusing dense form above 14 qubits");
    Eigen::Map<const Eigen::VectorXcd> v(s.amplitudes().data(), static_cast<int64_t>(s.amplitudes().size()));
    return MixedState(s.layout(), v * v.adjoint());
  }

  const RegisterLayout& layout() const { return layout_; }
  const Matrix& matrix() const { return rho_; }
  double trace() const { return rho_.trace().real(); }
  bool is_hermitian(double tol) const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff() <= tol; }
  // Tr(op · ρ).
  cplx expectation(const Matrix& op) const { return (op * rho_).trace(); }

 private:
  RegisterLayout layout_;
  Matrix rho_;
};

inline PureState alloc(RegisterLayout layout) { return PureState::basis(std::move(layout), 0); }

inline PureState apply_unitary(PureState state, const Matrix& u, const std::vector<std::string>& targets) {
  state.apply(u, targets);
  return state;
}

namespace detail {
inline uint64_t hadamard_mask(const std::vector<unsigned>& qubits, Bits h) {
  if (h.width != qubits.size()) throw std::invalid_argument("measure: basis string length does not match target width");
  uint64_t m = 0;
  for (unsigned k = 0; k < h.width; ++k) {
    if (h[k]) m |= uint64_t{1} << qubits[k];
  }
  return m;
}
}  // namespace detail

inline OutcomeDistribution measure_qubits(const PureState& state, const std::vector<unsigned>& qubits, Bits h) {
  Vector v = state.amplitudes();
  kernel::apply_hadamards(v, detail::hadamard_mask(qubits, h));
  OutcomeDistribution d(static_cast<unsigned>(qubits.size()));
  for (uint64_t i = 0; i < v.size(); ++i) d.add(gather_bits(i, qubits), std::norm(v[i]));
  return d;
}

// Exact outcome distribution when target qubit k is measured in the standard basis
// (h_k = 0) or the Hadamard basis (h_k = 1).
inline OutcomeDistribution measure_bases(const PureState& state, const std::vector<std::string>& targets, Bits h) {
  return measure_qubits(state, state.layout().qubits(targets), h);
}
inline OutcomeDistribution measure_bases(const PureState& state, std::string_view target, Bits h) {
  return measure_bases(state, std::vector<std::string>{std::string(target)}, h);
}

inline OutcomeDistribution measure_bases(const MixedState& state, const std::vector<std::string>& targets, Bits h) {
  const std::vector<unsigned> qubits = state.layout().qubits(targets);
  const uint64_t hm = detail::hadamard_mask(qubits, h);
  Matrix m = state.matrix();
  // ρ -> W ρ W† with W the Hadamard layer, applied column by column.
  for (int pass = 0; pass < 2; ++pass) {
    for (int64_t c = 0; c < m.cols(); ++c) {
      std::span<cplx> col(m.col(c).data(), static_cast<size_t>(m.rows()));
      kernel::apply_hadamards(col, hm);
    }
    m.adjointInPlace();
  }
  OutcomeDistribution d(static_cast<unsigned>(qubits.size()));
  for (int64_t i = 0; i < m.rows(); ++i) d.add(gather_bits(static_cast<uint64_t>(i), qubits), m(i, i).real());
  return d;
}
inline OutcomeDistribution measure_bases(const MixedState& state, std::string_view target, Bits h) {
  return measure_bases(state, std::vector<std::string>{std::string(target)}, h);
}

// Renormalized post-measurement state for a given outcome.
inline PureState project(const PureState& state, const std::vector<std::string>& targets, Bits basis, Bits outcome) {
  const std::vector<unsigned> qubits = state.layout().qubits(targets);
  if (outcome.width != qubits.size()) throw std::invalid_argument("project: outcome length does not match target width");
  const uint64_t hm = detail::hadamard_mask(qubits, basis);
  Vector v = state.amplitudes();
  kernel::apply_hadamards(v, hm);
  double p = 0.0;
  for (uint64_t i = 0; i < v.size(); ++i) {
    if (gather_bits(i, qubits) != outcome.value) {
      v[i] = 0.0;
    } else {
      p += std::norm(v[i]);
    }
  }
  if (p < 1e-14) throw std::logic_error("project: outcome has zero probability");
  const double s = 1.0 / std::sqrt(p);
  for (cplx& a : v) a *= s;
  kernel::apply_hadamards(v, hm);
  return PureState(state.layout(), std::move(v), 1e-10);
}

template <class G>
std::pair<Bits, PureState> sample_measure(const PureState& state, const std::vector<std::string>& targets, Bits basis, G& rng) {
  OutcomeDistribution d = measure_bases(state, targets, basis);
  double u = uniform01(rng);
  uint64_t pick = d.size() - 1;
  double acc = 0.0;
  for (uint64_t o = 0; o < d.size(); ++o) {
    acc += d[o];
    if (u < acc) {
      pick = o;
      break;
    }
  }
  // Guard against landing on a zero-mass tail through rounding.
  while (d[pick] <= 0.0 && pick > 0) --pick;
  Bits outcome(pick, basis.width);
  return {outcome, project(state, targets, basis, outcome)};
}
template <class G>
std::pair<Bits, PureState> sample_measure(const PureState& state, std::string_view target, Bits basis, G& rng) {
  return sample_measure(state, std::vector<std::string>{std::string(target)}, basis, rng);
}

struct Branch {
  Bits outcome;
  double probability;
  PureState post;
};

// Every standard-basis outcome of the target registers with mass above `cutoff`,
// together with the renormalized state of the remaining registers.
inline std::vector<Branch> measure_branches(const PureState& state, const std::vector<std::string>& targets,
                                            double cutoff = 1e-15) {
  const std::vector<unsigned> tq = state.layout().qubits(targets);
  RegisterLayout rest = state.layout().without(targets);
  std::vector<unsigned> rq;
  for (const auto& r : rest.registers()) {
    const auto& q = state.layout().qubits(r.name);
    rq.insert(rq.end(), q.begin(), q.end());
  }
  std::map<uint64_t, Vector> buckets;
  const Vector& a = state.amplitudes();
  for (uint64_t i = 0; i < a.size(); ++i) {
    if (a[i] == cplx{0.0, 0.0}) continue;
    uint64_t o = gather_bits(i, tq);
    auto it = buckets.find(o);
    if (it == buckets.end()) it = buckets.emplace(o, Vector(rest.dimension(), cplx{0.0, 0.0})).first;
    it->second[gather_bits(i, rq)] = a[i];
  }
  std::vector<Branch> out;
  for (auto& [o, v] : buckets) {
    double p = kernel::norm2(v);
    if (p <= cutoff) continue;
    const double s = 1.0 / std::sqrt(p);
    for (cplx& x : v) x *= s;
    out.push_back({Bits(o, static_cast<unsigned>(tq.size())), p, PureState(rest, std::move(v), 1e-10)});
  }
  return out;
}

enum class PauliKind { x, z };

// σ_x(mask) or σ_z(mask) on the qubits of `target`; mask bit k is qubit k of the register.
inline BinaryObservable pauli_parity(const RegisterLayout& layout, PauliKind kind, Bits mask, std::string_view target) {
  const auto& reg = layout.at(target);
  if (mask.width != reg.width) throw std::invalid_argument("pauli_parity: mask length does not match register width");
  const uint64_t m = mask.value << reg.offset;
  if (kind == PauliKind::x) {
    return BinaryObservable(Operator(layout, [m](std::span<cplx> v) { kernel::apply_x_mask(v, m); }));
  }
  return BinaryObservable(Operator(layout, [m](std::span<cplx> v) { kernel::apply_z_mask(v, m); }));
}

inline MixedState trace_out(const PureState& state, const std::vector<std::string>& keep) {
  if (keep.empty()) throw std::invalid_argument("trace_out: empty keep set");
  RegisterLayout kept = state.layout().select(keep);
  if (kept.total_width() > kMaxDenseQubits) throw std::length_error("trace_out: kept part above 14 qubits");
  const std::vector<unsigned> kq = state.layout().qubits(keep);
  std::vector<unsigned> eq;
  const uint64_t kmask = mask_of(kq);
  for (unsigned q = 0; q < state.width(); ++q) {
    if (!((kmask >> q) & 1U)) eq.push_back(q);
  }
  const int64_t dk = static_cast<int64_t>(kept.dimension());
  const int64_t de = int64_t{1} << eq.size();
  Matrix psi = Matrix::Zero(dk, de);
  const Vector& a = state.amplitudes();
  for (uint64_t i = 0; i < a.size(); ++i) {
    psi(static_cast<int64_t>(gather_bits(i, kq)), static_cast<int64_t>(gather_bits(i, eq))) = a[i];
  }
  Matrix rho = psi * psi.adjoint();
  Matrix herm = 0.5 * (rho + rho.adjoint());
  return MixedState(std::move(kept), std::move(herm));
}

inline MixedState trace_out(const MixedState& state, const std::vector<std::string>& keep) {
  if (keep.empty()) throw std::invalid_argument("trace_out: empty keep set");
  RegisterLayout kept = state.layout().select(keep);
  const std::vector<unsigned> kq = state.layout().qubits(keep);
  const int64_t dk = static_cast<int64_t>(kept.dimension());
  Matrix out = Matrix::Zero(dk, dk);
  const Matrix& r = state.matrix();
  const uint64_t kmask = mask_of(kq);
  for (int64_t i = 0; i < r.rows(); ++i) {
    for (int64_t j = 0; j < r.cols(); ++j) {
      if ((static_cast<uint64_t>(i) & ~kmask) != (static_cast<uint64_t>(j) & ~kmask)) continue;
      out(static_cast<int64_t>(gather_bits(static_cast<uint64_t>(i), kq)),
          static_cast<int64_t>(gather_bits(static_cast<uint64_t>(j), kq))) += r(i, j);
    }
  }
  return MixedState(std::move(kept), std::move(out));
}

inline double trace_distance(const MixedState& a, const MixedState& b) {
  if (a.matrix().rows() != b.matrix().rows()) throw std::invalid_argument("trace_distance: dimension mismatch");
  Matrix diff = a.matrix() - b.matrix();
  diff = 0.5 * (diff + diff.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(diff, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

template <class G>
PureState random_state(RegisterLayout layout, G& rng) {
  Vector v(layout.dimension());
  for (cplx& a : v) a = cplx(standard_normal(rng), standard_normal(rng));
  const double s = 1.0 / std::sqrt(kernel::norm2(v));
  for (cplx& a : v) a *= s;
  return PureState(std::move(layout), std::move(v), 1e-10);
}

// Haar-distributed unitary: QR of a complex Gaussian matrix with the phases of R's diagonal removed.
template <class G>
Matrix random_unitary(uint64_t dim, G& rng) {
  const int64_t d = static_cast<int64_t>(dim);
  Matrix g(d, d);
  for (int64_t i = 0; i < d; ++i) {
    for (int64_t j = 0; j < d; ++j) g(i, j) = cplx(standard_normal(rng), standard_normal(rng));
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int64_t j = 0; j < d; ++j) {
    cplx ph = r(j, j) / std::abs(r(j, j));
    q.col(j) *= ph;
  }
  return q;
}

}  // namespace qverify::qsim
