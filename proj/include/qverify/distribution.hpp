#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qverify/common.hpp"

namespace qverify {

// Exact distribution over {0,1}^width, indexed by the little-endian value of the outcome.
class OutcomeDistribution {
 public:
  OutcomeDistribution() = default;
  explicit OutcomeDistribution(unsigned width) : width_(width), p_(size_for(width), 0.0) {}
  OutcomeDistribution(unsigned width, std::vector<double> p) : width_(width), p_(std::move(p)) {
    if (p_.size() != size_for(width)) throw std::invalid_argument("OutcomeDistribution: size mismatch");
  }

  static OutcomeDistribution point(Bits outcome) {
    OutcomeDistribution d(outcome.width);
    d.p_[outcome.value] = 1.0;
    return d;
  }
  static OutcomeDistribution uniform(unsigned width) {
    OutcomeDistribution d(width);
    for (double& v : d.p_) v = 1.0 / static_cast<double>(d.p_.size());
    return d;
  }

  unsigned width() const { return width_; }
  size_t size() const { return p_.size(); }
  double operator[](uint64_t outcome) const { return p_.at(outcome); }
  double at(Bits outcome) const {
    if (outcome.width != width_) throw std::invalid_argument("OutcomeDistribution: outcome width");
    return p_.at(outcome.value);
  }
  void add(uint64_t outcome, double mass) { p_.at(outcome) += mass; }
  const std::vector<double>& probabilities() const { return p_; }

  double total() const {
    double s = 0.0;
    for (double v : p_) s += v;
    return s;
  }
  bool normalized(double tol = 1e-9) const { return std::abs(total() - 1.0) <= tol; }

  // Accumulates weight * other into this distribution.
  void accumulate(const OutcomeDistribution& other, double weight) {
    if (other.width_ != width_) throw std::invalid_argument("OutcomeDistribution: width mismatch");
    for (size_t i = 0; i < p_.size(); ++i) p_[i] += weight * other.p_[i];
  }

  // Marginal on the listed positions; result position k is input position positions[k].
  OutcomeDistribution marginal(const std::vector<unsigned>& positions) const {
    for (unsigned q : positions) {
      if (q >= width_) throw std::out_of_range("OutcomeDistribution: marginal position");
    }
    OutcomeDistribution out(static_cast<unsigned>(positions.size()));
    for (uint64_t i = 0; i < p_.size(); ++i) {
      uint64_t o = 0;
      for (size_t k = 0; k < positions.size(); ++k) o |= ((i >> positions[k]) & 1U) << k;
      out.p_[o] += p_[i];
    }
    return out;
  }

 private:
  static size_t size_for(unsigned width) {
    if (width > 30) throw std::invalid_argument("OutcomeDistribution: width too large");
    return size_t{1} << width;
  }
  unsigned width_ = 0;
  std::vector<double> p_ = {1.0};
};

inline double tv_distance(const OutcomeDistribution& a, const OutcomeDistribution& b) {
  if (a.width() != b.width()) throw std::invalid_argument("tv_distance: support mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

// Pearson chi-square goodness of fit with (support - 1) degrees of freedom, where the
// support is the set of outcomes with nonzero expected mass. Observed mass outside the
// support gives p = 0.
inline double chi_square(const OutcomeDistribution& expected, const std::vector<uint64_t>& counts) {
  if (counts.size() != expected.size()) throw std::invalid_argument("chi_square: support mismatch");
  double n = 0.0;
  for (uint64_t c : counts) n += static_cast<double>(c);
  if (n == 0.0) throw std::invalid_argument("chi_square: no observations");
  double stat = 0.0;
  unsigned support = 0;
  for (size_t i = 0; i < counts.size(); ++i) {
    double e = expected[i] * n;
    if (expected[i] <= 0.0) {
      if (counts[i] != 0) return 0.0;
      continue;
    }
    ++support;
    double diff = static_cast<double>(counts[i]) - e;
    stat += diff * diff / e;
  }
  if (support < 2) return 1.0;
  boost::math::chi_squared dist(static_cast<double>(support - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

// Half-width of the 4-sigma binomial band for a frequency estimate of p from n trials.
inline double four_sigma(double p, uint64_t n) { return 4.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

}  // namespace qverify
