#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qverify {

using Bytes = std::vector<uint8_t>;

// Raised when a secret value is requested at a slot the key cannot open.
class RestrictedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Raised by verifier algorithms on inputs that must be treated as rejection.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fixed-width bit string of at most 64 bits. Bit i of `value` is position i;
// text form lists position 0 first.
struct Bits {
  uint64_t value = 0;
  unsigned width = 0;

  constexpr Bits() = default;
  constexpr Bits(uint64_t v, unsigned w) : value(v), width(w) {
    if (w > 64) throw std::invalid_argument("Bits: width above 64");
    if (w < 64) value &= (uint64_t{1} << w) - 1;
  }

  static Bits parse(std::string_view text) {
    if (text.size() > 64) throw std::invalid_argument("Bits: string too long");
    uint64_t v = 0;
    for (size_t i = 0; i < text.size(); ++i) {
      if (text[i] == '1') {
        v |= uint64_t{1} << i;
      } else if (text[i] != '0') {
        throw std::invalid_argument("Bits: expected 0/1 characters");
      }
    }
    return Bits(v, static_cast<unsigned>(text.size()));
  }

  static Bits zeros(unsigned w) { return Bits(0, w); }
  static Bits unit(unsigned i, unsigned w) { return Bits(uint64_t{1} << i, w); }

  unsigned operator[](unsigned i) const {
    if (i >= width) throw std::out_of_range("Bits: index");
    return static_cast<unsigned>((value >> i) & 1U);
  }

  Bits with(unsigned i, unsigned bit) const {
    if (i >= width) throw std::out_of_range("Bits: index");
    uint64_t v = (value & ~(uint64_t{1} << i)) | (uint64_t{bit & 1U} << i);
    return Bits(v, width);
  }

  unsigned popcount() const { return static_cast<unsigned>(__builtin_popcountll(value)); }

  std::string str() const {
    std::string s(width, '0');
    for (unsigned i = 0; i < width; ++i) {
      if ((value >> i) & 1U) s[i] = '1';
    }
    return s;
  }

  friend Bits operator^(Bits a, Bits b) {
    if (a.width != b.width) throw std::invalid_argument("Bits: width mismatch");
    return Bits(a.value ^ b.value, a.width);
  }
  friend Bits operator&(Bits a, Bits b) {
    if (a.width != b.width) throw std::invalid_argument("Bits: width mismatch");
    return Bits(a.value & b.value, a.width);
  }
  friend bool operator==(Bits a, Bits b) = default;
};

// Inner product over GF(2).
inline unsigned dot(Bits a, Bits b) { return (a & b).popcount() & 1U; }

inline unsigned parity64(uint64_t v) { return static_cast<unsigned>(__builtin_popcountll(v) & 1); }

// Packs bits LSB-first into ceil(width/8) bytes.
inline Bytes pack_bits(Bits b) {
  Bytes out((b.width + 7) / 8, 0);
  for (unsigned i = 0; i < b.width; ++i) {
    if ((b.value >> i) & 1U) out[i / 8] |= static_cast<uint8_t>(1U << (i % 8));
  }
  return out;
}

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void raw(const uint8_t* p, size_t n) {
    if (n == 0) return;
    const size_t at = buf_.size();
    buf_.resize(at + n);
    std::memcpy(buf_.data() + at, p, n);
  }
  template <class Range>
  void raw(const Range& r) {
    raw(std::data(r), std::size(r));
  }
  // Length-prefixed (u32) byte block.
  template <class Range>
  void block(const Range& r) {
    u32(static_cast<uint32_t>(std::size(r)));
    raw(r);
  }
  void bits(Bits b) { raw(pack_bits(b)); }

  const Bytes& bytes() const& { return buf_; }
  Bytes bytes() && { return std::move(buf_); }

 private:
  Bytes buf_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* p, size_t n) : p_(p), n_(n) {}
  explicit ByteReader(const Bytes& b) : ByteReader(b.data(), b.size()) {}

  uint8_t u8() {
    need(1);
    return p_[pos_++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t{p_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t{p_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  Bytes raw(size_t n) {
    need(n);
    Bytes out(p_ + pos_, p_ + pos_ + n);
    pos_ += n;
    return out;
  }
  Bytes block() { return raw(u32()); }
  Bits bits(unsigned width) {
    size_t nbytes = (width + 7) / 8;
    need(nbytes);
    uint64_t v = 0;
    for (unsigned i = 0; i < width; ++i) {
      if ((p_[pos_ + i / 8] >> (i % 8)) & 1U) v |= uint64_t{1} << i;
    }
    // Padding bits must be zero so that every value has one encoding.
    for (unsigned i = width; i < nbytes * 8; ++i) {
      if ((p_[pos_ + i / 8] >> (i % 8)) & 1U) throw ProtocolError("nonzero padding bit");
    }
    pos_ += nbytes;
    return Bits(v, width);
  }

  bool done() const { return pos_ == n_; }
  size_t remaining() const { return n_ - pos_; }
  void expect_done() const {
    if (!done()) throw ProtocolError("trailing bytes");
  }

 private:
  void need(size_t k) const {
    if (n_ - pos_ < k) throw ProtocolError("truncated input");
  }
  const uint8_t* p_;
  size_t n_;
  size_t pos_ = 0;
};

inline std::string to_hex(const Bytes& b) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (uint8_t v : b) {
    s.push_back(kDigits[v >> 4]);
    s.push_back(kDigits[v & 15]);
  }
  return s;
}

}  // namespace qverify
