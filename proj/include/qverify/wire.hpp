#pragma once

// Message framing: tag (1 byte), payload length (u32 LE), payload.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "qverify/common.hpp"

namespace qverify::wire {

namespace tag {
inline constexpr uint8_t kPublicKey = 0x01;
inline constexpr uint8_t kCommit = 0x02;
inline constexpr uint8_t kChallenge = 0x03;
inline constexpr uint8_t kOpening = 0x04;
inline constexpr uint8_t kResult = 0x05;
}  // namespace tag

struct Frame {
  uint8_t tag = 0;
  Bytes payload;
  friend bool operator==(const Frame&, const Frame&) = default;
};

inline void write_frame(ByteWriter& w, uint8_t t, const Bytes& payload) {
  w.u8(t);
  w.block(payload);
}

inline Frame read_frame(ByteReader& r) {
  Frame f;
  f.tag = r.u8();
  f.payload = r.block();
  return f;
}

inline Bytes encode_frames(const std::vector<Frame>& frames) {
  ByteWriter w;
  for (const auto& f : frames) write_frame(w, f.tag, f.payload);
  return std::move(w).bytes();
}

inline std::vector<Frame> decode_frames(const Bytes& bytes) {
  ByteReader r(bytes);
  std::vector<Frame> out;
  while (!r.done()) out.push_back(read_frame(r));
  return out;
}

inline void write_file(const std::string& path, const Bytes& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Bytes read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  return Bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace qverify::wire
