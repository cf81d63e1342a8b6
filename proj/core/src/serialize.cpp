#include "clci/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "clci/error.hpp"

namespace clci {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff),
                              static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& source) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw IoError(source, "truncated tensor header");
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kTensorMagic, 4);
  put_u32(out, kTensorFormatVersion);
  const Shape& s = t.shape();
  for (int d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
  for (const float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
}

Tensor read_tensor(std::istream& in, const std::string& source) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw IoError(source, "not a CLCT tensor file (bad magic)");
  }
  const std::uint32_t version = get_u32(in, source);
  if (version != kTensorFormatVersion) {
    throw IoError(source, "unsupported tensor format version " +
                              std::to_string(version));
  }
  Shape s;
  s.n = static_cast<int>(get_u32(in, source));
  s.c = static_cast<int>(get_u32(in, source));
  s.h = static_cast<int>(get_u32(in, source));
  s.w = static_cast<int>(get_u32(in, source));
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
    throw IoError(source, "invalid tensor shape " + to_string(s));
  }
  std::vector<float> values(s.numel());
  for (float& v : values) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
      throw IoError(source, "truncated tensor payload for shape " +
                                to_string(s));
    }
    const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                               (static_cast<std::uint32_t>(b[1]) << 8) |
                               (static_cast<std::uint32_t>(b[2]) << 16) |
                               (static_cast<std::uint32_t>(b[3]) << 24);
    v = std::bit_cast<float>(bits);
  }
  return Tensor::from_data(s, std::move(values));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  write_tensor(out, t);
  if (!out) throw IoError(path, "write failed");
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  return read_tensor(in, path);
}

}  // namespace clci
