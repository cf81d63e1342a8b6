#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "clci/tensor.hpp"

namespace clci {

// Binary tensor file: "CLCT", u32 version, u32 n, c, h, w, then n*c*h*w
// IEEE-754 float32 values. All integers and floats are little-endian.
inline constexpr char kTensorMagic[4] = {'C', 'L', 'C', 'T'};
inline constexpr std::uint32_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in, const std::string& source = "<stream>");

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace clci
