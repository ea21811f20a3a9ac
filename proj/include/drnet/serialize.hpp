#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace drnet {

// One entry of a DRT1 container: a named float32 array with explicit dims.
struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

// DRT1 container: magic "DRT1", little-endian u32 entry count, then per
// entry u32 name length, UTF-8 name, u32 rank, rank u32 dims and the
// dims-product float32 little-endian values.
void write_drt1(const std::string& path, const std::vector<NamedArray>& entries);
std::vector<NamedArray> read_drt1(const std::string& path);

}  // namespace drnet
