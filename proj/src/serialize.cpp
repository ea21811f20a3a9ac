#include "drnet/serialize.hpp"

#include <cstring>
#include <fstream>

#include "drnet/tensor.hpp"

namespace drnet {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw ParseError(std::string("DRT1: truncated file while reading ") + what);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_drt1(const std::string& path, const std::vector<NamedArray>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("DRT1: cannot open " + path + " for writing");
  os.write("DRT1", 4);
  put_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    std::uint64_t count = 1;
    for (auto d : e.dims) count *= d;
    if (count != e.values.size()) {
      throw ContractError("DRT1: entry '" + e.name + "' dims product " +
                          std::to_string(count) + " != value count " +
                          std::to_string(e.values.size()));
    }
    put_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(os, static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) put_u32(os, d);
    for (float v : e.values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(os, bits);
    }
  }
  if (!os) throw ParseError("DRT1: write failed for " + path);
}

std::vector<NamedArray> read_drt1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("DRT1: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "DRT1", 4) != 0) {
    throw ParseError("DRT1: bad magic in " + path);
  }
  const std::uint32_t n = get_u32(is, "entry count");
  std::vector<NamedArray> entries;
  entries.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedArray e;
    const std::uint32_t name_len = get_u32(is, "name length");
    e.name.resize(name_len);
    if (!is.read(e.name.data(), name_len)) {
      throw ParseError("DRT1: truncated file while reading entry name");
    }
    const std::uint32_t rank = get_u32(is, "rank");
    e.dims.resize(rank);
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      e.dims[d] = get_u32(is, "dim");
      count *= e.dims[d];
    }
    e.values.resize(count);
    for (std::uint64_t v = 0; v < count; ++v) {
      const std::uint32_t bits = get_u32(is, "values");
      std::memcpy(&e.values[v], &bits, 4);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace drnet
