#include "ebseg/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace ebseg {
namespace {

constexpr std::array<char, 4> kMagic{'E', 'B', 'L', 'T'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("eblt: truncated stream");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_eblt(std::ostream& os, const Tensor<float>& t) {
  if (t.ndim() > 255) throw std::invalid_argument("eblt: too many dimensions");
  os.write(kMagic.data(), kMagic.size());
  const auto nd = static_cast<unsigned char>(t.ndim());
  os.put(static_cast<char>(nd));
  for (std::size_t d : t.shape()) {
    if (d > 0xffffffffu) throw std::invalid_argument("eblt: extent exceeds u32");
    put_u32(os, static_cast<std::uint32_t>(d));
  }
  for (float v : t.data()) put_u32(os, std::bit_cast<std::uint32_t>(v));
  if (!os) throw std::runtime_error("eblt: write failed");
}

Tensor<float> read_eblt(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw std::runtime_error("eblt: bad magic");
  const int nd = is.get();
  if (nd == std::char_traits<char>::eof()) throw std::runtime_error("eblt: truncated header");
  Shape shape(static_cast<std::size_t>(nd));
  for (auto& d : shape) d = get_u32(is);
  std::vector<float> values(numel(shape));
  for (auto& v : values) v = std::bit_cast<float>(get_u32(is));
  return Tensor<float>(std::move(shape), std::move(values));
}

void save_eblt(const std::filesystem::path& path, const Tensor<float>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("eblt: cannot open " + path.string());
  write_eblt(os, t);
}

Tensor<float> load_eblt(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("eblt: cannot open " + path.string());
  return read_eblt(is);
}

}  // namespace ebseg
