#include "ebseg/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace ebseg {
namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

struct Header {
  std::size_t width, height;
};

Header read_header(std::istream& is, const char* magic, const std::filesystem::path& path) {
  if (next_token(is) != magic) throw std::runtime_error("netpbm: " + path.string() + " is not " + magic);
  const std::string w = next_token(is), h = next_token(is), mx = next_token(is);
  if (w.empty() || h.empty() || mx != "255") {
    throw std::runtime_error("netpbm: unsupported header in " + path.string());
  }
  return {std::stoul(w), std::stoul(h)};
}

}  // namespace

Rgb8Image to_rgb8(const Tensor<float>& image) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw std::invalid_argument("to_rgb8: expected 3 x H x W, got " + shape_str(image.shape()));
  }
  Rgb8Image out{image.dim(1), image.dim(2), {}};
  const std::size_t hw = out.height * out.width;
  out.pixels.resize(hw * 3);
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(image[c * hw + p], 0.0f, 1.0f);
      out.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  return out;
}

Tensor<float> from_rgb8(const Rgb8Image& img) {
  const std::size_t hw = img.height * img.width;
  Tensor<float> t({3, img.height, img.width});
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) t[c * hw + p] = static_cast<float>(img.pixels[p * 3 + c]) / 255.0f;
  return t;
}

void write_ppm(const std::filesystem::path& path, const Rgb8Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_ppm: cannot open " + path.string());
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

Rgb8Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_ppm: cannot open " + path.string());
  const Header h = read_header(is, "P6", path);
  Rgb8Image img{h.height, h.width, std::vector<std::uint8_t>(h.width * h.height * 3)};
  if (!is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()))) {
    throw std::runtime_error("read_ppm: truncated pixel data in " + path.string());
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const LabelMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_pgm: cannot open " + path.string());
  os << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(map.data.data()), static_cast<std::streamsize>(map.data.size()));
}

LabelMap read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_pgm: cannot open " + path.string());
  const Header h = read_header(is, "P5", path);
  LabelMap map(h.height, h.width);
  if (!is.read(reinterpret_cast<char*>(map.data.data()), static_cast<std::streamsize>(map.data.size()))) {
    throw std::runtime_error("read_pgm: truncated pixel data in " + path.string());
  }
  return map;
}

}  // namespace ebseg
