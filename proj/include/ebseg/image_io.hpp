#pragma once

// Binary netpbm I/O: P6 (RGB, maxval 255) and P5 (grey, maxval 255).

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ebseg/label_map.hpp"
#include "ebseg/tensor.hpp"

namespace ebseg {

struct Rgb8Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB
};

/// 3 x H x W floats in [0,1] <-> 8-bit RGB (round to nearest, clamped).
Rgb8Image to_rgb8(const Tensor<float>& image);
Tensor<float> from_rgb8(const Rgb8Image& img);

void write_ppm(const std::filesystem::path& path, const Rgb8Image& img);
Rgb8Image read_ppm(const std::filesystem::path& path);

void write_pgm(const std::filesystem::path& path, const LabelMap& map);
LabelMap read_pgm(const std::filesystem::path& path);

}  // namespace ebseg
