#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ebseg {

inline constexpr std::uint8_t kIgnoreLabel = 255;

/// Single-channel 8-bit map: binary masks (0/1) and ternary labels (0/1/255).
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), data(h * w, fill) {}

  std::size_t size() const { return data.size(); }
  std::uint8_t& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  bool same_shape(const LabelMap& o) const { return height == o.height && width == o.width; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// Foreground pixels with at least one 4-neighbour in the background. Pixels
/// outside the map do not count as background, so the image border is not a contour.
LabelMap contour4(const LabelMap& mask);

/// Nearest-neighbour resampling with half-pixel centres (labels are never mixed).
LabelMap resize_nearest(const LabelMap& map, std::size_t out_h, std::size_t out_w);

LabelMap flip_horizontal(const LabelMap& map);

}  // namespace ebseg
