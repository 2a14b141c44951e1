#include "ebseg/label_map.hpp"

#include <algorithm>
#include <cmath>

namespace ebseg {

LabelMap contour4(const LabelMap& mask) {
  LabelMap out(mask.height, mask.width);
  const std::size_t h = mask.height, w = mask.width;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (mask.at(y, x) == 0) continue;
      const bool bg_nb = (y > 0 && mask.at(y - 1, x) == 0) || (y + 1 < h && mask.at(y + 1, x) == 0) ||
                         (x > 0 && mask.at(y, x - 1) == 0) || (x + 1 < w && mask.at(y, x + 1) == 0);
      out.at(y, x) = bg_nb ? 1 : 0;
    }
  return out;
}

LabelMap resize_nearest(const LabelMap& map, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("resize_nearest: output size must be >= 1");
  LabelMap out(out_h, out_w);
  auto src_index = [](std::size_t o, std::size_t in, std::size_t out_n) {
    const double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out_n);
    return std::min(static_cast<std::size_t>(std::floor(s)), in - 1);
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    const std::size_t sy = src_index(y, map.height, out_h);
    for (std::size_t x = 0; x < out_w; ++x) out.at(y, x) = map.at(sy, src_index(x, map.width, out_w));
  }
  return out;
}

LabelMap flip_horizontal(const LabelMap& map) {
  LabelMap out(map.height, map.width);
  for (std::size_t y = 0; y < map.height; ++y)
    for (std::size_t x = 0; x < map.width; ++x) out.at(y, x) = map.at(y, map.width - 1 - x);
  return out;
}

}  // namespace ebseg
