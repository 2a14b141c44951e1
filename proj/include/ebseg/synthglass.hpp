#pragma once

// Synthetic glass-like scenes: object interiors replicate the background
// through a small warp, so the contour is the main cue separating them.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ebseg/label_map.hpp"
#include "ebseg/tensor.hpp"

namespace ebseg {

inline constexpr int kDefaultEdgeThickness = 8;

struct Sample {
  Tensor<float> image;  // 3 x H x W in [0,1]
  LabelMap mask_m;      // G_m, binary
  LabelMap mask_e;      // G_e, binary edge band
  LabelMap mask_r;      // G_r, {0, 1, 255}
  std::uint64_t seed = 0;
  /// Background sampled at each pixel's warp source (equal to the plain
  /// background outside objects). Only filled by gen_scene.
  Tensor<float> aligned_background;

  std::size_t height() const { return mask_m.height; }
  std::size_t width() const { return mask_m.width; }
};

struct SceneOptions {
  int thickness = kDefaultEdgeThickness;
};

/// Deterministic in `seed`. size >= 32, 1 <= n_objects <= 4.
Sample gen_scene(std::uint64_t seed, std::size_t size, int n_objects, const SceneOptions& opts = {});

/// Band of pixels within Chebyshev distance thickness/2 of a contour pixel of `mask`.
LabelMap derive_edge_gt(const LabelMap& mask, int thickness = kDefaultEdgeThickness);

/// mask_m where mask_e == 0, ignore (255) where mask_e == 1.
LabelMap derive_residual_gt(const LabelMap& mask_m, const LabelMap& mask_e);

/// Builds a sample from an image and its object mask, deriving G_e and G_r.
Sample make_sample(Tensor<float> image, LabelMap mask_m, int thickness = kDefaultEdgeThickness,
                   std::uint64_t seed = 0);

Sample flip_horizontal(const Sample& s);

/// Per-index seed of a generated split.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Generated split: sample i uses derive_seed(base_seed, i) and 1..max_objects objects.
std::vector<Sample> gen_split(std::uint64_t base_seed, std::size_t count, std::size_t size, int max_objects = 3,
                              const SceneOptions& opts = {});

/// Writes into `dir` (one directory per split): `{split}_{index:05}.ppm` image,
/// `{split}_{index:05}.pgm` object mask, `..._e.pgm` edge band, `..._r.pgm`
/// residual labels, and `manifest.txt` with one `{split} {index} {seed}` line per sample.
void write_split(const std::filesystem::path& dir, const std::string& split, const std::vector<Sample>& samples);

/// Reads every `{split}_NNNNN.ppm` / `.pgm` pair in `dir`, sorted by index;
/// G_e and G_r are re-derived from the object mask at `thickness`.
std::vector<Sample> read_split(const std::filesystem::path& dir, const std::string& split,
                               int thickness = kDefaultEdgeThickness);

}  // namespace ebseg
