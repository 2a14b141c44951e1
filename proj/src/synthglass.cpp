#include "ebseg/synthglass.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "ebseg/image_io.hpp"

namespace ebseg {
namespace {

// Uniform double in [lo, hi) from the top 53 bits; independent of the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }
  int below(int n) { return static_cast<int>(uniform() * n); }
  double sign() { return uniform() < 0.5 ? -1.0 : 1.0; }

 private:
  std::mt19937_64 eng_;
};

// Periodic multi-octave value noise per colour channel.
class Background {
 public:
  Background(Rng& rng, std::size_t size) {
    for (int c = 0; c < 3; ++c) {
      base_[c] = rng.uniform(0.3, 0.7);
      contrast_[c] = rng.uniform(0.25, 0.45);
    }
    double cell = static_cast<double>(size) / 2.0;
    double amp = 1.0;
    while (cell >= 2.0 && octaves_.size() < 5) {
      Octave o;
      o.cell = cell;
      o.amp = amp;
      o.grid = static_cast<std::size_t>(std::ceil(static_cast<double>(size) / cell));
      for (auto& lat : o.lattice) {
        lat.resize(o.grid * o.grid);
        for (auto& v : lat) v = rng.uniform(-1.0, 1.0);
      }
      octaves_.push_back(std::move(o));
      cell /= 2.0;
      amp *= 0.5;
    }
    for (const auto& o : octaves_) norm_ += o.amp;
  }

  double at(int c, double x, double y) const {
    double acc = 0;
    for (const auto& o : octaves_) acc += o.amp * o.sample(c, x, y);
    return std::clamp(base_[c] + contrast_[c] * acc / norm_, 0.0, 1.0);
  }

 private:
  struct Octave {
    double cell = 1, amp = 1;
    std::size_t grid = 1;
    std::array<std::vector<double>, 3> lattice;

    double sample(int c, double x, double y) const {
      const double gx = x / cell, gy = y / cell;
      const double fx = std::floor(gx), fy = std::floor(gy);
      const auto wrap = [g = static_cast<long>(grid)](double v) {
        long i = static_cast<long>(v) % g;
        return static_cast<std::size_t>(i < 0 ? i + g : i);
      };
      const std::size_t x0 = wrap(fx), x1 = wrap(fx + 1), y0 = wrap(fy), y1 = wrap(fy + 1);
      const auto smooth = [](double t) { return t * t * (3 - 2 * t); };
      const double tx = smooth(gx - fx), ty = smooth(gy - fy);
      const auto& l = lattice[static_cast<std::size_t>(c)];
      const double top = l[y0 * grid + x0] * (1 - tx) + l[y0 * grid + x1] * tx;
      const double bot = l[y1 * grid + x0] * (1 - tx) + l[y1 * grid + x1] * tx;
      return top * (1 - ty) + bot * ty;
    }
  };

  std::array<double, 3> base_{}, contrast_{};
  std::vector<Octave> octaves_;
  double norm_ = 0;
};

struct Pt {
  double x, y;
};

struct ObjectShape {
  bool ellipse = true;
  double cx = 0, cy = 0, rx = 1, ry = 1, theta = 0;
  std::vector<Pt> poly;

  bool contains(double px, double py) const {
    if (ellipse) {
      const double dx = px - cx, dy = py - cy;
      const double c = std::cos(theta), s = std::sin(theta);
      const double u = (c * dx + s * dy) / rx, v = (-s * dx + c * dy) / ry;
      return u * u + v * v <= 1.0;
    }
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
      const Pt& a = poly[i];
      const Pt& b = poly[j];
      if ((a.y > py) != (b.y > py) && px < (b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x) inside = !inside;
    }
    return inside;
  }
};

ObjectShape random_shape(Rng& rng, double size) {
  ObjectShape s;
  s.ellipse = rng.uniform() < 0.5;
  s.cx = rng.uniform(0.3, 0.7) * size;
  s.cy = rng.uniform(0.3, 0.7) * size;
  s.rx = rng.uniform(0.14, 0.3) * size;
  s.ry = rng.uniform(0.14, 0.3) * size;
  s.theta = rng.uniform(0.0, std::numbers::pi);
  if (!s.ellipse) {
    // Vertices on an ellipse in angular order form a convex polygon.
    const int n = 5 + rng.below(4);
    std::vector<double> angles(static_cast<std::size_t>(n));
    for (auto& a : angles) a = rng.uniform(0.0, 2 * std::numbers::pi);
    std::sort(angles.begin(), angles.end());
    const double c = std::cos(s.theta), sn = std::sin(s.theta);
    for (double a : angles) {
      const double u = s.rx * std::cos(a), v = s.ry * std::sin(a);
      s.poly.push_back({s.cx + c * u - sn * v, s.cy + sn * u + c * v});
    }
  }
  return s;
}

LabelMap rasterize(const ObjectShape& shape, std::size_t size) {
  LabelMap m(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      m.at(y, x) = shape.contains(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5) ? 1 : 0;
  return m;
}

std::size_t count_ones(const LabelMap& m) {
  return static_cast<std::size_t>(std::count(m.data.begin(), m.data.end(), std::uint8_t{1}));
}

// Separable max filter with a (2r+1)-wide square window.
LabelMap dilate_square(const LabelMap& in, std::size_t r) {
  const std::size_t h = in.height, w = in.width;
  LabelMap tmp(h, w), out(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t lo = x >= r ? x - r : 0, hi = std::min(w - 1, x + r);
      std::uint8_t v = 0;
      for (std::size_t k = lo; k <= hi && !v; ++k) v = in.at(y, k);
      tmp.at(y, x) = v;
    }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t lo = y >= r ? y - r : 0, hi = std::min(h - 1, y + r);
      std::uint8_t v = 0;
      for (std::size_t k = lo; k <= hi && !v; ++k) v = tmp.at(k, x);
      out.at(y, x) = v;
    }
  return out;
}

std::string indexed_name(const std::string& split, std::size_t index, const char* suffix) {
  std::ostringstream os;
  os << split << '_' << std::setw(5) << std::setfill('0') << index << suffix;
  return os.str();
}

}  // namespace

LabelMap derive_edge_gt(const LabelMap& mask, int thickness) {
  if (thickness < 1) throw std::invalid_argument("derive_edge_gt: thickness must be >= 1");
  return dilate_square(contour4(mask), static_cast<std::size_t>(thickness / 2));
}

LabelMap derive_residual_gt(const LabelMap& mask_m, const LabelMap& mask_e) {
  if (!mask_m.same_shape(mask_e)) throw std::invalid_argument("derive_residual_gt: mask shapes differ");
  LabelMap r(mask_m.height, mask_m.width);
  for (std::size_t i = 0; i < r.size(); ++i) r.data[i] = mask_e.data[i] ? kIgnoreLabel : mask_m.data[i];
  return r;
}

Sample make_sample(Tensor<float> image, LabelMap mask_m, int thickness, std::uint64_t seed) {
  if (image.ndim() != 3 || image.dim(0) != 3 || image.dim(1) != mask_m.height || image.dim(2) != mask_m.width) {
    throw std::invalid_argument("make_sample: image " + shape_str(image.shape()) + " does not match mask " +
                                std::to_string(mask_m.height) + "x" + std::to_string(mask_m.width));
  }
  Sample s;
  s.image = std::move(image);
  s.mask_e = derive_edge_gt(mask_m, thickness);
  s.mask_r = derive_residual_gt(mask_m, s.mask_e);
  s.mask_m = std::move(mask_m);
  s.seed = seed;
  return s;
}

Sample gen_scene(std::uint64_t seed, std::size_t size, int n_objects, const SceneOptions& opts) {
  if (size < 32) throw std::invalid_argument("gen_scene: size must be >= 32");
  if (n_objects < 1 || n_objects > 4) throw std::invalid_argument("gen_scene: n_objects must be in [1, 4]");

  Rng rng(seed);
  const Background bg(rng, size);
  const std::size_t hw = size * size;
  Tensor<float> image({3, size, size});
  for (int c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        image[static_cast<std::size_t>(c) * hw + y * size + x] =
            static_cast<float>(bg.at(c, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5));
  Tensor<float> aligned = image.clone();

  LabelMap mask(size, size);
  for (int o = 0; o < n_objects; ++o) {
    ObjectShape shape;
    LabelMap obj;
    do {
      shape = random_shape(rng, static_cast<double>(size));
      obj = rasterize(shape, size);
    } while (count_ones(obj) < 16);

    const double dx = rng.sign() * rng.uniform(2.0, 4.0);
    const double dy = rng.sign() * rng.uniform(2.0, 4.0);
    const double amp = rng.uniform(0.5, 1.5);
    const double freq = rng.uniform(0.1, 0.3);
    const double phase_x = rng.uniform(0.0, 2 * std::numbers::pi);
    const double phase_y = rng.uniform(0.0, 2 * std::numbers::pi);
    const double tint = rng.sign() * rng.uniform(0.03, 0.07);
    std::array<double, 3> tints{};
    for (auto& t : tints) t = tint + rng.uniform(-0.02, 0.02);
    const double rim = rng.uniform(0.3, 0.5);
    const LabelMap edge = contour4(obj);

    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        if (!obj.at(y, x)) continue;
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        const double sx = px + dx + amp * std::sin(freq * py + phase_x);
        const double sy = py + dy + amp * std::sin(freq * px + phase_y);
        for (int c = 0; c < 3; ++c) {
          const double src = bg.at(c, sx, sy);
          double v = std::clamp(src + tints[static_cast<std::size_t>(c)], 0.0, 1.0);
          if (edge.at(y, x)) v += rim * (1.0 - v);
          const std::size_t e = static_cast<std::size_t>(c) * hw + y * size + x;
          image[e] = static_cast<float>(v);
          aligned[e] = static_cast<float>(src);
        }
        mask.at(y, x) = 1;
      }
  }

  Sample s = make_sample(std::move(image), std::move(mask), opts.thickness, seed);
  s.aligned_background = std::move(aligned);
  return s;
}

Sample flip_horizontal(const Sample& s) {
  Sample out;
  const std::size_t h = s.height(), w = s.width(), hw = h * w;
  out.image = Tensor<float>({3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.image[c * hw + y * w + x] = s.image[c * hw + y * w + (w - 1 - x)];
  out.mask_m = flip_horizontal(s.mask_m);
  out.mask_e = flip_horizontal(s.mask_e);
  out.mask_r = flip_horizontal(s.mask_r);
  out.seed = s.seed;
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finaliser
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::vector<Sample> gen_split(std::uint64_t base_seed, std::size_t count, std::size_t size, int max_objects,
                              const SceneOptions& opts) {
  if (max_objects < 1 || max_objects > 4) throw std::invalid_argument("gen_split: max_objects must be in [1, 4]");
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t seed = derive_seed(base_seed, i);
    const int n_objects = 1 + static_cast<int>((seed >> 33) % static_cast<std::uint64_t>(max_objects));
    out.push_back(gen_scene(seed, size, n_objects, opts));
  }
  return out;
}

void write_split(const std::filesystem::path& dir, const std::string& split, const std::vector<Sample>& samples) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw std::runtime_error("write_split: cannot write manifest in " + dir.string());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    write_ppm(dir / indexed_name(split, i, ".ppm"), to_rgb8(s.image));
    write_pgm(dir / indexed_name(split, i, ".pgm"), s.mask_m);
    write_pgm(dir / indexed_name(split, i, "_e.pgm"), s.mask_e);
    write_pgm(dir / indexed_name(split, i, "_r.pgm"), s.mask_r);
    manifest << split << ' ' << i << ' ' << s.seed << '\n';
  }
}

std::vector<Sample> read_split(const std::filesystem::path& dir, const std::string& split, int thickness) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("read_split: no directory " + dir.string());
  const std::regex pattern(split + "_([0-9]{5})\\.ppm");
  std::vector<std::size_t> indices;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) indices.push_back(std::stoul(m[1].str()));
  }
  std::sort(indices.begin(), indices.end());

  std::vector<std::uint64_t> seeds(indices.empty() ? 0 : indices.back() + 1, 0);
  if (std::ifstream manifest(dir / "manifest.txt"); manifest) {
    std::string s;
    std::size_t idx;
    std::uint64_t seed;
    while (manifest >> s >> idx >> seed) {
      if (s == split && idx < seeds.size()) seeds[idx] = seed;
    }
  }

  std::vector<Sample> out;
  for (std::size_t i : indices) {
    Tensor<float> image = from_rgb8(read_ppm(dir / indexed_name(split, i, ".ppm")));
    LabelMap mask = read_pgm(dir / indexed_name(split, i, ".pgm"));
    for (auto& v : mask.data) {
      if (v > 1) throw std::runtime_error("read_split: object mask must be binary in " + indexed_name(split, i, ".pgm"));
    }
    out.push_back(make_sample(std::move(image), std::move(mask), thickness, seeds[i]));
  }
  return out;
}

}  // namespace ebseg
