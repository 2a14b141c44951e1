#include "ebseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ebseg {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) { return static_cast<double>(num) / static_cast<double>(den); }

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) along one line.
// Infinite samples contribute no parabola.
void edt_1d(const double* f, std::size_t n, double* d, std::vector<std::size_t>& v, std::vector<double>& z) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  long k = -1;
  for (std::size_t q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    const double qd = static_cast<double>(q);
    double s = -kInf;
    while (k >= 0) {
      const double vk = static_cast<double>(v[k]);
      s = ((f[q] + qd * qd) - (f[v[k]] + vk * vk)) / (2.0 * qd - 2.0 * vk);
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -kInf : s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d, d + n, kInf);
    return;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double qd = static_cast<double>(q);
    while (z[k + 1] < qd) ++k;
    const double dq = qd - static_cast<double>(v[k]);
    d[q] = dq * dq + f[v[k]];
  }
}

std::size_t count_nonzero(const LabelMap& m) {
  std::size_t n = 0;
  for (auto v : m.data) n += v != 0;
  return n;
}

}  // namespace

ConfusionCounts confusion(const LabelMap& pred, const LabelMap& gt, const LabelMap* ignore) {
  if (!pred.same_shape(gt) || (ignore && !ignore->same_shape(gt)))
    throw std::invalid_argument("confusion: map sizes differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.data[i] == kIgnoreLabel || (ignore && ignore->data[i])) continue;
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::optional<double> iou_foreground(const ConfusionCounts& c) {
  const std::uint64_t uni = c.tp + c.fp + c.fn;
  if (uni == 0) return std::nullopt;
  return ratio(c.tp, uni);
}

std::optional<double> iou_background(const ConfusionCounts& c) {
  const std::uint64_t uni = c.tn + c.fp + c.fn;
  if (uni == 0) return std::nullopt;
  return ratio(c.tn, uni);
}

double miou(const ConfusionCounts& c) {
  const auto fg = iou_foreground(c), bg = iou_background(c);
  if (fg && bg) return (*fg + *bg) / 2.0;
  if (fg) return *fg;
  if (bg) return *bg;
  throw std::invalid_argument("miou: no class is defined (no valid pixels)");
}

double accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) throw std::invalid_argument("accuracy: no valid pixels");
  return ratio(c.tp + c.tn, c.total());
}

double mae(std::span<const float> prob, const LabelMap& gt) {
  if (prob.size() != gt.size()) throw std::invalid_argument("mae: size mismatch");
  if (gt.size() == 0) return 0.0;
  double acc = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) acc += std::abs(static_cast<double>(prob[i]) - (gt.data[i] ? 1.0 : 0.0));
  return acc / static_cast<double>(gt.size());
}

double ber(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) throw std::invalid_argument("ber: ground truth has a single class");
  return 100.0 * (1.0 - 0.5 * (ratio(c.tp, c.tp + c.fn) + ratio(c.tn, c.tn + c.fp)));
}

double f_beta(const ConfusionCounts& c, double beta2) {
  if (c.tp + c.fp == 0 || c.tp + c.fn == 0) return 0.0;
  const double p = ratio(c.tp, c.tp + c.fp), r = ratio(c.tp, c.tp + c.fn);
  if (p + r == 0) return 0.0;
  return (1.0 + beta2) * p * r / (beta2 * p + r);
}

std::vector<double> distance_transform_sq(const LabelMap& seeds) {
  const std::size_t h = seeds.height, w = seeds.width;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(h * w);
  for (std::size_t i = 0; i < h * w; ++i) grid[i] = seeds.data[i] ? 0.0 : kInf;
  std::vector<std::size_t> v;
  std::vector<double> z, f(std::max(h, w)), d(std::max(h, w));
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) f[y] = grid[y * w + x];
    edt_1d(f.data(), h, d.data(), v, z);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = d[y];
  }
  for (std::size_t y = 0; y < h; ++y) {
    edt_1d(grid.data() + y * w, w, d.data(), v, z);
    std::copy_n(d.begin(), w, grid.begin() + static_cast<std::ptrdiff_t>(y * w));
  }
  return grid;
}

double boundary_f1(const LabelMap& pred, const LabelMap& gt, int t_px) {
  if (t_px < 1) throw std::invalid_argument("boundary_f1: threshold must be >= 1 px");
  if (!pred.same_shape(gt)) throw std::invalid_argument("boundary_f1: map sizes differ");
  const LabelMap cp = contour4(pred), cg = contour4(gt);
  const std::size_t np = count_nonzero(cp), ng = count_nonzero(cg);
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const double t2 = static_cast<double>(t_px) * t_px;
  const auto dg = distance_transform_sq(cg), dp = distance_transform_sq(cp);
  std::size_t hit_p = 0, hit_g = 0;
  for (std::size_t i = 0; i < cp.size(); ++i) {
    if (cp.data[i] && dg[i] <= t2) ++hit_p;
    if (cg.data[i] && dp[i] <= t2) ++hit_g;
  }
  const double precision = ratio(hit_p, np), recall = ratio(hit_g, ng);
  if (precision + recall == 0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

ImageMetrics image_metrics(const LabelMap& pred, std::span<const float> prob, const LabelMap& gt) {
  ImageMetrics m;
  m.counts = confusion(pred, gt);
  m.mae = mae(prob, gt);
  for (std::size_t t = 0; t < kBoundaryThresholds.size(); ++t) m.boundary_f1[t] = boundary_f1(pred, gt, kBoundaryThresholds[t]);
  m.both_classes = m.counts.tp + m.counts.fn > 0 && m.counts.tn + m.counts.fp > 0;
  return m;
}

MetricsReport summarize(const std::vector<ImageMetrics>& per_image) {
  MetricsReport r;
  r.images = per_image.size();
  if (per_image.empty()) return r;
  double miou_sum = 0, mae_sum = 0, mae_all = 0, ber_sum = 0;
  for (const auto& m : per_image) {
    r.counts += m.counts;
    mae_all += m.mae;
    for (std::size_t t = 0; t < r.boundary_f1.size(); ++t) r.boundary_f1[t] += m.boundary_f1[t];
    if (!m.both_classes) continue;
    ++r.two_class_images;
    miou_sum += miou(m.counts);
    mae_sum += m.mae;
    ber_sum += ber(m.counts);
  }
  const double n = static_cast<double>(r.images);
  for (auto& v : r.boundary_f1) v /= n;
  r.iou_fg = iou_foreground(r.counts).value_or(0.0);
  r.iou_bg = iou_background(r.counts).value_or(0.0);
  r.acc = r.counts.total() ? accuracy(r.counts) : 0.0;
  r.f_beta = f_beta(r.counts);
  if (r.two_class_images > 0) {
    const double k = static_cast<double>(r.two_class_images);
    r.miou = miou_sum / k;
    r.mae = mae_sum / k;
    r.ber = ber_sum / k;
  } else {
    r.miou = r.counts.total() ? miou(r.counts) : 0.0;
    r.mae = mae_all / n;
    const bool two = r.counts.tp + r.counts.fn > 0 && r.counts.tn + r.counts.fp > 0;
    r.ber = two ? ber(r.counts) : 0.0;
  }
  return r;
}

}  // namespace ebseg
