#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ebseg/label_map.hpp"

namespace ebseg {

/// Foreground-class counts; background counts follow by symmetry
/// (bg tp = tn, bg fp = fn, bg fn = fp).
struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp, fp += o.fp, tn += o.tn, fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline constexpr double kDefaultBeta2 = 0.3;
inline constexpr std::array<int, 4> kBoundaryThresholds{3, 5, 9, 12};

/// Pixels where `ignore` is non-zero (if given) or gt == 255 are skipped.
ConfusionCounts confusion(const LabelMap& pred, const LabelMap& gt, const LabelMap* ignore = nullptr);

/// tp / (tp + fp + fn); nullopt when the union is empty.
std::optional<double> iou_foreground(const ConfusionCounts& c);
std::optional<double> iou_background(const ConfusionCounts& c);
/// Mean over defined classes; throws if neither is defined.
double miou(const ConfusionCounts& c);
double accuracy(const ConfusionCounts& c);
double mae(std::span<const float> prob, const LabelMap& gt);
/// 100 (1 - (TPR + TNR) / 2). Throws unless gt has both classes.
double ber(const ConfusionCounts& c);
/// (1 + b2) P R / (b2 P + R); 0 when P or R is undefined or both are 0.
double f_beta(const ConfusionCounts& c, double beta2 = kDefaultBeta2);

/// Squared Euclidean distance from every pixel to the nearest non-zero pixel
/// of `seeds`; +inf everywhere when there is none.
std::vector<double> distance_transform_sq(const LabelMap& seeds);

/// F1 of the 4-connected contours of pred and gt matched within t_px.
double boundary_f1(const LabelMap& pred, const LabelMap& gt, int t_px);

struct ImageMetrics {
  ConfusionCounts counts;
  double mae = 0;
  std::array<double, kBoundaryThresholds.size()> boundary_f1{};
  bool both_classes = false;  // gt holds foreground and background
};

ImageMetrics image_metrics(const LabelMap& pred, std::span<const float> prob, const LabelMap& gt);

struct MetricsReport {
  double iou_bg = 0, iou_fg = 0;  // from summed counts
  double miou = 0;                // mean over two-class images
  double acc = 0;                 // from summed counts
  double mae = 0;                 // mean over two-class images
  double ber = 0;                 // mBER, mean over two-class images
  double f_beta = 0;              // from summed counts
  std::array<double, kBoundaryThresholds.size()> boundary_f1{};  // mean over all images
  std::size_t images = 0;
  std::size_t two_class_images = 0;
  ConfusionCounts counts;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Reduces in index order. With no two-class image, the per-image means fall
/// back to summed counts (miou, ber) and all images (mae).
MetricsReport summarize(const std::vector<ImageMetrics>& per_image);

}  // namespace ebseg
