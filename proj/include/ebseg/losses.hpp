#pragma once

#include <cstdint>
#include <vector>

#include "ebseg/config.hpp"
#include "ebseg/label_map.hpp"
#include "ebseg/net.hpp"

namespace ebseg {

struct GroundTruthBundle {
  LabelMap g_m;  // binary object mask
  LabelMap g_e;  // binary edge band
  LabelMap g_r;  // residual labels, 255 on the band
};

/// Labels of a batch stacked image-major at one resolution.
struct StackedLabels {
  std::size_t n = 0, h = 0, w = 0;
  std::vector<std::uint8_t> g_m, g_e, g_r;
};

/// Input-resolution labels plus nearest-neighbour copies at the stage resolution.
struct BatchTargets {
  StackedLabels full;
  StackedLabels stage;
};

BatchTargets make_targets(const std::vector<GroundTruthBundle>& gts, std::size_t stage_h, std::size_t stage_w);

template <class T>
struct LossTerms {
  Tensor<T> edge;      // Dice(f_b, g_e); undefined without RDM
  Tensor<T> residual;  // CE(f_r, g_r); undefined without RDM
  Tensor<T> merge;     // CE(upsampled f_m, g_m)
  Tensor<T> joint;     // lambda-weighted sum
};

template <class T>
LossTerms<T> joint_loss(Tape<T>& tape, const StageOutput<T>& stage, const BatchTargets& gt, const LossWeights& w,
                        Supervision sup = Supervision::stage);

template <class T>
struct TotalLoss {
  Tensor<T> total;
  std::vector<LossTerms<T>> stages;
};

template <class T>
TotalLoss<T> total_loss(Tape<T>& tape, const std::vector<StageOutput<T>>& stages, const BatchTargets& gt,
                        const LossWeights& w, Supervision sup = Supervision::stage);

}  // namespace ebseg
