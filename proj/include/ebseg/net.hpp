#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ebseg/config.hpp"
#include "ebseg/params.hpp"

namespace ebseg {

template <class T>
struct BackboneFeatures {
  Tensor<T> f_low;    // stride 4, C_low
  Tensor<T> f_high1;  // stride 8, C_high (block 3), used by stage 1
  Tensor<T> f_high2;  // stride 8, C_high (block 4), used by later stages
  Tensor<T> f_in0;    // stride 8, C
};

template <class T>
struct StageOutput {
  Tensor<T> f_b;  // N x 1 x h x w edge probability (undefined without RDM)
  Tensor<T> f_r;  // N x 2 x h x w residual logits (undefined without RDM)
  Tensor<T> f_m;  // N x 2 x h x w merge logits
  Tensor<T> f_edge;
  Tensor<T> f_merge;
  Tensor<T> f_merge_refined;
  std::vector<std::vector<std::size_t>> points;  // PGM selection per image
};

template <class T>
struct NetOutput {
  std::vector<StageOutput<T>> stages;
  Tensor<T> logits;  // last stage f_m resized to input size
};

/// Fresh parameters for `cfg`. Final layers of every head start at zero.
ParamStore<float> init_params(const NetConfig& cfg, std::uint64_t seed);

/// image: N x 3 x H x W with H, W multiples of 8 and >= 32.
template <class T>
BackboneFeatures<T> backbone_forward(Tape<T>& tape, ParamStore<T>& ps, const Tensor<T>& image, NormMode mode);

/// conv3x3-BN-relu, conv3x3-BN-relu, conv1x1 -> 2 logits.
template <class T>
Tensor<T> pred_head(Tape<T>& tape, ParamStore<T>& ps, const std::string& prefix, const Tensor<T>& f, NormMode mode);

template <class T>
NetOutput<T> cascade_forward(Tape<T>& tape, ParamStore<T>& ps, const NetConfig& cfg, const Tensor<T>& image,
                             NormMode mode);

/// Stage `n` (1-based) parameter prefix.
inline std::string stage_prefix(int n) { return "s" + std::to_string(n); }

}  // namespace ebseg
