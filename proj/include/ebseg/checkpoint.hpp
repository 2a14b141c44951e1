#pragma once

// A checkpoint is a directory holding
//   config.txt     the training configuration (key = value)
//   manifest.txt   one "name d0xd1x..." line per tensor, in storage order
//   tensors.eblt   the tensors' EBLT records back to back
// Batch-norm running statistics are stored as `<bn>.running_mean` and
// `<bn>.running_var`.

#include <filesystem>

#include "ebseg/config.hpp"
#include "ebseg/params.hpp"

namespace ebseg {

struct Checkpoint {
  TrainConfig config;
  ParamStore<float> params;
};

void save_checkpoint(const std::filesystem::path& dir, const TrainConfig& cfg, const ParamStore<float>& params);

/// Throws if the stored tensors do not match the network described by the
/// stored config, listing every mismatched name and shape.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace ebseg
