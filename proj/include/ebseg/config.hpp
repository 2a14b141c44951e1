#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ebseg {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LossWeights {
  double lambda1 = 1.0;  // residual CE
  double lambda2 = 3.0;  // edge Dice
  double lambda3 = 1.0;  // merge CE
};

/// Where edge/residual supervision is applied: at the stage map resolution
/// (labels downsampled) or at input resolution (predictions upsampled).
enum class Supervision { stage, full };

struct NetConfig {
  int stages = 3;
  std::size_t channels = 64;
  std::size_t c_low = 32;
  std::size_t c_high = 64;
  std::size_t points = 96;
  int thickness = 8;
  LossWeights lambdas;
  bool laplacian_variant = false;
  bool use_rdm = true;
  bool use_pgm = true;
  bool edge_conv_relu = true;
  Supervision supervision = Supervision::stage;

  void validate() const;
};

struct TrainConfig {
  NetConfig net;
  int iters = 2000;
  std::size_t batch = 4;
  double base_lr = 0.01;
  double power = 0.9;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;       // initialisation, data order and flips
  std::uint64_t data_seed = 1;  // generated splits when data_dir is empty
  std::string data_dir;
  std::size_t train_count = 200;
  std::size_t val_count = 50;
  std::size_t size = 64;
  bool flip = true;
  int threads = 1;
  bool checkpoint_every_epoch = true;
  std::vector<std::uint64_t> ablation_seeds{1, 2, 3};

  void validate() const;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// `key = value` lines; `#` starts a comment; blank lines ignored.
KeyValues parse_key_values(std::istream& in);

TrainConfig train_config_from(const KeyValues& kv);
TrainConfig load_train_config(const std::filesystem::path& path);

/// Round-trips through parse_key_values/train_config_from.
std::string to_text(const TrainConfig& cfg);

}  // namespace ebseg
