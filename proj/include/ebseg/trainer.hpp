#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "ebseg/checkpoint.hpp"
#include "ebseg/config.hpp"
#include "ebseg/metrics.hpp"
#include "ebseg/net.hpp"
#include "ebseg/synthglass.hpp"

namespace ebseg {

/// Raised on non-finite losses or gradients.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// base (1 - iter/total)^power; 0 once iter >= total.
double poly_lr(int iter, int total, double base, double power);

struct SgdState {
  std::vector<std::vector<float>> velocity;  // one buffer per parameter tensor
};

/// v <- m v + g + wd p; p <- p - lr v. Parameters without a gradient use g = 0.
void sgd_step(ParamStore<float>& params, SgdState& state, double lr, double momentum, double weight_decay);

struct TrainLogRow {
  int iter = 0;
  double lr = 0;
  double total = 0;
  std::vector<double> edge, residual, merge;  // per stage
};

std::string train_log_header(int stages);
std::string train_log_line(const TrainLogRow& row);

struct TrainResult {
  ParamStore<float> params;
  std::vector<TrainLogRow> log;
};

/// `split` is "train" or "val": read from cfg.data_dir or generated from cfg.data_seed.
std::vector<Sample> load_split(const TrainConfig& cfg, const std::string& split);

/// Runs cfg.iters SGD steps over `data`. With a non-empty out_dir, writes
/// train_log.csv, ckpt_last/ after each epoch and ckpt_final/ at the end; a
/// non-finite loss writes ckpt_lastgood/ and raises NumericError.
TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& data, const std::filesystem::path& out_dir = {},
                  std::ostream* progress = nullptr);

struct Prediction {
  LabelMap mask;
  std::vector<float> prob;  // foreground probability, H x W
};

/// Eval-mode forward of one image.
Prediction predict(const ParamStore<float>& params, const NetConfig& cfg, const Tensor<float>& image);

struct EvalResult {
  std::vector<ImageMetrics> per_image;
  std::vector<Prediction> predictions;
  MetricsReport report;
};

/// Images are sharded over `threads`; the reduction runs in index order.
EvalResult evaluate(const ParamStore<float>& params, const NetConfig& cfg, const std::vector<Sample>& data,
                    int threads = 1);

/// Scores given predictions (e.g. ground truth) without a network.
EvalResult evaluate_predictions(const std::vector<Prediction>& preds, const std::vector<Sample>& data);

/// per_image.csv, summary.txt and, if `overlays`, one overlay PPM per image
/// (red object mask, green predicted boundary).
void write_eval_report(const std::filesystem::path& dir, const std::vector<Sample>& data, const EvalResult& result,
                       bool overlays = true);

std::string format_summary(const MetricsReport& r);

struct AblationVariant {
  std::string name;
  NetConfig net;
};

/// baseline, +rdm, +rdm+cascade, +rdm+cascade+pgm derived from `base`.
std::vector<AblationVariant> ablation_variants(const NetConfig& base);

struct AblationRow {
  std::string variant;
  std::vector<MetricsReport> per_seed;
  std::vector<std::vector<ImageMetrics>> per_image;  // per seed
  MetricsReport median;  // element-wise median over seeds
};

/// Trains every variant for every seed in cfg.ablation_seeds on the same
/// train split and scores it on the val split. Writes ablation.csv and
/// ablation.txt into out_dir when it is non-empty.
std::vector<AblationRow> ablate(const TrainConfig& cfg, const std::filesystem::path& out_dir = {},
                                std::ostream* progress = nullptr);

std::string format_ablation(const std::vector<AblationRow>& rows);

/// Writes PCA views of each stage's edge and merge features, the edge map and
/// the prediction overlay for one image.
void visualize(const Checkpoint& ck, const Tensor<float>& image, const std::filesystem::path& out_dir);

}  // namespace ebseg
