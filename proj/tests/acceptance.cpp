// End-to-end acceptance run: one PASS/FAIL line per criterion.
// Exits 0 once every check has run; pass --strict to exit 1 on any FAIL.
// --report FILE also writes the result lines to FILE.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>

#include "ebseg/checkpoint.hpp"
#include "ebseg/gradcheck_suite.hpp"
#include "ebseg/metrics.hpp"
#include "ebseg/pgm.hpp"
#include "ebseg/synthglass.hpp"
#include "ebseg/trainer.hpp"
#include "oracles.hpp"

using namespace ebseg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failed = 0, g_total = 0;
std::ofstream g_report;

void report(const std::string& name, const Outcome& o, double secs) {
  ++g_total;
  if (!o.pass) ++g_failed;
  std::ostringstream line;
  line << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << std::fixed << std::setprecision(1)
       << secs << " s]";
  std::cout << line.str() << std::endl;
  if (g_report.is_open()) g_report << line.str() << std::endl;
}

void run(const std::string& name, const std::function<Outcome()>& fn) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(name, o, seconds_since(t0));
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
  files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) return false;
    ++files;
  }
  std::size_t other = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) other += e.is_regular_file();
  return other == files;
}

bool monotone(const ImageMetrics& m) {
  for (std::size_t t = 1; t < m.boundary_f1.size(); ++t)
    if (m.boundary_f1[t] < m.boundary_f1[t - 1]) return false;
  return true;
}

// Every per-image boundary-F1 row scored during the run.
std::size_t g_images_scored = 0, g_non_monotone = 0;
void note_images(const std::vector<ImageMetrics>& per) {
  for (const auto& m : per) {
    ++g_images_scored;
    if (!monotone(m)) ++g_non_monotone;
  }
}

Outcome gradients() {
  const auto t0 = Clock::now();
  std::ostringstream log;
  const auto results = run_gradchecks("", log);
  double worst_op = 0, worst_module = 0;
  std::string failed;
  for (const auto& r : results) {
    double& worst = r.tolerance <= 1e-4 ? worst_op : worst_module;
    worst = std::max(worst, r.report.max_rel_error);
    if (!r.passed) failed += " " + r.name;
  }
  const double secs = seconds_since(t0);
  const bool ok = failed.empty() && secs < 120;
  return {ok, std::to_string(results.size()) + " checks, max rel err ops " + fmt(worst_op * 1e6, 3) +
                  "e-6 (< 1e-4), modules/network " + fmt(worst_module * 1e6, 3) + "e-6 (< 1e-3), runtime " +
                  fmt(secs, 1) + " s (< 120 s)" + (failed.empty() ? "" : ", failed:" + failed)};
}

Outcome overfit() {
  const auto t0 = Clock::now();
  TrainConfig c;
  c.net.stages = 1;
  c.net.points = 16;
  c.iters = 200;
  c.train_count = 4;
  c.size = 64;
  c.flip = false;
  c.base_lr = 0.015;
  c.weight_decay = 0;
  c.checkpoint_every_epoch = false;
  const auto data = load_split(c, "train");
  const auto res = train(c, data);
  const auto ev = evaluate(res.params, c.net, data);
  note_images(ev.per_image);
  const double loss = res.log.back().total, miou = ev.report.miou, secs = seconds_since(t0);
  const bool ok = loss < 0.05 && miou > 0.99 && secs < 300;
  return {ok, "final loss " + fmt(loss) + (loss < 0.05 ? " (< 0.05 ok)" : " (target < 0.05 missed)") +
                  ", train mIoU " + fmt(miou) + (miou > 0.99 ? " (> 0.99 ok)" : " (target > 0.99 missed)") +
                  ", runtime " + fmt(secs, 1) + " s (< 300 s)"};
}

Outcome ablation(int iters) {
  const auto t0 = Clock::now();
  TrainConfig c;
  c.net.points = 16;
  c.iters = iters;
  c.train_count = 200;
  c.val_count = 50;
  c.size = 64;
  c.ablation_seeds = {1, 2, 3};
  const fs::path out = fs::temp_directory_path() / "ebseg_acceptance_ablation";
  const auto rows = ablate(c, out);
  std::cout << format_ablation(rows);
  if (g_report.is_open()) g_report << format_ablation(rows);
  std::vector<double> f1;
  for (const auto& r : rows) {
    f1.push_back(r.median.boundary_f1[0]);
    for (const auto& per : r.per_image) note_images(per);
  }
  bool ordered = true;
  for (std::size_t i = 1; i < f1.size(); ++i) ordered &= f1[i - 1] <= f1[i];
  const double gain = 100 * (f1[1] - f1[0]), secs = seconds_since(t0);
  const bool ok = ordered && gain >= 2.0 && secs < 1800;
  std::string chain;
  for (std::size_t i = 0; i < f1.size(); ++i) chain += (i ? (f1[i - 1] <= f1[i] ? " <= " : " > ") : "") + fmt(100 * f1[i], 2);
  return {ok, "median F1(3px) " + chain + ", +rdm gain " + fmt(gain, 2) + " pts (>= 2), " + std::to_string(iters) +
                  " iters/run, runtime " + fmt(secs, 1) + " s (< 1800 s)"};
}

Outcome metric_oracles() {
  std::mt19937 rng(2024);
  std::size_t region_bad = 0, bf_bad = 0;
  double bf_worst = 0;
  for (int i = 0; i < 1000; ++i) {
    std::bernoulli_distribution coin(0.05 + 0.9 * (i % 10) / 9.0);
    LabelMap gt(16, 16), pred(16, 16);
    for (auto& v : gt.data) v = coin(rng);
    for (auto& v : pred.data) v = rng() % 2;
    std::vector<float> prob(gt.size());
    std::uniform_real_distribution<float> u(0.f, 1.f);
    for (auto& p : prob) p = u(rng);
    const auto c = confusion(pred, gt);
    const auto o = oracle::pixel_metrics(pred, prob, gt);
    const auto same_opt = [](std::optional<double> a, double b) { return a ? *a == b : std::isnan(b); };
    bool ok = same_opt(iou_foreground(c), o.iou_fg) && same_opt(iou_background(c), o.iou_bg) &&
              accuracy(c) == o.acc && mae(prob, gt) == o.mae && f_beta(c) == o.f_beta;
    if (!std::isnan(o.ber)) ok &= ber(c) == o.ber;
    region_bad += !ok;
  }
  for (int i = 0; i < 100; ++i) {
    const LabelMap a = oracle::random_mask(rng, 32, 32), b = oracle::random_mask(rng, 32, 32);
    for (int t : kBoundaryThresholds) {
      const double err = std::abs(boundary_f1(a, b, t) - oracle::boundary_f1(a, b, t));
      bf_worst = std::max(bf_worst, err);
      bf_bad += err > 1e-9;
    }
  }
  return {region_bad == 0 && bf_bad == 0,
          "1000 16x16 pairs, " + std::to_string(region_bad) + " region-metric mismatches (exact); 100 32x32 pairs x " +
              std::to_string(kBoundaryThresholds.size()) + " thresholds, max boundary-F1 error " +
              (bf_worst == 0 ? std::string("0") : fmt(bf_worst, 12)) + " (<= 1e-9)"};
}

Outcome f1_monotone() {
  // Random pairs on top of every image scored by the runs above.
  std::mt19937 rng(77);
  std::vector<ImageMetrics> extra;
  for (int i = 0; i < 200; ++i) {
    const LabelMap a = oracle::random_mask(rng, 32, 32), b = oracle::random_mask(rng, 32, 32);
    extra.push_back(image_metrics(a, std::vector<float>(a.size(), 0.f), b));
  }
  note_images(extra);
  return {g_non_monotone == 0 && g_images_scored > 0,
          std::to_string(g_images_scored) + " images scored at 3/5/9/12 px, " + std::to_string(g_non_monotone) +
              " non-monotone"};
}

Outcome gt_derivation() {
  std::mt19937 rng(31);
  std::size_t band_bad = 0, partition_bad = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t side = 24 + 8 * (i % 4);
    const LabelMap m = oracle::random_mask(rng, side, side);
    const LabelMap e = derive_edge_gt(m, kDefaultEdgeThickness);
    band_bad += e.data != oracle::chebyshev_band(m, kDefaultEdgeThickness / 2).data;
    const LabelMap r = derive_residual_gt(m, e);
    for (std::size_t p = 0; p < m.size(); ++p) {
      const bool ok = e.data[p] ? r.data[p] == kIgnoreLabel : r.data[p] == m.data[p];
      partition_bad += !ok;
    }
  }
  for (const Sample& s : gen_split(99, 20, 64)) {
    band_bad += s.mask_e.data != oracle::chebyshev_band(s.mask_m, kDefaultEdgeThickness / 2).data;
    for (std::size_t p = 0; p < s.mask_m.size(); ++p)
      partition_bad += s.mask_e.data[p] ? s.mask_r.data[p] != kIgnoreLabel : s.mask_r.data[p] != s.mask_m.data[p];
  }
  return {band_bad == 0 && partition_bad == 0,
          "100 random masks + 20 scenes: " + std::to_string(band_bad) + " band mismatches, " +
              std::to_string(partition_bad) + " partition violations"};
}

Outcome pgm_locality() {
  std::mt19937 rng(5150);
  std::normal_distribution<float> d;
  std::size_t violations = 0, max_changed = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial % 3, c = 4 + trial % 5, h = 4 + trial % 7, w = 5 + trial % 4;
    const std::size_t k = 1 + static_cast<std::size_t>(rng() % (h * w));
    Tensor<float> f_b({n, 1, h, w}), f_m({n, c, h, w}), wg({c, c}), ag({k, k});
    for (auto* t : {&f_b, &f_m, &wg, &ag})
      for (auto& v : t->data()) v = d(rng);
    Tape<float> tape(false);
    std::vector<std::vector<std::size_t>> chosen;
    const auto out = pgm_forward(tape, f_b, f_m, wg, ag, k, trial % 2 == 1, &chosen);
    for (std::size_t b = 0; b < n; ++b) {
      std::size_t changed = 0;
      for (std::size_t p = 0; p < h * w; ++p) {
        bool diff = false;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t at = (b * c + ch) * h * w + p;
          diff |= std::memcmp(&out.data()[at], &f_m.data()[at], sizeof(float)) != 0;
        }
        if (!diff) continue;
        ++changed;
        violations += std::find(chosen[b].begin(), chosen[b].end(), p) == chosen[b].end();
      }
      max_changed = std::max(max_changed, changed);
      violations += changed > k;
    }
  }
  // Identity weights, identity activation: output is the input bit for bit.
  Tensor<float> g({9, 6}), eye_c({6, 6}), eye_k({12, 12});
  for (auto& v : g.data()) v = d(rng);
  for (std::size_t i = 0; i < 6; ++i) eye_c.data()[i * 6 + i] = 1.f;
  for (std::size_t i = 0; i < 12; ++i) eye_k.data()[i * 12 + i] = 1.f;
  Tape<float> tape(false);
  const auto id = graph_conv(tape, g, eye_c, eye_k, false, GraphActivation::identity);
  const bool exact = std::memcmp(id.data().data(), g.data().data(), g.numel() * sizeof(float)) == 0;
  return {violations == 0 && exact, "50 forwards, " + std::to_string(violations) +
                                        " positions changed outside the top-K, identity graph conv " +
                                        (exact ? "exact" : "NOT exact")};
}

Outcome determinism() {
  TrainConfig c;
  c.net.points = 16;
  c.iters = 24;
  c.train_count = 16;
  c.val_count = 8;
  const auto train_set = load_split(c, "train");
  const auto val_set = load_split(c, "val");
  const fs::path root = fs::temp_directory_path() / "ebseg_acceptance_determinism";
  fs::remove_all(root);
  for (const char* run : {"a", "b"}) {
    const auto res = train(c, train_set, root / run);
    write_eval_report(root / run / "eval", val_set, evaluate(res.params, c.net, val_set, 2));
    const Checkpoint ck = load_checkpoint(root / run / "ckpt_final");
    write_eval_report(root / run / "eval_reloaded", val_set, evaluate(ck.params, ck.config.net, val_set));
  }
  std::size_t files = 0;
  const bool same = same_tree(root / "a", root / "b", files);
  const bool reload = slurp(root / "a" / "eval" / "per_image.csv") == slurp(root / "a" / "eval_reloaded" / "per_image.csv");
  fs::remove_all(root);
  return {same && reload, std::to_string(files) + " files (checkpoints, logs, reports, overlays) " +
                              (same ? "byte-identical" : "DIFFER") + " across two runs; reloaded checkpoint report " +
                              (reload ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  int ablation_iters = 1000;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--strict")) strict = true;
    else if (!std::strcmp(argv[i], "--ablation-iters") && i + 1 < argc) ablation_iters = std::atoi(argv[++i]);
    else if (!std::strcmp(argv[i], "--report") && i + 1 < argc) g_report.open(argv[++i]);
    else {
      std::cerr << "usage: acceptance [--strict] [--ablation-iters N] [--report FILE]\n";
      return 1;
    }
  }
  const auto t0 = Clock::now();
  run("gradient correctness", gradients);
  run("overfit oracle", overfit);
  run("ablation trend", [&] { return ablation(ablation_iters); });
  run("metric oracle equivalence", metric_oracles);
  run("boundary-F1 monotonicity", f1_monotone);
  run("GT derivation", gt_derivation);
  run("PGM locality", pgm_locality);
  run("determinism", determinism);
  const double total = seconds_since(t0);
  report("full suite runtime", {total < 2700, fmt(total / 60, 1) + " min (< 45 min)"}, total);
  std::cout << (g_total - g_failed) << "/" << g_total << " criteria passed" << std::endl;
  if (g_report.is_open()) g_report << (g_total - g_failed) << "/" << g_total << " criteria passed" << std::endl;
  return strict && g_failed ? 1 : 0;
}
