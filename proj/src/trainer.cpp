#include "ebseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "ebseg/image_io.hpp"
#include "ebseg/losses.hpp"
#include "ebseg/rdm.hpp"

namespace ebseg {

namespace {

Tensor<float> stack_images(const std::vector<const Sample*>& batch) {
  const std::size_t h = batch[0]->height(), w = batch[0]->width();
  Tensor<float> out({batch.size(), 3, h, w});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->height() != h || batch[i]->width() != w)
      throw std::invalid_argument("batch: images differ in size");
    std::copy(batch[i]->image.data().begin(), batch[i]->image.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(i * 3 * h * w));
  }
  return out;
}

GroundTruthBundle bundle(const Sample& s) { return {s.mask_m, s.mask_e, s.mask_r}; }

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Rgb8Image overlay(const Sample& s, const LabelMap& pred) {
  Rgb8Image img = to_rgb8(s.image);
  const LabelMap edge = contour4(pred);
  for (std::size_t p = 0; p < pred.size(); ++p) {
    std::uint8_t* px = &img.pixels[p * 3];
    if (edge.data[p]) {
      px[0] = 0, px[1] = 255, px[2] = 0;
    } else if (pred.data[p]) {
      px[0] = static_cast<std::uint8_t>((px[0] + 255) / 2);
      px[1] = static_cast<std::uint8_t>(px[1] / 2);
      px[2] = static_cast<std::uint8_t>(px[2] / 2);
    }
  }
  return img;
}

// C x h x w features of image 0 -> PCA colours upsampled (nearest) to H x W.
Rgb8Image pca_view(const Tensor<float>& f, std::size_t out_h, std::size_t out_w) {
  const Tensor<float> proj = pca_project(f, 3);
  const std::size_t h = proj.dim(1), w = proj.dim(2);
  Tensor<float> up({3, out_h, out_w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x)
        up[(c * out_h + y) * out_w + x] = proj[(c * h + y * h / out_h) * w + x * w / out_w];
  return to_rgb8(up);
}

Tensor<float> first_image(const Tensor<float>& t) {
  const std::size_t per = t.numel() / t.dim(0);
  std::vector<float> v(t.data().begin(), t.data().begin() + static_cast<std::ptrdiff_t>(per));
  return Tensor<float>({1, t.dim(1), t.dim(2), t.dim(3)}, std::move(v));
}

}  // namespace

double poly_lr(int iter, int total, double base, double power) {
  if (total <= 0 || iter >= total) return 0.0;
  if (iter <= 0) return base;
  return base * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(total), power);
}

void sgd_step(ParamStore<float>& params, SgdState& state, double lr, double momentum, double weight_decay) {
  auto& tensors = params.tensors();
  if (state.velocity.size() != tensors.size()) {
    state.velocity.clear();
    for (const auto& e : tensors) state.velocity.emplace_back(e.value.numel(), 0.0f);
  }
  // Validate every gradient before touching any parameter.
  for (const auto& e : tensors) {
    if (!e.value.has_grad()) continue;
    for (float g : e.value.grad())
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + e.name);
  }
  const float m = static_cast<float>(momentum), wd = static_cast<float>(weight_decay), step = static_cast<float>(lr);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor<float>& p = tensors[i].value;
    std::vector<float>& v = state.velocity[i];
    auto data = p.data();
    const bool has = p.has_grad();
    const auto grad = has ? p.grad() : std::span<float>{};
    for (std::size_t j = 0; j < v.size(); ++j) {
      const float g = has ? grad[j] : 0.0f;
      v[j] = m * v[j] + g + wd * data[j];
      data[j] -= step * v[j];
    }
  }
}

std::string train_log_header(int stages) {
  std::string h = "iter,lr,L_total";
  for (const char* term : {"L_edge", "L_residual", "L_merge"})
    for (int s = 1; s <= stages; ++s) h += "," + std::string(term) + "[" + std::to_string(s) + "]";
  return h;
}

std::string train_log_line(const TrainLogRow& row) {
  std::string line = std::to_string(row.iter) + "," + fmt_double(row.lr) + "," + fmt_double(row.total);
  for (const auto* terms : {&row.edge, &row.residual, &row.merge})
    for (double v : *terms) line += "," + fmt_double(v);
  return line;
}

std::vector<Sample> load_split(const TrainConfig& cfg, const std::string& split) {
  if (split != "train" && split != "val") throw std::invalid_argument("load_split: unknown split " + split);
  if (!cfg.data_dir.empty()) {
    auto samples = read_split(cfg.data_dir, split, cfg.net.thickness);
    if (samples.empty()) throw std::runtime_error("no " + split + " samples in " + cfg.data_dir);
    return samples;
  }
  const std::size_t count = split == "train" ? cfg.train_count : cfg.val_count;
  SceneOptions opts;
  opts.thickness = cfg.net.thickness;
  return gen_split(derive_seed(cfg.data_seed, split == "train" ? 1 : 2), count, cfg.size, 3, opts);
}

TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& data, const std::filesystem::path& out_dir,
                  std::ostream* progress) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: no training samples");
  TrainResult result{init_params(cfg.net, cfg.seed), {}};
  ParamStore<float>& ps = result.params;
  SgdState sgd;
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x5eed));
  std::bernoulli_distribution coin(0.5);

  const bool write = !out_dir.empty();
  std::ofstream log;
  if (write) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir / "train_log.csv", std::ios::binary);
    log << train_log_header(cfg.net.stages) << '\n';
  }

  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();  // forces a shuffle on first use
  const std::size_t steps_per_epoch = (data.size() + cfg.batch - 1) / cfg.batch;

  for (int it = 0; it < cfg.iters; ++it) {
    std::vector<Sample> flipped;
    std::vector<const Sample*> batch;
    flipped.reserve(cfg.batch);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Sample& s = data[order[cursor++]];
      if (cfg.flip && coin(rng)) {
        flipped.push_back(flip_horizontal(s));
        batch.push_back(&flipped.back());
      } else {
        batch.push_back(&s);
      }
    }

    const double lr = poly_lr(it, cfg.iters, cfg.base_lr, cfg.power);
    Tape<float> tape;
    ps.zero_grad();
    const Tensor<float> images = stack_images(batch);
    const NetOutput<float> out = cascade_forward(tape, ps, cfg.net, images, NormMode::train);
    std::vector<GroundTruthBundle> gts;
    for (const Sample* s : batch) gts.push_back(bundle(*s));
    const auto& f0 = out.stages[0].f_m;
    const BatchTargets targets = make_targets(gts, f0.dim(2), f0.dim(3));
    const TotalLoss<float> loss = total_loss(tape, out.stages, targets, cfg.net.lambdas, cfg.net.supervision);

    TrainLogRow row;
    row.iter = it;
    row.lr = lr;
    row.total = loss.total.item();
    for (const auto& t : loss.stages) {
      row.edge.push_back(t.edge.defined() ? t.edge.item() : 0.0);
      row.residual.push_back(t.residual.defined() ? t.residual.item() : 0.0);
      row.merge.push_back(t.merge.item());
    }
    if (write) log << train_log_line(row) << '\n';
    if (!std::isfinite(row.total)) {
      if (write) save_checkpoint(out_dir / "ckpt_lastgood", cfg, ps);
      throw NumericError("non-finite loss at iteration " + std::to_string(it));
    }
    if (progress && (it % 50 == 0 || it + 1 == cfg.iters))
      *progress << "iter " << it << " lr " << fmt_double(lr) << " loss " << fmt_double(row.total) << std::endl;
    result.log.push_back(std::move(row));

    tape.backward(loss.total);
    try {
      sgd_step(ps, sgd, lr, cfg.momentum, cfg.weight_decay);
    } catch (const NumericError&) {
      if (write) save_checkpoint(out_dir / "ckpt_lastgood", cfg, ps);
      throw;
    }
    if (write && cfg.checkpoint_every_epoch && (it + 1) % steps_per_epoch == 0)
      save_checkpoint(out_dir / "ckpt_last", cfg, ps);
  }
  ps.zero_grad();
  if (write) save_checkpoint(out_dir / "ckpt_final", cfg, ps);
  return result;
}

Prediction predict(const ParamStore<float>& params, const NetConfig& cfg, const Tensor<float>& image) {
  // Eval mode reads the batch-norm statistics without updating them and the
  // non-recording tape writes no gradients, so the store is not modified.
  auto& ps = const_cast<ParamStore<float>&>(params);
  Tape<float> tape(false);
  const std::size_t h = image.dim(image.ndim() - 2), w = image.dim(image.ndim() - 1);
  const Tensor<float> batch = image.ndim() == 4 ? image : Tensor<float>({1, 3, h, w}, std::vector<float>(image.data().begin(), image.data().end()));
  const NetOutput<float> out = cascade_forward(tape, ps, cfg, batch, NormMode::eval);
  Prediction p;
  p.mask = LabelMap(h, w);
  p.prob.resize(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    const double d = static_cast<double>(out.logits[h * w + i]) - out.logits[i];
    p.prob[i] = static_cast<float>(1.0 / (1.0 + std::exp(-d)));
    p.mask.data[i] = d > 0 ? 1 : 0;
  }
  return p;
}

EvalResult evaluate(const ParamStore<float>& params, const NetConfig& cfg, const std::vector<Sample>& data,
                    int threads) {
  EvalResult r;
  r.per_image.resize(data.size());
  r.predictions.resize(data.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      r.predictions[i] = predict(params, cfg, data[i].image);
      r.per_image[i] = image_metrics(r.predictions[i].mask, r.predictions[i].prob, data[i].mask_m);
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, std::max<std::size_t>(data.size(), 1));
  if (n_threads == 1) {
    work(0, data.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (data.size() + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
      const std::size_t b = std::min(data.size(), t * chunk), e = std::min(data.size(), b + chunk);
      pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  r.report = summarize(r.per_image);
  return r;
}

EvalResult evaluate_predictions(const std::vector<Prediction>& preds, const std::vector<Sample>& data) {
  if (preds.size() != data.size()) throw std::invalid_argument("evaluate_predictions: count mismatch");
  EvalResult r;
  r.predictions = preds;
  for (std::size_t i = 0; i < data.size(); ++i)
    r.per_image.push_back(image_metrics(preds[i].mask, preds[i].prob, data[i].mask_m));
  r.report = summarize(r.per_image);
  return r;
}

std::string format_summary(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "# mIoU, mBER and mAE average images containing both classes (" << r.two_class_images << " of "
     << r.images << "); IoU, ACC and F_beta use summed counts; F1 averages all images.\n";
  os << "mIoU\tIoU(bg)\tIoU(fg)\tACC\tmBER\tmAE\tF_beta\tF1(12px)\tF1(9px)\tF1(5px)\tF1(3px)\n";
  os << 100 * r.miou << '\t' << 100 * r.iou_bg << '\t' << 100 * r.iou_fg << '\t' << 100 * r.acc << '\t' << r.ber
     << '\t' << std::setprecision(4) << r.mae << std::setprecision(2) << '\t' << 100 * r.f_beta;
  for (std::size_t t = kBoundaryThresholds.size(); t-- > 0;) os << '\t' << 100 * r.boundary_f1[t];
  os << '\n';
  return os.str();
}

void write_eval_report(const std::filesystem::path& dir, const std::vector<Sample>& data, const EvalResult& result,
                       bool overlays) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "per_image.csv", std::ios::binary);
  csv << "image,seed,iou_fg,iou_bg,miou,acc,mae,ber,f_beta";
  for (int t : kBoundaryThresholds) csv << ",f1_" << t << "px";
  csv << ",two_class\n";
  auto opt = [](std::optional<double> v) { return v ? fmt_double(*v) : std::string(); };
  for (std::size_t i = 0; i < result.per_image.size(); ++i) {
    const ImageMetrics& m = result.per_image[i];
    csv << i << ',' << data[i].seed << ',' << opt(iou_foreground(m.counts)) << ',' << opt(iou_background(m.counts))
        << ',' << fmt_double(miou(m.counts)) << ',' << fmt_double(accuracy(m.counts)) << ',' << fmt_double(m.mae)
        << ',' << (m.both_classes ? fmt_double(ber(m.counts)) : std::string()) << ','
        << fmt_double(f_beta(m.counts));
    for (double f : m.boundary_f1) csv << ',' << fmt_double(f);
    csv << ',' << (m.both_classes ? 1 : 0) << '\n';
  }
  const MetricsReport& r = result.report;
  csv << "summary,," << fmt_double(r.iou_fg) << ',' << fmt_double(r.iou_bg) << ',' << fmt_double(r.miou) << ','
      << fmt_double(r.acc) << ',' << fmt_double(r.mae) << ',' << fmt_double(r.ber) << ',' << fmt_double(r.f_beta);
  for (double f : r.boundary_f1) csv << ',' << fmt_double(f);
  csv << ',' << r.two_class_images << '\n';

  std::ofstream(dir / "summary.txt", std::ios::binary) << format_summary(r);

  if (overlays) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::ostringstream name;
      name << "overlay_" << std::setw(5) << std::setfill('0') << i << ".ppm";
      write_ppm(dir / name.str(), overlay(data[i], result.predictions[i].mask));
    }
  }
}

std::vector<AblationVariant> ablation_variants(const NetConfig& base) {
  std::vector<AblationVariant> v;
  NetConfig n = base;
  n.stages = 1, n.use_rdm = false, n.use_pgm = false;
  v.push_back({"baseline", n});
  n.use_rdm = true;
  v.push_back({"+rdm", n});
  n.stages = base.stages;
  v.push_back({"+rdm+cascade", n});
  n.use_pgm = true;
  v.push_back({"+rdm+cascade+pgm", n});
  return v;
}

std::vector<AblationRow> ablate(const TrainConfig& cfg, const std::filesystem::path& out_dir, std::ostream* progress) {
  cfg.validate();
  const std::vector<Sample> train_set = load_split(cfg, "train");
  const std::vector<Sample> val_set = load_split(cfg, "val");
  std::vector<AblationRow> rows;
  for (const auto& variant : ablation_variants(cfg.net)) {
    AblationRow row;
    row.variant = variant.name;
    for (std::uint64_t seed : cfg.ablation_seeds) {
      TrainConfig c = cfg;
      c.net = variant.net;
      c.seed = seed;
      c.checkpoint_every_epoch = false;
      if (progress) *progress << "ablate " << variant.name << " seed " << seed << std::endl;
      const TrainResult tr = train(c, train_set, {}, nullptr);
      EvalResult ev = evaluate(tr.params, c.net, val_set, cfg.threads);
      row.per_seed.push_back(ev.report);
      row.per_image.push_back(std::move(ev.per_image));
      if (progress)
        *progress << "  loss " << fmt_double(tr.log.back().total) << " F1(3px) "
                  << fmt_double(row.per_seed.back().boundary_f1[0]) << std::endl;
    }
    auto med = [&](auto field) {
      std::vector<double> v;
      for (const auto& r : row.per_seed) v.push_back(field(r));
      return median(v);
    };
    MetricsReport& m = row.median;
    m.miou = med([](const MetricsReport& r) { return r.miou; });
    m.iou_bg = med([](const MetricsReport& r) { return r.iou_bg; });
    m.iou_fg = med([](const MetricsReport& r) { return r.iou_fg; });
    m.acc = med([](const MetricsReport& r) { return r.acc; });
    m.mae = med([](const MetricsReport& r) { return r.mae; });
    m.ber = med([](const MetricsReport& r) { return r.ber; });
    m.f_beta = med([](const MetricsReport& r) { return r.f_beta; });
    for (std::size_t t = 0; t < m.boundary_f1.size(); ++t)
      m.boundary_f1[t] = med([t](const MetricsReport& r) { return r.boundary_f1[t]; });
    m.images = row.per_seed.front().images;
    m.two_class_images = row.per_seed.front().two_class_images;
    rows.push_back(std::move(row));
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir / "ablation.csv", std::ios::binary);
    csv << "variant,seed,miou,ber,mae,f_beta,f1_12px,f1_9px,f1_5px,f1_3px\n";
    auto line = [&](const std::string& v, const std::string& seed, const MetricsReport& r) {
      csv << v << ',' << seed << ',' << fmt_double(r.miou) << ',' << fmt_double(r.ber) << ',' << fmt_double(r.mae)
          << ',' << fmt_double(r.f_beta);
      for (std::size_t t = r.boundary_f1.size(); t-- > 0;) csv << ',' << fmt_double(r.boundary_f1[t]);
      csv << '\n';
    };
    for (const auto& row : rows) {
      for (std::size_t s = 0; s < row.per_seed.size(); ++s)
        line(row.variant, std::to_string(cfg.ablation_seeds[s]), row.per_seed[s]);
      line(row.variant, "median", row.median);
    }
    std::ofstream(out_dir / "ablation.txt", std::ios::binary) << format_ablation(rows);
  }
  return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "# median over " << (rows.empty() ? 0 : rows[0].per_seed.size()) << " seeds, validation split\n";
  os << std::left << std::setw(20) << "variant" << "mIoU\tmBER\tmAE\tF1(12px)\tF1(9px)\tF1(5px)\tF1(3px)\n";
  for (const auto& r : rows) {
    const MetricsReport& m = r.median;
    os << std::setw(20) << r.variant << 100 * m.miou << '\t' << m.ber << '\t' << std::setprecision(4) << m.mae
       << std::setprecision(2);
    for (std::size_t t = m.boundary_f1.size(); t-- > 0;) os << '\t' << 100 * m.boundary_f1[t];
    os << '\n';
  }
  return os.str();
}

void visualize(const Checkpoint& ck, const Tensor<float>& image, const std::filesystem::path& out_dir) {
  const NetConfig& cfg = ck.config.net;
  auto& ps = const_cast<ParamStore<float>&>(ck.params);  // eval mode: read only
  const std::size_t h = image.dim(1), w = image.dim(2);
  const Tensor<float> batch({1, 3, h, w}, std::vector<float>(image.data().begin(), image.data().end()));
  Tape<float> tape(false);
  const NetOutput<float> out = cascade_forward(tape, ps, cfg, batch, NormMode::eval);
  std::filesystem::create_directories(out_dir);
  for (std::size_t s = 0; s < out.stages.size(); ++s) {
    const auto& st = out.stages[s];
    const std::string pre = "stage" + std::to_string(s + 1);
    if (st.f_edge.defined()) write_ppm(out_dir / (pre + "_edge_pca.ppm"), pca_view(first_image(st.f_edge), h, w));
    write_ppm(out_dir / (pre + "_merge_pca.ppm"), pca_view(first_image(st.f_merge_refined), h, w));
    if (st.f_b.defined()) {
      const std::size_t sh = st.f_b.dim(2), sw = st.f_b.dim(3);
      LabelMap grey(h, w);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          grey.at(y, x) = static_cast<std::uint8_t>(std::lround(255.0f * st.f_b[(y * sh / h) * sw + x * sw / w]));
      write_pgm(out_dir / (pre + "_edge_prob.pgm"), grey);
    }
  }
  Sample s;
  s.image = image;
  const Prediction p = predict(ck.params, cfg, image);
  write_ppm(out_dir / "prediction_overlay.ppm", overlay(s, p.mask));
}

}  // namespace ebseg
