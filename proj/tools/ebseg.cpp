#include <CLI11.hpp>
#include <iostream>

#include "ebseg/checkpoint.hpp"
#include "ebseg/gradcheck_suite.hpp"
#include "ebseg/image_io.hpp"
#include "ebseg/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;

ebseg::TrainConfig config_or_default(const std::string& path) {
  return path.empty() ? ebseg::TrainConfig{} : ebseg::load_train_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge-aware glass segmentation: data, training, evaluation"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::size_t count = 100, size = 64;
  std::string out, config_path, ckpt, data, sample, op, split = "train";
  int threads = 1;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic split");
  gen->add_option("--seed", seed, "base seed")->required();
  gen->add_option("--count", count, "number of samples")->required();
  gen->add_option("--size", size, "image side, multiple of 8 and >= 32")->required();
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--split", split, "split name (file prefix)");

  auto* tr = app.add_subcommand("train", "train a network");
  tr->add_option("--config", config_path, "key = value config file");
  tr->add_option("--out", out, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "score a checkpoint on a split");
  ev->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  ev->add_option("--data", data, "data directory")->required();
  ev->add_option("--out", out, "report directory")->required();
  ev->add_option("--split", split = "val", "split name");
  ev->add_option("--threads", threads, "worker threads");

  auto* ab = app.add_subcommand("ablate", "component ablation table");
  ab->add_option("--config", config_path, "key = value config file");
  ab->add_option("--out", out, "output directory")->required();

  auto* vz = app.add_subcommand("viz", "feature visualisations for one image");
  vz->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  vz->add_option("--sample", sample, "input PPM image")->required();
  vz->add_option("--out", out, "output directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gc->add_option("--op", op, "only this check (see --list)");
  bool list = false;
  gc->add_flag("--list", list, "list available checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      if (size < 32 || size % 8 != 0) {
        std::cerr << "gen-data: --size must be a multiple of 8 and >= 32\n";
        return kExitUsage;
      }
      ebseg::write_split(out, split, ebseg::gen_split(seed, count, size));
      std::cout << "wrote " << count << " samples to " << out << "\n";
    } else if (*tr) {
      const ebseg::TrainConfig cfg = config_or_default(config_path);
      const auto samples = ebseg::load_split(cfg, "train");
      const auto result = ebseg::train(cfg, samples, out, &std::cout);
      std::cout << "final loss " << result.log.back().total << ", checkpoint " << out << "/ckpt_final\n";
    } else if (*ev) {
      const ebseg::Checkpoint ck = ebseg::load_checkpoint(ckpt);
      const auto samples = ebseg::read_split(data, split, ck.config.net.thickness);
      if (samples.empty()) {
        std::cerr << "eval: no '" << split << "' samples in " << data << "\n";
        return kExitUsage;
      }
      const auto result = ebseg::evaluate(ck.params, ck.config.net, samples, threads);
      ebseg::write_eval_report(out, samples, result);
      std::cout << ebseg::format_summary(result.report);
    } else if (*ab) {
      const ebseg::TrainConfig cfg = config_or_default(config_path);
      const auto rows = ebseg::ablate(cfg, out, &std::cout);
      std::cout << ebseg::format_ablation(rows);
    } else if (*vz) {
      const ebseg::Checkpoint ck = ebseg::load_checkpoint(ckpt);
      ebseg::visualize(ck, ebseg::from_rgb8(ebseg::read_ppm(sample)), out);
      std::cout << "wrote visualisations to " << out << "\n";
    } else if (*gc) {
      if (list) {
        for (const auto& name : ebseg::gradcheck_names()) std::cout << name << "\n";
        return kExitOk;
      }
      const auto results = ebseg::run_gradchecks(op, std::cout);
      if (results.empty()) {
        std::cerr << "gradcheck: unknown op '" << op << "'\n";
        return kExitUsage;
      }
      for (const auto& r : results)
        if (!r.passed) return kExitNumeric;
    }
  } catch (const ebseg::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ebseg::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}
