// gridseg: phantom generation, prior building, training, segmentation,
// evaluation and overlay rendering.

#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "gridseg/cli.hpp"

namespace fs = std::filesystem;
using namespace gridseg;

int main(int argc, char** argv) {
  CLI::App app{"GridNet cardiac MR segmentation"};
  app.require_subcommand(1);
  // Global flags may also follow the subcommand.
  app.fallthrough();

  std::optional<fs::path> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  app.add_option("--config", config_path, "key=value run configuration");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--out", out, "output path or directory");

  CohortOptions cohort;
  auto* gen = app.add_subcommand("gen-phantoms", "write a synthetic cohort and its manifests");
  gen->add_option("--count", cohort.count, "number of cases (ED/ES pairs per patient)")->required();
  gen->add_option("--size", cohort.size, "in-plane extent in pixels");
  gen->add_option("--min-slices", cohort.min_slices);
  gen->add_option("--max-slices", cohort.max_slices);

  fs::path manifest;
  auto* prior_cmd = app.add_subcommand("build-prior", "build the shape prior from a training manifest");
  prior_cmd->add_option("--manifest", manifest)->required();

  auto* train = app.add_subcommand("train", "train a model (settings from --config)");
  std::optional<fs::path> resume;
  train->add_option("--resume", resume, "checkpoint to continue from");

  fs::path checkpoint, prior_path, input;
  auto* segment = app.add_subcommand("segment", "segment a volume, or every case of a .tsv manifest");
  segment->add_option("--checkpoint", checkpoint)->required();
  segment->add_option("--prior", prior_path)->required();
  segment->add_option("--input", input, "MVOL image or manifest")->required();

  fs::path pred_manifest, gt_manifest;
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against ground truth");
  evaluate->add_option("--pred", pred_manifest)->required();
  evaluate->add_option("--gt", gt_manifest)->required();

  fs::path volume_path, labels_path;
  auto* overlay = app.add_subcommand("overlay", "render PGM/PPM overlays per slice");
  overlay->add_option("--volume", volume_path)->required();
  overlay->add_option("--labels", labels_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage errors share the generic failure code.
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitFailure;
  }

  RunConfig config;
  if (config_path) {
    try {
      config = load_run_config(*config_path);
    } catch (const MissingInputError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitMissingInput;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitFailure;
    }
  }
  if (seed) config.seed = *seed;
  const auto out_or = [&](const fs::path& fallback) { return out ? *out : fallback; };

  if (*gen) {
    cohort.seed = config.seed;
    return cmd_gen_phantoms(cohort, out_or("phantoms"), std::cout, std::cerr);
  }
  if (*prior_cmd) return cmd_build_prior(manifest, out_or("prior.spri"), std::cout, std::cerr);
  if (*train) {
    if (out) config.out_dir = *out;
    if (resume) config.resume = *resume;
    return cmd_train(config, std::cout, std::cerr);
  }
  if (*segment) {
    const GridNetConfig* expected = config_path ? &config.model : nullptr;
    if (input.extension() == ".tsv") {
      return cmd_segment_manifest(checkpoint, input, prior_path, out_or("predictions"), std::cout, std::cerr,
                                  expected);
    }
    return cmd_segment(checkpoint, input, prior_path, out_or("segmentation.mvol"), std::cout, std::cerr, expected);
  }
  if (*evaluate) return cmd_evaluate(pred_manifest, gt_manifest, out_or("report.csv"), std::cout, std::cerr);
  if (*overlay) return cmd_overlay(volume_path, labels_path, out_or("overlay"), std::cout, std::cerr);
  return kExitFailure;
}
