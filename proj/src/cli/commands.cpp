#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>

#include "gridseg/cli.hpp"
#include "gridseg/data_io.hpp"
#include "gridseg/parallel.hpp"

namespace gridseg {

namespace fs = std::filesystem;

namespace {

/// Maps exceptions to exit codes: missing inputs are 2, everything else 1.
template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const MissingInputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitMissingInput;
  } catch (const LoadError& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == LoadErrorKind::not_found ? kExitMissingInput : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

void require_file(const fs::path& path, const char* what) {
  if (path.empty() || !fs::exists(path)) throw MissingInputError(std::string(what) + " not found: " + path.string());
}

std::string numbered(const char* prefix, std::size_t i, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%03zu%s", prefix, i, suffix);
  return buf;
}

GridNet load_model(const fs::path& checkpoint, const GridNetConfig* expected) {
  Checkpoint ck = load_checkpoint(checkpoint);
  if (expected && !(ck.model.config() == *expected)) {
    throw CheckpointError("checkpoint incompatible: model config differs from the run config");
  }
  return std::move(ck.model);
}

}  // namespace

int cmd_gen_phantoms(const CohortOptions& options, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    fs::create_directories(out_dir);
    std::vector<ManifestEntry> entries(options.count);
    // Cases 2k and 2k+1 are the ED and ES phases of patient k.
    parallel_for(options.count, worker_threads(), [&](std::size_t i) {
      const std::uint64_t patient_seed = RngStream(options.seed).fork(i / 2).next_u64();
      const Phase phase = i % 2 == 0 ? Phase::ed : Phase::es;
      const Phantom ph = gen_phantom(
          random_phantom_spec(patient_seed, options.size, phase, options.min_slices, options.max_slices));
      ManifestEntry e{numbered("case_", i, ""), numbered("patient_", i / 2, ""), phase,
                      out_dir / numbered("case_", i, "_image.mvol"), out_dir / numbered("case_", i, "_labels.mvol")};
      write_volume(e.image, ph.image);
      write_volume(e.labels, ph.labels);
      entries[i] = std::move(e);
    });
    write_manifest(out_dir / "manifest.tsv", entries);
    const auto [train, val] = split_by_patient(entries, options.train_fraction);
    write_manifest(out_dir / "train.tsv", train);
    write_manifest(out_dir / "val.tsv", val);
    out << "wrote " << entries.size() << " cases to " << out_dir.string() << " (" << train.size() << " train, "
        << val.size() << " val)\n";
    return kExitOk;
  });
}

int cmd_build_prior(const fs::path& train_manifest, const fs::path& out_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto entries = read_manifest(train_manifest);
    std::vector<LabelVolume> labels;
    for (const auto& e : entries) {
      require_file(e.labels, "labels");
      labels.push_back(read_label_volume(e.labels));
      if (!volume_com(labels.back()).valid) {
        throw std::invalid_argument("case " + e.case_id + " has no slice with MYO or RV");
      }
    }
    const ShapePrior prior = build_prior(labels);
    write_prior(out_path, prior);
    for (std::size_t b = 0; b < ShapePrior::kBins; ++b) {
      out << "bin " << b << ": " << prior.sample_counts[b] << " slices\n";
    }
    out << "wrote " << out_path.string() << '\n';
    return kExitOk;
  });
}

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    try {
      const auto result = train_run(config, [&](const EpochLoss& l) {
        out << "epoch " << l.epoch << ": total " << l.total << " (l_T " << l.l_T << ", l_C " << l.l_C << ", l_c "
            << l.l_c << ", l_w " << l.l_w << ")\n";
      });
      out << "wrote " << result.final_checkpoint.string() << '\n';
      return kExitOk;
    } catch (const TrainingDiverged& e) {
      err << "error: training diverged in epoch " << e.epoch << "; last finite epoch " << e.last_finite_epoch
          << '\n';
      return kExitFailure;
    }
  });
}

int cmd_segment(const fs::path& checkpoint, const fs::path& volume_path, const fs::path& prior_path,
                const fs::path& out_path, std::ostream& out, std::ostream& err, const GridNetConfig* expected) {
  return guarded(err, [&] {
    require_file(checkpoint, "checkpoint");
    require_file(volume_path, "volume");
    require_file(prior_path, "prior");
    GridNet model = load_model(checkpoint, expected);
    const ShapePrior prior = read_prior(prior_path);
    const auto start = std::chrono::steady_clock::now();
    const PreparedCase prepared =
        prepare_case({volume_path.stem().string(), "-", Phase::ed, volume_path, {}}, model.config().input_size, false);
    const Segmentation seg = segment_case(model, prior, prepared);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_volume(out_path, seg.labels);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", seconds);
    out << "segmented " << volume_path.string() << " in " << buf << " s\n";
    return kExitOk;
  });
}

int cmd_segment_manifest(const fs::path& checkpoint, const fs::path& manifest, const fs::path& prior_path,
                         const fs::path& out_dir, std::ostream& out, std::ostream& err,
                         const GridNetConfig* expected) {
  return guarded(err, [&] {
    require_file(checkpoint, "checkpoint");
    require_file(prior_path, "prior");
    const auto entries = read_manifest(manifest);
    GridNet model = load_model(checkpoint, expected);
    const ShapePrior prior = read_prior(prior_path);
    fs::create_directories(out_dir);
    std::vector<ManifestEntry> predicted;
    for (const auto& e : entries) {
      const auto start = std::chrono::steady_clock::now();
      const PreparedCase prepared = prepare_case(e, model.config().input_size, false);
      const Segmentation seg = segment_case(model, prior, prepared);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const fs::path path = out_dir / (e.case_id + "_pred.mvol");
      write_volume(path, seg.labels);
      predicted.push_back({e.case_id, e.patient_id, e.phase, {}, path});
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3f", seconds);
      out << "segmented " << e.case_id << " in " << buf << " s\n";
    }
    write_manifest(out_dir / "predictions.tsv", predicted);
    return kExitOk;
  });
}

int cmd_evaluate(const fs::path& pred_manifest, const fs::path& gt_manifest, const fs::path& out_csv,
                 std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto pred = read_manifest(pred_manifest);
    const auto gt = read_manifest(gt_manifest);
    std::map<std::string, std::size_t> pred_index;
    for (std::size_t i = 0; i < pred.size(); ++i) pred_index[pred[i].case_id] = i;
    std::map<std::string, bool> gt_ids;
    for (const auto& g : gt) gt_ids[g.case_id] = true;

    std::string missing;
    for (const auto& g : gt) {
      if (!pred_index.contains(g.case_id)) missing += " " + g.case_id + "(pred)";
    }
    for (const auto& p : pred) {
      if (!gt_ids.contains(p.case_id)) missing += " " + p.case_id + "(gt)";
    }
    if (!missing.empty()) throw std::invalid_argument("manifests do not align; missing:" + missing);

    std::vector<LabelVolume> pred_vols(gt.size()), gt_vols(gt.size());
    std::vector<CohortRow> rows(gt.size());
    parallel_for(gt.size(), worker_threads(), [&](std::size_t i) {
      const auto& g = gt[i];
      pred_vols[i] = read_label_volume(pred[pred_index.at(g.case_id)].labels);
      gt_vols[i] = read_label_volume(g.labels);
      rows[i] = {g.case_id, g.patient_id, evaluate_phase(pred_vols[i], gt_vols[i], g.phase), {}, {}};
    });

    // Clinical indices on the ED row of every patient with both phases.
    std::map<std::string, std::pair<std::optional<std::size_t>, std::optional<std::size_t>>> phases;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      auto& slot = phases[gt[i].patient_id];
      (gt[i].phase == Phase::ed ? slot.first : slot.second) = i;
    }
    for (const auto& [patient, slot] : phases) {
      if (!slot.first || !slot.second) continue;
      const std::size_t ed = *slot.first, es = *slot.second;
      rows[ed].pred_indices =
          clinical_indices(largest_component(pred_vols[ed]), largest_component(pred_vols[es]));
      rows[ed].gt_indices = clinical_indices(gt_vols[ed], gt_vols[es]);
    }

    std::ostringstream csv;
    write_cohort_csv(csv, rows);
    const std::string text = csv.str();
    if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
    write_file_bytes(out_csv, std::vector<std::uint8_t>(text.begin(), text.end()));
    out << "evaluated " << rows.size() << " cases, wrote " << out_csv.string() << '\n';
    return kExitOk;
  });
}

int cmd_overlay(const fs::path& volume_path, const fs::path& labels_path, const fs::path& out_dir, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&] {
    require_file(volume_path, "volume");
    require_file(labels_path, "labels");
    const Volume volume = read_volume(volume_path);
    const LabelVolume labels = read_label_volume(labels_path);
    if (!same_dims(labels, volume)) throw std::invalid_argument("overlay: volume and labels differ in dimensions");
    fs::create_directories(out_dir);
    for (std::size_t z = 0; z < volume.slices; ++z) {
      const auto gray = grayscale_slice(volume, z);
      write_pgm(out_dir / numbered("slice_", z, ".pgm"), volume.rows, volume.cols, gray);
      write_ppm(out_dir / numbered("slice_", z, ".ppm"), volume.rows, volume.cols, tint_slice(gray, labels.slice(z)));
    }
    out << "wrote " << volume.slices << " overlays to " << out_dir.string() << '\n';
    return kExitOk;
  });
}

}  // namespace gridseg
