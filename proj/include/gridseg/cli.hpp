#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridseg/gridnet.hpp"
#include "gridseg/loss.hpp"
#include "gridseg/metrics.hpp"
#include "gridseg/shape_prior.hpp"
#include "gridseg/volume.hpp"

namespace gridseg {

/// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitMissingInput = 2;

/// A required input file does not exist. Commands map it to exit code 2.
class MissingInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Run configuration (line-based key=value, '#' comments)
// ---------------------------------------------------------------------------

struct RunConfig {
  std::filesystem::path manifest;  // training cases
  std::filesystem::path prior;
  std::filesystem::path out_dir = "run";
  /// Checkpoint with training state to continue from.
  std::optional<std::filesystem::path> resume;
  GridNetConfig model;
  LossWeights loss;
  std::size_t epochs = 100;
  std::size_t batch_size = 10;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 10;

  /// Value ranges; paths are checked by validate_paths.
  void validate() const;
  /// Throws MissingInputError for a missing manifest, prior or resume file.
  void validate_paths() const;
};

/// Throws std::invalid_argument naming the line for unknown keys, repeated
/// keys and malformed values.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
std::string format_run_config(const RunConfig& config);

// ---------------------------------------------------------------------------
// Manifests: TSV with header `case_id patient_id phase image labels`.
// Relative paths resolve against the manifest's directory; "-" marks an
// absent file.
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string case_id;
  std::string patient_id;
  Phase phase = Phase::ed;
  std::filesystem::path image;
  std::filesystem::path labels;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
/// Paths are written relative to the manifest's directory when possible.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

/// Splits whole patients by a hash of patient_id; about `train_fraction` of
/// patients land in the first list. Order within each list is preserved.
std::pair<std::vector<ManifestEntry>, std::vector<ManifestEntry>> split_by_patient(
    const std::vector<ManifestEntry>& entries, double train_fraction = 0.75);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One preprocessed slice fitted to the model input.
struct TrainingSample {
  std::vector<double> image;
  std::vector<std::uint8_t> labels;
  CoM com;
  std::size_t slice_index = 0;
  std::size_t total_slices = 0;
};

/// Preprocessed, fitted volume with its fitted labels, ready for inference.
struct PreparedCase {
  ManifestEntry entry;
  Volume image;         // fitted to input_size
  LabelVolume labels;   // fitted to input_size (empty when the entry has no labels)
  std::size_t native_rows = 0;
  std::size_t native_cols = 0;
};

PreparedCase prepare_case(const ManifestEntry& entry, std::size_t input_size, bool with_labels = true);
std::vector<TrainingSample> slices_of(const PreparedCase& prepared);

struct EpochLoss {
  std::size_t epoch = 0;
  double l_T = 0.0;
  double l_C = 0.0;
  double l_c = 0.0;
  double l_w = 0.0;
  double total = 0.0;
};

/// Raised when an epoch produces a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t epoch, std::size_t last_finite_epoch);
  std::size_t epoch;
  std::size_t last_finite_epoch;
};

/// Seeded teacher-forced training. The initial model, every batch order and
/// every dropout mask derive from (seed, epoch), so a resumed run follows
/// the same trajectory as an uninterrupted one.
class Trainer {
 public:
  Trainer(const RunConfig& config, ShapePrior prior, std::vector<TrainingSample> samples);
  /// Continues from a checkpoint that carries training state.
  Trainer(const RunConfig& config, ShapePrior prior, std::vector<TrainingSample> samples, Checkpoint resume);

  /// Runs one epoch (the next one) and returns its batch-mean losses.
  EpochLoss run_epoch();
  std::size_t epochs_done() const { return state_.epoch; }

  /// Replaces the running batch-norm statistics with moments pooled over all
  /// training slices, dropout off. Momentum averages of train-mode batches
  /// carry the variance that dropout adds upstream, which eval mode never
  /// sees. Training itself reads only batch moments, so this does not alter
  /// the trajectory.
  void calibrate_norm_stats();

  GridNet& model() { return model_; }
  const TrainingState& state() const { return state_; }

 private:
  struct TeacherBatch {
    Tensor images;  // [N,1,S,S]
    Tensor priors;  // [N,3,S,S], registered at the true CoM
    std::vector<std::uint8_t> labels;
    std::vector<CoM> com;
  };
  TeacherBatch assemble(std::span<const std::size_t> batch) const;

  RunConfig config_;
  ShapePrior prior_;
  std::vector<TrainingSample> samples_;
  GridNet model_;
  TrainingState state_;
};

/// Callback per finished epoch (for progress output).
using EpochObserver = std::function<void(const EpochLoss&)>;

struct TrainResult {
  std::vector<EpochLoss> losses;
  std::filesystem::path final_checkpoint;
};

/// Loads data, trains, writes `loss.csv`, periodic `epoch_NNNN.gnck` and a
/// final `model.gnck` under config.out_dir. Batch-norm statistics are
/// calibrated before every checkpoint.
TrainResult train_run(const RunConfig& config, const EpochObserver& observer = {});

inline constexpr const char* kLossCsvHeader = "epoch,l_T,l_C,l_c,l_w,total";
std::string format_loss_row(const EpochLoss& loss);

// ---------------------------------------------------------------------------
// Inference helpers
// ---------------------------------------------------------------------------

struct Segmentation {
  LabelVolume labels;  // native grid, after largest_component
  /// Predicted and true CoM per slice in model-input pixels (true CoM only
  /// when labels were prepared).
  std::vector<CoM> predicted_com;
  std::vector<CoM> true_com;
};

Segmentation segment_case(GridNet& model, const ShapePrior& prior, const PreparedCase& prepared);

/// Mean Euclidean CoM error over slices whose true CoM is valid; empty if
/// there are none.
std::optional<double> mean_com_error(const Segmentation& seg);

// ---------------------------------------------------------------------------
// Overlays
// ---------------------------------------------------------------------------

struct Rgb {
  std::uint8_t r, g, b;
  bool operator==(const Rgb&) const = default;
};

/// Tint colors: LV red, MYO green, RV blue.
Rgb class_color(std::uint8_t label);

/// 8-bit grayscale of one slice, min-max scaled over the whole volume.
std::vector<std::uint8_t> grayscale_slice(const Volume& volume, std::size_t z);

/// Per pixel: gray for Back, else the channel-wise mean (gray + color) / 2,
/// rounded down.
std::vector<Rgb> tint_slice(std::span<const std::uint8_t> gray, std::span<const std::uint8_t> labels);

void write_pgm(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
               std::span<const std::uint8_t> gray);
void write_ppm(const std::filesystem::path& path, std::size_t rows, std::size_t cols, std::span<const Rgb> rgb);

// ---------------------------------------------------------------------------
// Commands. Each returns a process exit code and reports on `out`/`err`.
// ---------------------------------------------------------------------------

struct CohortOptions {
  std::size_t count = 0;
  std::size_t size = 96;
  std::uint64_t seed = 0;
  std::size_t min_slices = 7;
  std::size_t max_slices = 17;
  /// Fraction of patients listed in train.tsv (rest in val.tsv).
  double train_fraction = 0.75;
};

int cmd_gen_phantoms(const CohortOptions& options, const std::filesystem::path& out_dir, std::ostream& out,
                     std::ostream& err);
int cmd_build_prior(const std::filesystem::path& train_manifest, const std::filesystem::path& out_path,
                    std::ostream& out, std::ostream& err);
int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);
/// `expected`, when given, must match the checkpoint's model config.
int cmd_segment(const std::filesystem::path& checkpoint, const std::filesystem::path& volume_path,
                const std::filesystem::path& prior_path, const std::filesystem::path& out_path, std::ostream& out,
                std::ostream& err, const GridNetConfig* expected = nullptr);
/// Segments every case of a manifest into out_dir and writes a prediction
/// manifest `predictions.tsv` there.
int cmd_segment_manifest(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                         const std::filesystem::path& prior_path, const std::filesystem::path& out_dir,
                         std::ostream& out, std::ostream& err, const GridNetConfig* expected = nullptr);
int cmd_evaluate(const std::filesystem::path& pred_manifest, const std::filesystem::path& gt_manifest,
                 const std::filesystem::path& out_csv, std::ostream& out, std::ostream& err);
int cmd_overlay(const std::filesystem::path& volume_path, const std::filesystem::path& labels_path,
                const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err);

}  // namespace gridseg
