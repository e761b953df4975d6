#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "gridseg/adam.hpp"
#include "gridseg/cli.hpp"
#include "gridseg/data_io.hpp"

namespace gridseg {

namespace {

constexpr std::uint64_t kModelStream = 7;
constexpr std::uint64_t kEpochStreamBase = 0x1000;

std::string epoch_checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu.gnck", epoch);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

/// Loss rows already on disk for epochs up to `last_epoch` (resume support).
std::vector<std::string> kept_loss_rows(const std::filesystem::path& csv, std::size_t last_epoch) {
  std::vector<std::string> rows;
  std::ifstream in(csv);
  std::string line;
  if (!in || !std::getline(in, line)) return rows;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    if (std::stoull(line.substr(0, comma)) <= last_epoch) rows.push_back(line);
  }
  return rows;
}

}  // namespace

TrainingDiverged::TrainingDiverged(std::size_t epoch_, std::size_t last_finite_epoch_)
    : std::runtime_error("non-finite loss in epoch " + std::to_string(epoch_) + "; last finite epoch " +
                         std::to_string(last_finite_epoch_)),
      epoch(epoch_),
      last_finite_epoch(last_finite_epoch_) {}

PreparedCase prepare_case(const ManifestEntry& entry, std::size_t input_size, bool with_labels) {
  PreparedCase out;
  out.entry = entry;
  if (entry.image.empty()) throw std::invalid_argument("case " + entry.case_id + " has no image");
  const Volume raw = read_volume(entry.image);
  out.native_rows = raw.rows;
  out.native_cols = raw.cols;
  out.image = fit_volume(preprocess(raw), input_size);
  if (with_labels) {
    if (entry.labels.empty()) throw std::invalid_argument("case " + entry.case_id + " has no labels");
    const LabelVolume labels = read_label_volume(entry.labels);
    if (!same_dims(labels, raw)) {
      throw std::invalid_argument("case " + entry.case_id + ": image and labels differ in dimensions");
    }
    out.labels = fit_volume(labels, input_size);
  }
  return out;
}

std::vector<TrainingSample> slices_of(const PreparedCase& prepared) {
  std::vector<TrainingSample> out;
  const Volume& img = prepared.image;
  for (std::size_t z = 0; z < img.slices; ++z) {
    TrainingSample s;
    s.image.assign(img.slice(z).begin(), img.slice(z).end());
    s.labels.assign(prepared.labels.slice(z).begin(), prepared.labels.slice(z).end());
    s.com = compute_com(slice_view(prepared.labels, z));
    s.slice_index = z;
    s.total_slices = img.slices;
    out.push_back(std::move(s));
  }
  return out;
}

Trainer::Trainer(const RunConfig& config, ShapePrior prior, std::vector<TrainingSample> samples)
    : config_(config),
      prior_(std::move(prior)),
      samples_(std::move(samples)),
      model_(config.model, RngStream(config.seed).fork(kModelStream)) {
  config_.validate();
  if (samples_.empty()) throw std::invalid_argument("Trainer: no training slices");
  state_.adam = make_adam_state(model_.parameters(), config_.lr);
}

Trainer::Trainer(const RunConfig& config, ShapePrior prior, std::vector<TrainingSample> samples, Checkpoint resume)
    : config_(config), prior_(std::move(prior)), samples_(std::move(samples)), model_(std::move(resume.model)) {
  config_.validate();
  if (samples_.empty()) throw std::invalid_argument("Trainer: no training slices");
  if (!(model_.config() == config_.model)) throw CheckpointError("checkpoint incompatible: model config differs");
  if (!resume.training) throw CheckpointError("checkpoint carries no training state to resume from");
  state_ = std::move(*resume.training);
}

Trainer::TeacherBatch Trainer::assemble(std::span<const std::size_t> batch) const {
  const std::size_t n = batch.size();
  const std::size_t s = config_.model.input_size;
  const std::size_t plane = s * s;
  std::vector<double> images(n * plane);
  std::vector<double> priors(n * ShapePrior::kChannels * plane);
  TeacherBatch out;
  out.labels.resize(n * plane);
  out.com.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const TrainingSample& t = samples_[batch[i]];
    if (t.image.size() != plane || t.labels.size() != plane) {
      throw ShapeError("Trainer: sample is not fitted to the model input");
    }
    std::copy(t.image.begin(), t.image.end(), images.begin() + static_cast<std::ptrdiff_t>(i * plane));
    std::copy(t.labels.begin(), t.labels.end(), out.labels.begin() + static_cast<std::ptrdiff_t>(i * plane));
    out.com[i] = t.com;
    // Teacher forcing: the prior sits at the ground-truth CoM.
    register_prior_into(prior_, t.com, t.slice_index, t.total_slices, s,
                        std::span<double>(priors).subspan(i * ShapePrior::kChannels * plane,
                                                          ShapePrior::kChannels * plane));
  }
  out.images = Tensor::from_data({n, 1, s, s}, std::move(images));
  out.priors = Tensor::from_data({n, ShapePrior::kChannels, s, s}, std::move(priors));
  return out;
}

void Trainer::calibrate_norm_stats() {
  NoGradGuard no_grad;
  for (BatchNormStats* st : model_.norm_stats()) st->pooled = 0;
  std::vector<std::size_t> order(samples_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream unused(0);
  for (std::size_t at = 0; at < order.size(); at += config_.batch_size) {
    const std::size_t n = std::min(config_.batch_size, order.size() - at);
    const TeacherBatch b = assemble(std::span<const std::size_t>(order).subspan(at, n));
    model_.forward(b.images, b.priors, Mode::calibrate, unused);
  }
}

EpochLoss Trainer::run_epoch() {
  const std::size_t epoch = state_.epoch + 1;
  const std::size_t s = config_.model.input_size;
  const RngStream epoch_rng = RngStream(config_.seed).fork(kEpochStreamBase + epoch);
  RngStream order_rng = epoch_rng.fork(1);
  RngStream dropout_rng = epoch_rng.fork(2);

  auto params = model_.parameters();
  const auto weights = model_.weight_parameters();
  EpochLoss sums;
  sums.epoch = epoch;
  const auto batches = make_batches(samples_.size(), config_.batch_size, order_rng);
  for (const auto& batch : batches) {
    const std::size_t n = batch.size();
    const TeacherBatch b = assemble(batch);
    const auto pred = model_.forward(b.images, b.priors, Mode::train, dropout_rng);
    const auto loss = total_loss(pred.logits, one_hot(b.labels, n, s, s), contour_weights(b.labels, n, s, s),
                                 pred.com, b.com, weights, config_.loss);
    const double total = loss.total.item();
    if (!std::isfinite(total)) throw TrainingDiverged(epoch, epoch - 1);
    model_.zero_grad();
    backward(loss.total);
    adam_step(params, state_.adam);
    sums.l_T += loss.l_T.item();
    sums.l_C += loss.l_C.item();
    sums.l_c += loss.l_c.item();
    sums.l_w += loss.l_w.item();
    sums.total += total;
  }
  model_.zero_grad();
  const double inv = 1.0 / static_cast<double>(batches.size());
  sums.l_T *= inv;
  sums.l_C *= inv;
  sums.l_c *= inv;
  sums.l_w *= inv;
  sums.total *= inv;
  state_.epoch = epoch;
  return sums;
}

std::string format_loss_row(const EpochLoss& l) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g", l.epoch, l.l_T, l.l_C, l.l_c, l.l_w, l.total);
  return buf;
}

TrainResult train_run(const RunConfig& config, const EpochObserver& observer) {
  namespace fs = std::filesystem;
  config.validate();
  config.validate_paths();
  const auto entries = read_manifest(config.manifest);
  ShapePrior prior = read_prior(config.prior);
  std::vector<TrainingSample> samples;
  for (const auto& e : entries) {
    auto slices = slices_of(prepare_case(e, config.model.input_size));
    samples.insert(samples.end(), std::make_move_iterator(slices.begin()), std::make_move_iterator(slices.end()));
  }

  fs::create_directories(config.out_dir);
  const fs::path csv = config.out_dir / "loss.csv";
  std::vector<std::string> rows;
  std::optional<Trainer> trainer;
  if (config.resume) {
    Checkpoint ck = load_checkpoint(*config.resume);
    const std::size_t start = ck.training ? ck.training->epoch : 0;
    trainer.emplace(config, std::move(prior), std::move(samples), std::move(ck));
    rows = kept_loss_rows(csv, start);
  } else {
    trainer.emplace(config, std::move(prior), std::move(samples));
  }

  const auto flush_csv = [&] {
    std::string text = std::string(kLossCsvHeader) + "\n";
    for (const auto& r : rows) text += r + "\n";
    write_text(csv, text);
  };

  TrainResult result;
  flush_csv();
  while (trainer->epochs_done() < config.epochs) {
    EpochLoss loss;
    try {
      loss = trainer->run_epoch();
    } catch (const TrainingDiverged&) {
      flush_csv();
      throw;
    }
    rows.push_back(format_loss_row(loss));
    result.losses.push_back(loss);
    flush_csv();
    if (observer) observer(loss);
    if (loss.epoch % config.checkpoint_every == 0) {
      trainer->calibrate_norm_stats();
      save_checkpoint(config.out_dir / epoch_checkpoint_name(loss.epoch), trainer->model(), &trainer->state());
    }
  }
  result.final_checkpoint = config.out_dir / "model.gnck";
  trainer->calibrate_norm_stats();
  save_checkpoint(result.final_checkpoint, trainer->model(), &trainer->state());
  return result;
}

Segmentation segment_case(GridNet& model, const ShapePrior& prior, const PreparedCase& prepared) {
  Segmentation seg;
  const LabelVolume fitted = predict_volume(model, prepared.image, prior, &seg.predicted_com);
  const std::size_t s = model.config().input_size;
  LabelVolume native = LabelVolume::filled(fitted.slices, prepared.native_rows, prepared.native_cols,
                                           prepared.image.spacing, kBack);
  // Offsets of the native -> input fit, recovered from a blank native slice.
  const std::vector<std::uint8_t> blank(prepared.native_rows * prepared.native_cols, kBack);
  auto window = fit_to_input(std::span<const std::uint8_t>(blank), prepared.native_rows, prepared.native_cols, s);
  for (std::size_t z = 0; z < fitted.slices; ++z) {
    window.values.assign(fitted.slice(z).begin(), fitted.slice(z).end());
    const auto restored = restore_from_input(window, prepared.native_rows, prepared.native_cols);
    std::copy(restored.begin(), restored.end(), native.slice(z).begin());
  }
  seg.labels = largest_component(native);
  if (!prepared.labels.values.empty()) {
    for (std::size_t z = 0; z < prepared.labels.slices; ++z) {
      seg.true_com.push_back(compute_com(slice_view(prepared.labels, z)));
    }
  }
  return seg;
}

std::optional<double> mean_com_error(const Segmentation& seg) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t z = 0; z < seg.true_com.size() && z < seg.predicted_com.size(); ++z) {
    const CoM& t = seg.true_com[z];
    const CoM& p = seg.predicted_com[z];
    if (!t.valid) continue;
    sum += p.valid ? std::hypot(p.x - t.x, p.y - t.y) : std::numeric_limits<double>::infinity();
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace gridseg
