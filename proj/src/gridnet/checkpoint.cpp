#include <algorithm>

#include "gridseg/binary_io.hpp"
#include "gridseg/gridnet.hpp"

namespace gridseg {

namespace {

void write_config(ByteWriter& w, const GridNetConfig& c) {
  for (const std::size_t v : {c.base_channels, c.width_factor, c.max_width_multiplier, c.input_size, c.class_count,
                              c.fc1_units, c.fc2_units}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.f64(c.dropout_p);
}

GridNetConfig read_config(ByteReader& r) {
  GridNetConfig c;
  for (std::size_t* v : {&c.base_channels, &c.width_factor, &c.max_width_multiplier, &c.input_size, &c.class_count,
                         &c.fc1_units, &c.fc2_units}) {
    *v = r.u32();
  }
  c.dropout_p = r.f64();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint incompatible: ") + e.what());
  }
  // Guards against absurd allocations from a corrupt header.
  if (c.base_channels > 4096 || c.input_size > 8192 || c.fc1_units > 1u << 16 || c.fc2_units > 1u << 16 ||
      c.max_width_multiplier > 64 || c.width_factor > 16) {
    throw CheckpointError("checkpoint incompatible: implausible config block");
  }
  return c;
}

void read_moments(ByteReader& r, const std::vector<Tensor>& params, std::vector<std::vector<double>>& out) {
  out.clear();
  for (const auto& p : params) {
    out.emplace_back(p.numel());
    r.f64s(out.back().data(), p.numel());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const GridNet& model, const TrainingState* training) {
  ByteWriter w;
  w.magic("GNCK");
  w.u32(kCheckpointVersion);
  write_config(w, model.config());
  const auto params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u32(static_cast<std::uint32_t>(p.rank()));
    for (const auto d : p.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.f64s(p.data().data(), p.numel());
  }
  const auto stats = model.norm_stats();
  w.u32(static_cast<std::uint32_t>(stats.size()));
  for (const auto* s : stats) {
    w.u32(static_cast<std::uint32_t>(s->mean.size()));
    w.f64s(s->mean.data(), s->mean.size());
    w.f64s(s->var.data(), s->var.size());
  }
  w.u8(training ? 1 : 0);
  if (training) {
    const auto& a = training->adam;
    w.u64(training->epoch);
    w.u64(a.step);
    w.f64(a.lr);
    w.f64(a.beta1);
    w.f64(a.beta2);
    w.f64(a.eps);
    // Missing moment buffers (no step taken yet) are written as zeros.
    for (const auto* moments : {&a.m, &a.v}) {
      for (std::size_t k = 0; k < params.size(); ++k) {
        if (moments->empty()) {
          for (std::size_t i = 0; i < params[k].numel(); ++i) w.f64(0.0);
        } else {
          if ((*moments)[k].size() != params[k].numel()) {
            throw CheckpointError("encode_checkpoint: optimizer state does not match the model");
          }
          w.f64s((*moments)[k].data(), (*moments)[k].size());
        }
      }
    }
  }
  return w.buffer();
}

Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes) {
  ByteReader r(std::move(bytes), "GNCK");
  r.expect_magic("GNCK");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw LoadError(LoadErrorKind::bad_version, "GNCK: unsupported version " + std::to_string(version));
  }
  Checkpoint ck{GridNet(read_config(r), RngStream(0)), std::nullopt};
  auto params = ck.model.parameters();
  const std::uint32_t count = r.u32();
  if (count != params.size()) {
    throw CheckpointError("checkpoint incompatible: " + std::to_string(count) + " tensors, model has " +
                          std::to_string(params.size()));
  }
  for (auto& p : params) {
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (shape != p.shape()) {
      throw CheckpointError("checkpoint incompatible: tensor " + shape_string(shape) + " where model expects " +
                            shape_string(p.shape()));
    }
    r.f64s(p.mutable_data().data(), p.numel());
  }
  auto stats = ck.model.norm_stats();
  const std::uint32_t norm_count = r.u32();
  if (norm_count != stats.size()) throw CheckpointError("checkpoint incompatible: batch-norm layer count");
  for (auto* s : stats) {
    if (r.u32() != s->mean.size()) throw CheckpointError("checkpoint incompatible: batch-norm width");
    r.f64s(s->mean.data(), s->mean.size());
    r.f64s(s->var.data(), s->var.size());
  }
  const std::uint8_t has_training = r.u8();
  if (has_training > 1) throw LoadError(LoadErrorKind::bad_value, "GNCK: bad training flag");
  if (has_training) {
    TrainingState t;
    t.epoch = r.u64();
    t.adam.step = r.u64();
    t.adam.lr = r.f64();
    t.adam.beta1 = r.f64();
    t.adam.beta2 = r.f64();
    t.adam.eps = r.f64();
    read_moments(r, params, t.adam.m);
    read_moments(r, params, t.adam.v);
    ck.training = std::move(t);
  }
  if (r.remaining() != 0) throw LoadError(LoadErrorKind::bad_value, "GNCK: trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const GridNet& model, const TrainingState* training) {
  write_file_bytes(path, encode_checkpoint(model, training));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace gridseg
