#include "gridseg/gridnet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gridseg {

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, RngStream& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = sd * rng.normal();
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

ConvLayer make_conv(std::size_t cin, std::size_t cout, RngStream& rng) {
  return {he_normal({cout, cin, 3, 3}, cin * 9, rng), Tensor::zeros({cout}, true)};
}

ConvUnit make_unit(std::size_t cin, std::size_t cout, RngStream& rng) {
  return {make_conv(cin, cout, rng),
          {Tensor::full({cout}, 1.0, true), Tensor::zeros({cout}, true), BatchNormStats::initial(cout)}};
}

ConvLayer make_up(std::size_t cin, std::size_t cout, RngStream& rng) {
  return {he_normal({cin, cout, 2, 2}, cin * 4, rng), Tensor::zeros({cout}, true)};
}

DenseLayer make_dense(std::size_t in, std::size_t out, RngStream& rng) {
  return {he_normal({in, out}, in, rng), Tensor::zeros({out}, true)};
}

void push_unit(std::vector<NamedTensor>& out, const std::string& name, const ConvUnit& u) {
  out.push_back({name + ".conv.weight", u.conv.weight});
  out.push_back({name + ".conv.bias", u.conv.bias});
  out.push_back({name + ".norm.gamma", u.norm.gamma});
  out.push_back({name + ".norm.beta", u.norm.beta});
}

}  // namespace

GridNetConfig GridNetConfig::desk() {
  GridNetConfig c;
  c.base_channels = 8;
  c.input_size = 64;
  return c;
}

std::size_t GridNetConfig::row_width(std::size_t row) const {
  if (row >= kRows) throw std::out_of_range("row_width: row must be < 5");
  std::size_t mult = 1;
  for (std::size_t r = 0; r < row && mult < max_width_multiplier; ++r) mult *= width_factor;
  return base_channels * std::min(mult, max_width_multiplier);
}

void GridNetConfig::validate() const {
  if (base_channels == 0) throw std::invalid_argument("GridNetConfig: base_channels must be positive");
  if (width_factor == 0) throw std::invalid_argument("GridNetConfig: width_factor must be positive");
  if (max_width_multiplier == 0) throw std::invalid_argument("GridNetConfig: max_width_multiplier must be positive");
  // Four pooling stages, then AVG-1 halves row 5 once more.
  if (input_size == 0 || input_size % 32 != 0) {
    throw std::invalid_argument("GridNetConfig: input_size must be a positive multiple of 32");
  }
  if (class_count != kClassCount) throw std::invalid_argument("GridNetConfig: class_count must be 4");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw std::invalid_argument("GridNetConfig: dropout_p must be in [0,1)");
  if (fc1_units == 0 || fc2_units == 0) throw std::invalid_argument("GridNetConfig: FC widths must be positive");
}

GridNet::GridNet(const GridNetConfig& config, RngStream rng) : config_(config), dropout_rng_(rng.fork(0xD0)) {
  config_.validate();
  std::size_t cin = 1;
  for (std::size_t r = 0; r < GridNetConfig::kRows; ++r) {
    const std::size_t w = config_.row_width(r);
    encoder_[r] = {make_unit(cin, w, rng), make_unit(w, w, rng)};
    cin = w;
  }
  for (std::size_t r = 0; r < 4; ++r) {
    const std::size_t w = config_.row_width(r);
    lateral_[r] = {make_unit(w, w, rng)};
  }
  for (std::size_t k = 0; k < 4; ++k) {
    const std::size_t r = 3 - k;
    const std::size_t w = config_.row_width(r);
    const std::size_t out = r == 0 ? config_.class_count : w;
    decoder_[k] = {make_up(config_.row_width(r + 1), w, rng), make_unit(2 * w, w, rng), make_unit(w, out, rng)};
  }
  const std::size_t pooled = config_.input_size / 32;
  const std::size_t features = config_.row_width(4) * pooled * pooled;
  fc1_ = make_dense(features, config_.fc1_units, rng);
  fc2_ = make_dense(config_.fc1_units, config_.fc2_units, rng);
  // FC-3 starts as the constant image center; its weights grow from zero.
  const double center = static_cast<double>(config_.input_size) / 2.0;
  fc3_ = {Tensor::zeros({config_.fc2_units, 2}, true), Tensor::full({2}, center, true)};
  if (config_.class_count + ShapePrior::kChannels != kMergeChannels) {
    throw std::logic_error("GridNet: MERGE-1 must carry 7 maps");
  }
  conv10_ = make_conv(kMergeChannels, config_.class_count, rng);
}

Tensor GridNet::unit_forward(ConvUnit& unit, const Tensor& x, Mode mode) {
  return relu(batch_norm(conv2d(x, unit.conv.weight, unit.conv.bias), unit.norm.gamma, unit.norm.beta,
                         unit.norm.stats, mode));
}

GridNet::Trunk GridNet::encode(const Tensor& images, Mode mode, RngStream& rng) {
  const std::size_t s = config_.input_size;
  if (!images.defined() || images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != s || images.dim(3) != s) {
    throw ShapeError("GridNet: images must be [N,1," + std::to_string(s) + "," + std::to_string(s) + "], got " +
                     (images.defined() ? shape_string(images.shape()) : std::string("undefined")));
  }
  Trunk trunk;
  Tensor x = images;
  for (std::size_t r = 0; r < GridNetConfig::kRows; ++r) {
    if (r > 0) x = maxpool2d(x);
    x = unit_forward(encoder_[r].first, x, mode);
    x = unit_forward(encoder_[r].second, x, mode);
    x = dropout(x, config_.dropout_p, rng, mode);
    if (r < 4) trunk.lateral[r] = unit_forward(lateral_[r].unit, x, mode);
  }
  trunk.conv5 = x;
  return trunk;
}

Tensor GridNet::regression_head(const Tensor& conv5) {
  Tensor h = flatten(avgpool2d(conv5));
  h = relu(dense(h, fc1_.weight, fc1_.bias));
  h = relu(dense(h, fc2_.weight, fc2_.bias));
  return dense(h, fc3_.weight, fc3_.bias);
}

BatchPrediction GridNet::forward(const Tensor& images, const Tensor& priors, Mode mode, RngStream& rng) {
  const std::size_t s = config_.input_size;
  Trunk trunk = encode(images, mode, rng);
  const std::size_t n = images.dim(0);
  if (!priors.defined() || priors.shape() != Shape{n, ShapePrior::kChannels, s, s}) {
    throw ShapeError("GridNet: priors must be registered as [N,3," + std::to_string(s) + "," + std::to_string(s) +
                     "]");
  }
  BatchPrediction out;
  out.com = regression_head(trunk.conv5);
  Tensor d = trunk.conv5;
  for (std::size_t k = 0; k < 4; ++k) {
    const std::size_t r = 3 - k;
    d = conv_transpose2d(d, decoder_[k].up.weight, decoder_[k].up.bias);
    d = concat_channels(d, trunk.lateral[r]);
    d = unit_forward(decoder_[k].first, d, mode);
    d = unit_forward(decoder_[k].second, d, mode);
    // UNCONV-4 feeds its 4 maps straight into MERGE-1.
    if (r > 0) d = dropout(d, config_.dropout_p, rng, mode);
  }
  // MERGE-1: 4 UNCONV-4 maps + 3 prior maps.
  const Tensor merged = concat_channels(d, priors);
  out.logits = conv2d(merged, conv10_.weight, conv10_.bias);
  return out;
}

Tensor GridNet::predict_com(const Tensor& images, Mode mode, RngStream& rng) {
  return regression_head(encode(images, mode, rng).conv5);
}

std::vector<NamedTensor> GridNet::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t r = 0; r < GridNetConfig::kRows; ++r) {
    const std::string row = "conv" + std::to_string(r + 1);
    push_unit(out, row + ".a", encoder_[r].first);
    push_unit(out, row + ".b", encoder_[r].second);
  }
  for (std::size_t r = 0; r < 4; ++r) push_unit(out, "conv" + std::to_string(r + 6), lateral_[r].unit);
  for (std::size_t k = 0; k < 4; ++k) {
    const std::string name = "unconv" + std::to_string(k + 1);
    out.push_back({name + ".up.weight", decoder_[k].up.weight});
    out.push_back({name + ".up.bias", decoder_[k].up.bias});
    push_unit(out, name + ".a", decoder_[k].first);
    push_unit(out, name + ".b", decoder_[k].second);
  }
  const std::pair<const char*, const DenseLayer*> fcs[] = {{"fc1", &fc1_}, {"fc2", &fc2_}, {"fc3", &fc3_}};
  for (const auto& [name, layer] : fcs) {
    out.push_back({std::string(name) + ".weight", layer->weight});
    out.push_back({std::string(name) + ".bias", layer->bias});
  }
  out.push_back({"conv10.weight", conv10_.weight});
  out.push_back({"conv10.bias", conv10_.bias});
  return out;
}

std::vector<Tensor> GridNet::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

std::vector<Tensor> GridNet::weight_parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) {
    const auto& n = p.name;
    if (n.ends_with(".weight")) out.push_back(p.tensor);
  }
  return out;
}

std::vector<BatchNormStats*> GridNet::norm_stats() {
  std::vector<BatchNormStats*> out;
  for (auto& e : encoder_) {
    out.push_back(&e.first.norm.stats);
    out.push_back(&e.second.norm.stats);
  }
  for (auto& l : lateral_) out.push_back(&l.unit.norm.stats);
  for (auto& d : decoder_) {
    out.push_back(&d.first.norm.stats);
    out.push_back(&d.second.norm.stats);
  }
  return out;
}

std::vector<const BatchNormStats*> GridNet::norm_stats() const {
  std::vector<const BatchNormStats*> out;
  for (auto* s : const_cast<GridNet*>(this)->norm_stats()) out.push_back(s);
  return out;
}

std::size_t GridNet::param_count() const { return count_parameters(parameters()); }

void GridNet::zero_grad() {
  for (auto& p : parameters()) p.zero_grad();
}

GridNet build_model(const GridNetConfig& config, RngStream rng) { return GridNet(config, rng); }

std::size_t count_parameters(std::span<const Tensor> tensors) {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.numel();
  return n;
}

std::size_t param_count(const GridNet& model) { return model.param_count(); }

SlicePrediction forward(GridNet& model, const Tensor& slice, const Tensor& prior_slice, Mode mode) {
  const std::size_t s = model.config().input_size;
  if (!slice.defined() || slice.shape() != Shape{1, 1, s, s}) {
    throw ShapeError("forward: slice must be [1,1," + std::to_string(s) + "," + std::to_string(s) + "]");
  }
  if (!prior_slice.defined() || prior_slice.shape() != Shape{ShapePrior::kChannels, s, s}) {
    throw ShapeError("forward: prior must be registered as [3," + std::to_string(s) + "," + std::to_string(s) + "]");
  }
  auto out = model.forward(slice, prior_slice.reshape({1, ShapePrior::kChannels, s, s}), mode, model.dropout_stream());
  const auto com = out.com.data();
  return {out.logits.reshape({model.config().class_count, s, s}), com[0], com[1]};
}

std::vector<std::uint8_t> argmax_labels(const Tensor& logits) {
  if (!logits.defined() || logits.rank() != 4) throw ShapeError("argmax_labels: logits must be NCHW");
  const std::size_t n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  const auto x = logits.data();
  std::vector<std::uint8_t> out(n * hw);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t v = 0; v < hw; ++v) {
      std::size_t best = 0;
      double best_val = x[s * c * hw + v];
      for (std::size_t ch = 1; ch < c; ++ch) {
        const double val = x[(s * c + ch) * hw + v];
        if (val > best_val) {
          best_val = val;
          best = ch;
        }
      }
      out[s * hw + v] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

LabelVolume predict_volume(GridNet& model, const Volume& volume, const ShapePrior& prior,
                           std::vector<CoM>* predicted_com) {
  const std::size_t s = model.config().input_size;
  if (volume.slices == 0) throw std::invalid_argument("predict_volume: empty volume");
  if (volume.rows != s || volume.cols != s) {
    throw ShapeError("predict_volume: slices must be " + std::to_string(s) + "x" + std::to_string(s));
  }
  NoGradGuard no_grad;
  // Eval mode reads frozen statistics only, so chunking does not change results.
  constexpr std::size_t kChunk = 8;
  LabelVolume labels{volume.slices, s, s, volume.spacing, std::vector<std::uint8_t>(volume.values.size())};
  if (predicted_com) predicted_com->assign(volume.slices, CoM{});
  RngStream unused(0);
  const std::size_t plane = s * s;
  for (std::size_t z0 = 0; z0 < volume.slices; z0 += kChunk) {
    const std::size_t n = std::min(kChunk, volume.slices - z0);
    std::vector<double> img(volume.values.begin() + static_cast<std::ptrdiff_t>(z0 * plane),
                            volume.values.begin() + static_cast<std::ptrdiff_t>((z0 + n) * plane));
    const Tensor images = Tensor::from_data({n, 1, s, s}, std::move(img));
    const Tensor com = model.predict_com(images, Mode::eval, unused);
    std::vector<double> priors(n * ShapePrior::kChannels * plane);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = com.data()[2 * i], y = com.data()[2 * i + 1];
      const CoM c{x, y, std::isfinite(x) && std::isfinite(y)};
      if (predicted_com) (*predicted_com)[z0 + i] = c;
      register_prior_into(prior, c, z0 + i, volume.slices, s,
                          std::span<double>(priors).subspan(i * ShapePrior::kChannels * plane,
                                                            ShapePrior::kChannels * plane));
    }
    const auto pred =
        model.forward(images, Tensor::from_data({n, ShapePrior::kChannels, s, s}, std::move(priors)), Mode::eval, unused);
    const auto lab = argmax_labels(pred.logits);
    std::copy(lab.begin(), lab.end(), labels.values.begin() + static_cast<std::ptrdiff_t>(z0 * plane));
  }
  return labels;
}

}  // namespace gridseg
