#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gridseg/gridnet.hpp"
#include "gridseg/loss.hpp"
#include "gridseg/ops.hpp"

namespace gridseg::testing {

Tensor random_tensor(const Shape& shape, RngStream& rng, double scale, bool requires_grad) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = scale * rng.normal();
  return Tensor::from_data(shape, std::move(data), requires_grad);
}

namespace {

double norm_ratio(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::sqrt(std::max(na, nn));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

double numeric_partial(const std::function<Tensor()>& objective, const Tensor& input, std::size_t i, double step) {
  NoGradGuard no_grad;
  Tensor t = input;
  auto data = t.mutable_data();
  const double keep = data[i];
  data[i] = keep + step;
  const double up = objective().item();
  data[i] = keep - step;
  const double down = objective().item();
  data[i] = keep;
  return (up - down) / (2.0 * step);
}

std::vector<double> analytic_grads(const std::function<Tensor()>& objective, const std::vector<Tensor>& inputs) {
  for (auto t : inputs) t.zero_grad();
  backward(objective());
  std::vector<double> out;
  for (const auto& t : inputs) out.insert(out.end(), t.grad().begin(), t.grad().end());
  return out;
}

/// sum(out * R) with a fixed random R exercises every output gradient slot.
Tensor probe(const Tensor& out, const Tensor& r) { return sum(mul(out, r)); }

Tensor one_hot_random(std::size_t n, std::size_t c, std::size_t h, std::size_t w, RngStream& rng) {
  std::vector<double> data(n * c * h * w, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t v = 0; v < h * w; ++v) data[(s * c + rng.uniform_int(c)) * h * w + v] = 1.0;
  }
  return Tensor::from_data({n, c, h, w}, std::move(data));
}

template <typename Build>
OpGradientCase unary_case(std::string name, Shape shape, Build build) {
  return {std::move(name), [shape, build](RngStream& rng) {
            const Tensor x = random_tensor(shape, rng, 1.0, true);
            const Tensor probe_out = build(x, rng);
            const Tensor r = random_tensor(probe_out.shape(), rng);
            const RngStream frozen = rng;
            return gradient_error(
                [&] {
                  RngStream local = frozen;
                  return probe(build(x, local), r);
                },
                {x});
          }};
}

}  // namespace

double gradient_error(const std::function<Tensor()>& objective, const std::vector<Tensor>& inputs, double step) {
  const auto analytic = analytic_grads(objective, inputs);
  std::vector<double> numeric;
  for (const auto& t : inputs) {
    for (std::size_t i = 0; i < t.numel(); ++i) numeric.push_back(numeric_partial(objective, t, i, step));
  }
  return norm_ratio(analytic, numeric);
}

double gradient_error_subset(const std::function<Tensor()>& objective, const Tensor& input,
                             const std::vector<std::size_t>& indices, double step) {
  const auto all = analytic_grads(objective, {input});
  std::vector<double> analytic, numeric;
  for (const auto i : indices) {
    analytic.push_back(all[i]);
    numeric.push_back(numeric_partial(objective, input, i, step));
  }
  return norm_ratio(analytic, numeric);
}

std::vector<OpGradientCase> op_gradient_cases() {
  std::vector<OpGradientCase> cases;

  cases.push_back({"conv2d", [](RngStream& rng) {
                     const Tensor x = random_tensor({2, 2, 5, 4}, rng, 1.0, true);
                     const Tensor w = random_tensor({3, 2, 3, 3}, rng, 0.5, true);
                     const Tensor b = random_tensor({3}, rng, 0.5, true);
                     const Tensor r = random_tensor({2, 3, 5, 4}, rng);
                     return gradient_error([&] { return probe(conv2d(x, w, b), r); }, {x, w, b});
                   }});
  cases.push_back({"conv_transpose2d", [](RngStream& rng) {
                     const Tensor x = random_tensor({2, 3, 3, 2}, rng, 1.0, true);
                     const Tensor w = random_tensor({3, 2, 2, 2}, rng, 0.5, true);
                     const Tensor b = random_tensor({2}, rng, 0.5, true);
                     const Tensor r = random_tensor({2, 2, 6, 4}, rng);
                     return gradient_error([&] { return probe(conv_transpose2d(x, w, b), r); }, {x, w, b});
                   }});
  cases.push_back(unary_case("maxpool2d", {2, 2, 4, 6}, [](const Tensor& x, RngStream&) { return maxpool2d(x); }));
  cases.push_back(unary_case("avgpool2d", {2, 2, 4, 6}, [](const Tensor& x, RngStream&) { return avgpool2d(x); }));
  for (const Mode mode : {Mode::train, Mode::eval}) {
    cases.push_back({mode == Mode::train ? "batch_norm(train)" : "batch_norm(eval)", [mode](RngStream& rng) {
                       const Tensor x = random_tensor({3, 2, 3, 2}, rng, 2.0, true);
                       const Tensor g = random_tensor({2}, rng, 1.0, true);
                       const Tensor b = random_tensor({2}, rng, 1.0, true);
                       const Tensor r = random_tensor({3, 2, 3, 2}, rng);
                       BatchNormStats running{{0.3, -0.2}, {1.5, 0.7}};
                       return gradient_error(
                           [&] {
                             BatchNormStats local = running;
                             return probe(batch_norm(x, g, b, local, mode), r);
                           },
                           {x, g, b});
                     }});
  }
  cases.push_back({"dense", [](RngStream& rng) {
                     const Tensor x = random_tensor({3, 4}, rng, 1.0, true);
                     const Tensor w = random_tensor({4, 5}, rng, 1.0, true);
                     const Tensor b = random_tensor({5}, rng, 1.0, true);
                     const Tensor r = random_tensor({3, 5}, rng);
                     return gradient_error([&] { return probe(dense(x, w, b), r); }, {x, w, b});
                   }});
  cases.push_back(unary_case("relu", {2, 3, 4}, [](const Tensor& x, RngStream&) { return relu(x); }));
  cases.push_back(unary_case("dropout(train)", {2, 3, 4},
                             [](const Tensor& x, RngStream& rng) { return dropout(x, 0.3, rng, Mode::train); }));
  cases.push_back({"concat_channels", [](RngStream& rng) {
                     const Tensor a = random_tensor({2, 2, 3, 2}, rng, 1.0, true);
                     const Tensor b = random_tensor({2, 3, 3, 2}, rng, 1.0, true);
                     const Tensor r = random_tensor({2, 5, 3, 2}, rng);
                     return gradient_error([&] { return probe(concat_channels(a, b), r); }, {a, b});
                   }});
  cases.push_back(unary_case("flatten", {2, 3, 2, 2}, [](const Tensor& x, RngStream&) { return flatten(x); }));
  cases.push_back({"add/sub/mul", [](RngStream& rng) {
                     const Tensor a = random_tensor({3, 4}, rng, 1.0, true);
                     const Tensor b = random_tensor({3, 4}, rng, 1.0, true);
                     const Tensor r = random_tensor({3, 4}, rng);
                     return gradient_error([&] { return probe(mul(add(a, b), sub(a, scale(b, 0.7))), r); }, {a, b});
                   }});
  cases.push_back({"sum/sum_squares", [](RngStream& rng) {
                     const Tensor a = random_tensor({2, 5}, rng, 1.0, true);
                     return gradient_error([&] { return add(sum(a), scale(sum_squares(a), 0.3)); }, {a});
                   }});
  cases.push_back({"softmax_cross_entropy", [](RngStream& rng) {
                     const Tensor logits = random_tensor({2, 4, 3, 2}, rng, 2.0, true);
                     const Tensor target = one_hot_random(2, 4, 3, 2, rng);
                     std::vector<double> w(2 * 3 * 2);
                     for (auto& v : w) v = rng.uniform();
                     const Tensor weights = Tensor::from_data({2, 3, 2}, std::move(w));
                     return gradient_error([&] { return softmax_cross_entropy(logits, target, weights); }, {logits});
                   }});
  return cases;
}

double end_to_end_gradient_error(std::uint64_t seed, std::size_t param_samples) {
  GridNetConfig config;
  config.base_channels = 2;
  config.input_size = 32;
  config.fc1_units = 8;
  config.fc2_units = 4;
  RngStream rng(seed);
  GridNet model(config, rng.fork(1));
  auto named = model.named_parameters();
  // FC-3 starts at zero; give it values so the head's upstream path is live.
  for (auto& p : named) {
    if (p.name == "fc3.weight") {
      for (auto& v : p.tensor.mutable_data()) v = 0.3 * rng.normal();
    }
  }
  const std::size_t n = 2, s = config.input_size;
  const Tensor images = random_tensor({n, 1, s, s}, rng);
  std::vector<double> prior_data(n * 3 * s * s);
  for (auto& v : prior_data) v = rng.uniform() / 3.0;
  const Tensor priors = Tensor::from_data({n, 3, s, s}, std::move(prior_data));
  std::vector<std::uint8_t> labels(n * s * s);
  for (auto& l : labels) l = static_cast<std::uint8_t>(rng.uniform_int(4));
  const Tensor target = one_hot(labels, n, s, s);
  const Tensor contours = contour_weights(labels, n, s, s);
  const std::vector<CoM> true_com = {{14.0, 17.5, true}, {20.0, 9.0, true}};
  const RngStream dropout_seed = rng.fork(2);
  const auto weights = model.weight_parameters();

  const auto objective = [&] {
    RngStream local = dropout_seed;
    const auto pred = model.forward(images, priors, Mode::train, local);
    return total_loss(pred.logits, target, contours, pred.com, true_com, weights, default_weights()).total;
  };

  // Random (tensor, element) picks across all parameters.
  std::vector<double> analytic, numeric;
  for (auto& p : named) p.tensor.zero_grad();
  backward(objective());
  for (std::size_t k = 0; k < param_samples; ++k) {
    const auto& p = named[rng.uniform_int(named.size())].tensor;
    const std::size_t i = rng.uniform_int(p.numel());
    analytic.push_back(p.grad()[i]);
    // Thousands of ReLU and max-pool kinks sit within 1e-5 of a random
    // point in this network; a 1e-6 step keeps the stencil on one side.
    numeric.push_back(numeric_partial(objective, p, i, 1e-6));
  }
  return norm_ratio(analytic, numeric);
}

}  // namespace gridseg::testing
