#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gridseg::oracle {

std::vector<double> conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const auto& s = input.shape();
  const std::size_t n = s[0], ci = s[1], h = s[2], w = s[3], co = weight.dim(0);
  const auto x = input.data();
  const auto k = weight.data();
  std::vector<double> out(n * co * h * w, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) {
          double acc = bias.defined() ? bias.data()[o] : 0.0;
          for (std::size_t c = 0; c < ci; ++c)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const long sy = static_cast<long>(y) + ky - 1, sx = static_cast<long>(xx) + kx - 1;
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
                acc += x[((b * ci + c) * h + sy) * w + sx] * k[((o * ci + c) * 3 + ky) * 3 + kx];
              }
          out[((b * co + o) * h + y) * w + xx] = acc;
        }
  return out;
}

std::vector<double> conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const auto& s = input.shape();
  const std::size_t n = s[0], ci = s[1], h = s[2], w = s[3], co = weight.dim(1);
  const std::size_t oh = 2 * h, ow = 2 * w;
  std::vector<double> out(n * co * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t i = 0; i < oh * ow; ++i) out[(b * co + o) * oh * ow + i] = bias.defined() ? bias.data()[o] : 0.0;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double v = input.data()[((b * ci + c) * h + y) * w + x];
          for (std::size_t o = 0; o < co; ++o)
            for (std::size_t ky = 0; ky < 2; ++ky)
              for (std::size_t kx = 0; kx < 2; ++kx)
                out[((b * co + o) * oh + 2 * y + ky) * ow + 2 * x + kx] +=
                    v * weight.data()[((c * co + o) * 2 + ky) * 2 + kx];
        }
  return out;
}

std::vector<double> maxpool2d(const Tensor& input) {
  const auto& s = input.shape();
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  std::vector<double> out;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < h; y += 2)
      for (std::size_t x = 0; x < w; x += 2) {
        double best = -INFINITY;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) best = std::max(best, input.data()[(p * h + y + dy) * w + x + dx]);
        out.push_back(best);
      }
  return out;
}

std::vector<double> dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const std::size_t n = input.dim(0), d = input.dim(1), k = weight.dim(1);
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = bias.data()[j];
      for (std::size_t t = 0; t < d; ++t) acc += input.data()[i * d + t] * weight.data()[t * k + j];
      out[i * k + j] = acc;
    }
  return out;
}

double softmax_cross_entropy(const Tensor& logits, const Tensor& target, const Tensor& pixel_weights) {
  const auto& s = logits.shape();
  const std::size_t n = s[0], l = s[1], hw = s[2] * s[3];
  double loss = 0.0;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t v = 0; v < hw; ++v) {
      double z = 0.0;
      for (std::size_t c = 0; c < l; ++c) z += std::exp(logits.data()[(b * l + c) * hw + v]);
      for (std::size_t c = 0; c < l; ++c) {
        const double p = std::exp(logits.data()[(b * l + c) * hw + v]) / z;
        loss -= pixel_weights.data()[b * hw + v] * target.data()[(b * l + c) * hw + v] * std::log(p);
      }
    }
  return loss;
}

double dice(const LabelVolume& a, const LabelVolume& b) {
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a.values[i] != 0;
    nb += b.values[i] != 0;
    both += a.values[i] != 0 && b.values[i] != 0;
  }
  return na + nb == 0 ? 1.0 : 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

namespace {

struct Point {
  double z, y, x;
};

std::vector<Point> boundary(const LabelVolume& m, const Spacing& sp) {
  const auto inside = [&](long z, long y, long x) {
    return z >= 0 && y >= 0 && x >= 0 && z < static_cast<long>(m.slices) && y < static_cast<long>(m.rows) &&
           x < static_cast<long>(m.cols) && m.at(z, y, x) != 0;
  };
  static constexpr long kOffsets[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<Point> out;
  for (long z = 0; z < static_cast<long>(m.slices); ++z)
    for (long y = 0; y < static_cast<long>(m.rows); ++y)
      for (long x = 0; x < static_cast<long>(m.cols); ++x) {
        if (!inside(z, y, x)) continue;
        bool edge = false;
        for (const auto& o : kOffsets) edge = edge || !inside(z + o[0], y + o[1], x + o[2]);
        if (edge) out.push_back({z * sp.dz, y * sp.dy, x * sp.dx});
      }
  return out;
}

double directed(const std::vector<Point>& a, const std::vector<Point>& b) {
  double worst = 0.0;
  for (const auto& p : a) {
    double best = INFINITY;
    for (const auto& q : b) {
      best = std::min(best, std::sqrt((p.z - q.z) * (p.z - q.z) + (p.y - q.y) * (p.y - q.y) + (p.x - q.x) * (p.x - q.x)));
    }
    worst = std::max(worst, best);
  }
  return worst;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

std::optional<double> hausdorff_mm(const LabelVolume& a, const LabelVolume& b, const Spacing& spacing) {
  const auto pa = boundary(a, spacing), pb = boundary(b, spacing);
  if (pa.empty() || pb.empty()) return std::nullopt;
  return std::max(directed(pa, pb), directed(pb, pa));
}

LabelVolume largest_component(const LabelVolume& labels) {
  LabelVolume out = labels;
  for (const std::uint8_t cls : {kRv, kMyo, kLv}) {
    UnionFind uf(labels.size());
    for (std::size_t z = 0; z < labels.slices; ++z)
      for (std::size_t y = 0; y < labels.rows; ++y)
        for (std::size_t x = 0; x < labels.cols; ++x) {
          if (labels.at(z, y, x) != cls) continue;
          const std::size_t i = labels.index(z, y, x);
          if (z + 1 < labels.slices && labels.at(z + 1, y, x) == cls) uf.unite(i, labels.index(z + 1, y, x));
          if (y + 1 < labels.rows && labels.at(z, y + 1, x) == cls) uf.unite(i, labels.index(z, y + 1, x));
          if (x + 1 < labels.cols && labels.at(z, y, x + 1) == cls) uf.unite(i, labels.index(z, y, x + 1));
        }
    // Roots are the smallest index of their set, so the first root reaching
    // the maximal size is the tie winner.
    std::vector<std::size_t> size(labels.size(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels.values[i] == cls) ++size[uf.find(i)];
    std::size_t best = labels.size(), best_size = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (size[i] > best_size) best = i, best_size = size[i];
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels.values[i] == cls && uf.find(i) != best) out.values[i] = kBack;
  }
  return out;
}

}  // namespace gridseg::oracle
