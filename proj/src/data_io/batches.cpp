#include <numeric>
#include <stdexcept>

#include "gridseg/data_io.hpp"

namespace gridseg {

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size, RngStream& rng) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be at least 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates on the portable stream rather than std::shuffle, whose
  // draws differ between standard libraries.
  for (std::size_t i = count; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(i));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace gridseg
