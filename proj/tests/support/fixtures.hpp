#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "gridseg/cli.hpp"
#include "gridseg/data_io.hpp"

namespace gridseg::testing {

/// In-memory phantom case, preprocessed and fitted as the pipeline does it.
inline PreparedCase phantom_case(std::uint64_t seed, std::size_t size, Phase phase, std::size_t input_size) {
  const Phantom ph = gen_phantom(random_phantom_spec(seed, size, phase));
  PreparedCase c;
  c.entry = {"phantom_" + std::to_string(seed), "p" + std::to_string(seed), phase, {}, {}};
  c.image = fit_volume(preprocess(ph.image), input_size);
  c.labels = fit_volume(ph.labels, input_size);
  c.native_rows = ph.image.rows;
  c.native_cols = ph.image.cols;
  return c;
}

/// Fresh scratch directory under the system temp dir, removed on scope exit.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("gridseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace gridseg::testing
