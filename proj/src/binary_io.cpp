#include "gridseg/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace gridseg {

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(LoadErrorKind::not_found, "cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void ByteReader::expect_magic(const char (&tag)[5]) {
  if (remaining() < 4 || std::memcmp(data_.data() + pos_, tag, 4) != 0) {
    throw LoadError(LoadErrorKind::bad_magic, what_ + ": bad magic (expected " + std::string(tag, 4) + ")");
  }
  pos_ += 4;
}

}  // namespace gridseg
