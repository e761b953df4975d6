#include <fstream>
#include <limits>

#include "gridseg/data_io.hpp"

namespace gridseg {

namespace {

constexpr std::uint8_t kDtypeF64 = 0;
constexpr std::uint8_t kDtypeU8 = 1;
// 2^36 voxels is far beyond any cardiac exam; larger headers are corrupt.
constexpr std::uint64_t kMaxVoxels = std::uint64_t{1} << 36;

template <typename Grid>
void write_header(ByteWriter& w, const Grid& g, std::uint8_t dtype) {
  w.magic("MVOL");
  w.u32(kMvolVersion);
  w.u8(dtype);
  w.u32(static_cast<std::uint32_t>(g.slices));
  w.u32(static_cast<std::uint32_t>(g.rows));
  w.u32(static_cast<std::uint32_t>(g.cols));
  w.f64(g.spacing.dz);
  w.f64(g.spacing.dy);
  w.f64(g.spacing.dx);
}

struct Header {
  std::uint8_t dtype;
  std::size_t h, n, m;
  Spacing spacing;
};

Header read_header(ByteReader& r) {
  r.expect_magic("MVOL");
  const std::uint32_t version = r.u32();
  if (version != kMvolVersion) {
    throw LoadError(LoadErrorKind::bad_version, r.what() + ": unsupported version " + std::to_string(version));
  }
  Header hd{};
  hd.dtype = r.u8();
  if (hd.dtype != kDtypeF64 && hd.dtype != kDtypeU8) {
    throw LoadError(LoadErrorKind::bad_dtype, r.what() + ": unknown dtype code " + std::to_string(hd.dtype));
  }
  const std::uint64_t h = r.u32(), n = r.u32(), m = r.u32();
  if (h == 0 || n == 0 || m == 0) throw LoadError(LoadErrorKind::bad_value, r.what() + ": zero extent in header");
  if (h > kMaxVoxels / n || h * n > kMaxVoxels / m) {
    throw LoadError(LoadErrorKind::dimension_overflow, r.what() + ": dimension overflow");
  }
  hd.h = h;
  hd.n = n;
  hd.m = m;
  hd.spacing.dz = r.f64();
  hd.spacing.dy = r.f64();
  hd.spacing.dx = r.f64();
  if (!(hd.spacing.dz > 0.0 && hd.spacing.dy > 0.0 && hd.spacing.dx > 0.0)) {
    throw LoadError(LoadErrorKind::bad_value, r.what() + ": spacing must be positive");
  }
  if (hd.spacing.dy != hd.spacing.dx) {
    throw LoadError(LoadErrorKind::bad_value, r.what() + ": in-plane spacing must be isotropic (dy == dx)");
  }
  return hd;
}

void check_payload(const ByteReader& r, std::size_t expected) {
  if (r.remaining() < expected) throw LoadError(LoadErrorKind::truncated, r.what() + ": truncated payload");
  if (r.remaining() > expected) {
    throw LoadError(LoadErrorKind::truncated, r.what() + ": truncated payload (header dims do not match " +
                                                  std::to_string(r.remaining()) + " payload bytes)");
  }
}

std::filesystem::path sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".meta";
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_volume(const Volume& volume) {
  ByteWriter w;
  write_header(w, volume, kDtypeF64);
  w.f64s(volume.values.data(), volume.values.size());
  return w.buffer();
}

std::vector<std::uint8_t> encode_volume(const LabelVolume& labels) {
  ByteWriter w;
  write_header(w, labels, kDtypeU8);
  w.bytes(labels.values.data(), labels.values.size());
  return w.buffer();
}

Volume decode_volume(std::vector<std::uint8_t> bytes) {
  ByteReader r(std::move(bytes), "MVOL");
  const Header hd = read_header(r);
  if (hd.dtype != kDtypeF64) throw LoadError(LoadErrorKind::bad_dtype, "MVOL: expected f64 image volume");
  Volume v;
  v.slices = hd.h;
  v.rows = hd.n;
  v.cols = hd.m;
  v.spacing = hd.spacing;
  check_payload(r, hd.h * hd.n * hd.m * 8);
  v.values.resize(hd.h * hd.n * hd.m);
  r.f64s(v.values.data(), v.values.size());
  return v;
}

LabelVolume decode_label_volume(std::vector<std::uint8_t> bytes) {
  ByteReader r(std::move(bytes), "MVOL");
  const Header hd = read_header(r);
  if (hd.dtype != kDtypeU8) throw LoadError(LoadErrorKind::bad_dtype, "MVOL: expected u8 label volume");
  LabelVolume v = LabelVolume::filled(hd.h, hd.n, hd.m, hd.spacing, 0);
  check_payload(r, v.size());
  for (auto& x : v.values) {
    x = r.u8();
    if (x >= kClassCount) throw LoadError(LoadErrorKind::bad_value, "MVOL: label value out of range");
  }
  return v;
}

void write_volume(const std::filesystem::path& path, const Volume& volume) {
  write_file_bytes(path, encode_volume(volume));
  std::ofstream meta(sidecar(path), std::ios::trunc);
  meta << "phase=" << phase_name(volume.phase) << "\n";
  if (!meta) throw std::runtime_error("cannot write sidecar for " + path.string());
}

void write_volume(const std::filesystem::path& path, const LabelVolume& labels) {
  write_file_bytes(path, encode_volume(labels));
}

Volume read_volume(const std::filesystem::path& path) {
  Volume v = decode_volume(read_file_bytes(path));
  std::ifstream meta(sidecar(path));
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    if (line.substr(0, eq) == "phase") v.phase = parse_phase(line.substr(eq + 1));
  }
  return v;
}

LabelVolume read_label_volume(const std::filesystem::path& path) {
  return decode_label_volume(read_file_bytes(path));
}

}  // namespace gridseg
