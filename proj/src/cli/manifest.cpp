#include <fstream>
#include <sstream>

#include "gridseg/cli.hpp"
#include "gridseg/binary_io.hpp"
#include "gridseg/rng.hpp"

namespace gridseg {

namespace {

constexpr const char* kManifestHeader = "case_id\tpatient_id\tphase\timage\tlabels";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) out.push_back(field);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& field) {
  if (field == "-" || field.empty()) return {};
  const std::filesystem::path p(field);
  return p.is_absolute() ? p : base / p;
}

std::string relativize(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty()) return "-";
  const auto rel = p.lexically_proximate(base);
  return rel.empty() ? p.string() : rel.string();
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("manifest not found: " + path.string());
  const auto base = path.parent_path();
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw std::invalid_argument("manifest " + path.string() + ": missing or wrong header");
  }
  std::vector<ManifestEntry> entries;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 5) {
      throw std::invalid_argument("manifest " + path.string() + " line " + std::to_string(lineno) +
                                  ": expected 5 tab-separated fields");
    }
    entries.push_back({f[0], f[1], parse_phase(f[2]), resolve(base, f[3]), resolve(base, f[4])});
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  const auto base = path.parent_path();
  std::ostringstream out;
  out << kManifestHeader << '\n';
  for (const auto& e : entries) {
    out << e.case_id << '\t' << e.patient_id << '\t' << phase_name(e.phase) << '\t' << relativize(base, e.image)
        << '\t' << relativize(base, e.labels) << '\n';
  }
  const std::string text = out.str();
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::pair<std::vector<ManifestEntry>, std::vector<ManifestEntry>> split_by_patient(
    const std::vector<ManifestEntry>& entries, double train_fraction) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw std::invalid_argument("split_by_patient: train_fraction must be in [0,1]");
  }
  std::pair<std::vector<ManifestEntry>, std::vector<ManifestEntry>> out;
  for (const auto& e : entries) {
    // Top 53 bits of the mixed hash as a uniform draw in [0,1).
    const double u = static_cast<double>(splitmix64(fnv1a(e.patient_id)) >> 11) * 0x1.0p-53;
    (u < train_fraction ? out.first : out.second).push_back(e);
  }
  return out;
}

}  // namespace gridseg
