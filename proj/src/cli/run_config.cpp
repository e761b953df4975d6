#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gridseg/cli.hpp"

namespace gridseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw std::invalid_argument("config: bad value for " + key + ": '" + value + "'");
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

template <typename T, typename Field>
Setter number(Field field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) { field(c) = parse_number<T>(k, v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"manifest", [](RunConfig& c, const std::string&, const std::string& v) { c.manifest = v; }},
      {"prior", [](RunConfig& c, const std::string&, const std::string& v) { c.prior = v; }},
      {"out_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
      {"resume", [](RunConfig& c, const std::string&, const std::string& v) { c.resume = v; }},
      {"base_channels", number<std::size_t>([](RunConfig& c) -> auto& { return c.model.base_channels; })},
      {"width_factor", number<std::size_t>([](RunConfig& c) -> auto& { return c.model.width_factor; })},
      {"max_width_multiplier",
       number<std::size_t>([](RunConfig& c) -> auto& { return c.model.max_width_multiplier; })},
      {"input_size", number<std::size_t>([](RunConfig& c) -> auto& { return c.model.input_size; })},
      {"dropout_p", number<double>([](RunConfig& c) -> auto& { return c.model.dropout_p; })},
      {"fc1_units", number<std::size_t>([](RunConfig& c) -> auto& { return c.model.fc1_units; })},
      {"fc2_units", number<std::size_t>([](RunConfig& c) -> auto& { return c.model.fc2_units; })},
      {"gamma_T", number<double>([](RunConfig& c) -> auto& { return c.loss.gamma_T; })},
      {"gamma_C", number<double>([](RunConfig& c) -> auto& { return c.loss.gamma_C; })},
      {"gamma_c", number<double>([](RunConfig& c) -> auto& { return c.loss.gamma_c; })},
      {"gamma_w", number<double>([](RunConfig& c) -> auto& { return c.loss.gamma_w; })},
      {"epochs", number<std::size_t>([](RunConfig& c) -> auto& { return c.epochs; })},
      {"batch_size", number<std::size_t>([](RunConfig& c) -> auto& { return c.batch_size; })},
      {"lr", number<double>([](RunConfig& c) -> auto& { return c.lr; })},
      {"seed", number<std::uint64_t>([](RunConfig& c) -> auto& { return c.seed; })},
      {"checkpoint_every", number<std::size_t>([](RunConfig& c) -> auto& { return c.checkpoint_every; })},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  if (batch_size == 0) throw std::invalid_argument("config: batch_size must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("config: lr must be positive");
  if (checkpoint_every == 0) throw std::invalid_argument("config: checkpoint_every must be positive");
}

void RunConfig::validate_paths() const {
  namespace fs = std::filesystem;
  if (manifest.empty() || !fs::exists(manifest)) throw MissingInputError("manifest not found: " + manifest.string());
  if (prior.empty() || !fs::exists(prior)) throw MissingInputError("prior not found: " + prior.string());
  if (resume && !fs::exists(*resume)) throw MissingInputError("checkpoint not found: " + resume->string());
  if (fs::exists(out_dir) && !fs::is_directory(out_dir)) {
    throw std::invalid_argument("config: out_dir exists and is not a directory: " + out_dir.string());
  }
}

RunConfig parse_run_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = "config line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw std::invalid_argument(where + "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw std::invalid_argument(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw std::invalid_argument(where + "repeated key '" + key + "'");
    try {
      it->second(base, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("config not found: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), std::move(base));
}

std::string format_run_config(const RunConfig& c) {
  std::ostringstream o;
  o.precision(17);
  o << "manifest=" << c.manifest.string() << '\n'
    << "prior=" << c.prior.string() << '\n'
    << "out_dir=" << c.out_dir.string() << '\n';
  if (c.resume) o << "resume=" << c.resume->string() << '\n';
  o << "base_channels=" << c.model.base_channels << '\n'
    << "width_factor=" << c.model.width_factor << '\n'
    << "max_width_multiplier=" << c.model.max_width_multiplier << '\n'
    << "input_size=" << c.model.input_size << '\n'
    << "dropout_p=" << c.model.dropout_p << '\n'
    << "fc1_units=" << c.model.fc1_units << '\n'
    << "fc2_units=" << c.model.fc2_units << '\n'
    << "gamma_T=" << c.loss.gamma_T << '\n'
    << "gamma_C=" << c.loss.gamma_C << '\n'
    << "gamma_c=" << c.loss.gamma_c << '\n'
    << "gamma_w=" << c.loss.gamma_w << '\n'
    << "epochs=" << c.epochs << '\n'
    << "batch_size=" << c.batch_size << '\n'
    << "lr=" << c.lr << '\n'
    << "seed=" << c.seed << '\n'
    << "checkpoint_every=" << c.checkpoint_every << '\n';
  return o.str();
}

}  // namespace gridseg
