#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "gridseg/cli.hpp"
#include "gridseg/data_io.hpp"

using namespace gridseg;
namespace fs = std::filesystem;
using testing::ScratchDir;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_ext(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

/// Small cohort plus prior for command tests; input size 32.
struct MiniCohort {
  ScratchDir dir{"cohort"};
  fs::path manifest = dir / "data/manifest.tsv";
  fs::path prior = dir / "prior.spri";

  explicit MiniCohort(std::size_t count = 4) {
    std::ostringstream out, err;
    CohortOptions opt;
    opt.count = count;
    opt.size = 32;
    opt.seed = 5;
    opt.min_slices = 7;
    opt.max_slices = 8;
    REQUIRE(cmd_gen_phantoms(opt, dir / "data", out, err) == kExitOk);
    REQUIRE(cmd_build_prior(manifest, prior, out, err) == kExitOk);
  }

  RunConfig config(const std::string& run) const {
    RunConfig c;
    c.manifest = manifest;
    c.prior = prior;
    c.out_dir = dir / run;
    c.model.base_channels = 2;
    c.model.input_size = 32;
    c.model.fc1_units = 8;
    c.model.fc2_units = 4;
    c.batch_size = 4;
    c.lr = 1e-3;
    c.seed = 11;
    return c;
  }
};

int run_binary(const std::string& args) {
  const int status = std::system((std::string(GRIDSEG_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("run config: defaults, parsing and rejection") {
  const RunConfig d;
  CHECK(d.epochs == 100);
  CHECK(d.batch_size == 10);
  CHECK(d.lr == 1e-4);
  CHECK(d.checkpoint_every == 10);

  const RunConfig c = parse_run_config("# desk run\nepochs = 30\nlr=1e-3 # faster\n\nbase_channels=8\ninput_size=64\n");
  CHECK(c.epochs == 30);
  CHECK(c.lr == 1e-3);
  CHECK(c.model == GridNetConfig::desk());
  CHECK(parse_run_config(format_run_config(c)).model == c.model);
  CHECK(format_run_config(parse_run_config(format_run_config(c))) == format_run_config(c));

  CHECK_THROWS_WITH_AS(parse_run_config("epochs=1\nepoch=2\n"), doctest::Contains("line 2"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("epochs=1\nepochs=2\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("lr=fast\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config("just words\n"), std::invalid_argument);
  RunConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("manifest round trip and patient split") {
  ScratchDir dir("manifest");
  std::vector<ManifestEntry> entries;
  for (int p = 0; p < 40; ++p)
    for (const Phase ph : {Phase::ed, Phase::es})
      entries.push_back({"c" + std::to_string(entries.size()), "p" + std::to_string(p), ph,
                         dir / ("img" + std::to_string(entries.size()) + ".mvol"), {}});
  write_manifest(dir / "m.tsv", entries);
  const auto back = read_manifest(dir / "m.tsv");
  REQUIRE(back.size() == entries.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].case_id == entries[i].case_id);
    CHECK(back[i].phase == entries[i].phase);
    CHECK(back[i].image == entries[i].image);
    CHECK(back[i].labels.empty());
  }
  const auto [train, val] = split_by_patient(entries);
  CHECK(train.size() + val.size() == entries.size());
  CHECK(train.size() > val.size());
  for (const auto& v : val)
    for (const auto& t : train) REQUIRE(v.patient_id != t.patient_id);
  CHECK_THROWS_AS(read_manifest(dir / "absent.tsv"), MissingInputError);
}

TEST_CASE("gen-phantoms: files, determinism, empty cohort") {
  ScratchDir dir("gen");
  std::ostringstream out, err;
  CohortOptions opt;
  opt.count = 5;
  opt.size = 32;
  opt.seed = 3;
  REQUIRE(cmd_gen_phantoms(opt, dir / "a", out, err) == kExitOk);
  CHECK(count_ext(dir / "a", ".mvol") == 10);
  CHECK(read_manifest(dir / "a/manifest.tsv").size() == 5);
  REQUIRE(cmd_gen_phantoms(opt, dir / "b", out, err) == kExitOk);
  for (const auto& e : fs::directory_iterator(dir / "a"))
    CHECK(slurp(e.path()) == slurp(dir / "b" / e.path().filename()));

  opt.count = 0;
  REQUIRE(cmd_gen_phantoms(opt, dir / "none", out, err) == kExitOk);
  CHECK(read_manifest(dir / "none/manifest.tsv").empty());
}

TEST_CASE("build-prior: single volume, missing manifest, no pericardium") {
  ScratchDir dir("prior");
  std::ostringstream out, err;
  CohortOptions opt;
  opt.count = 1;
  opt.size = 48;
  REQUIRE(cmd_gen_phantoms(opt, dir / "d", out, err) == kExitOk);
  REQUIRE(cmd_build_prior(dir / "d/manifest.tsv", dir / "p.spri", out, err) == kExitOk);
  CHECK(out.str().find("bin 19:") != std::string::npos);
  const ShapePrior p = read_prior(dir / "p.spri");
  for (const double v : p.probs) REQUIRE((v == 0.0 || v == 1.0));

  std::ostringstream err2;
  CHECK(cmd_build_prior(dir / "nope.tsv", dir / "q.spri", out, err2) == kExitMissingInput);
  CHECK(err2.str().find("manifest not found") != std::string::npos);

  // A case without MYO or RV is named in the failure.
  LabelVolume lv = LabelVolume::filled(2, 8, 8, {}, kBack);
  lv.at(0, 3, 3) = kLv;
  write_volume(dir / "lv.mvol", lv);
  write_manifest(dir / "bad.tsv", {{"lonely", "p", Phase::ed, {}, dir / "lv.mvol"}});
  std::ostringstream err3;
  CHECK(cmd_build_prior(dir / "bad.tsv", dir / "r.spri", out, err3) == kExitFailure);
  CHECK(err3.str().find("lonely") != std::string::npos);
}

TEST_CASE("train: zero epochs, missing inputs, divergence") {
  MiniCohort cohort;
  std::ostringstream out, err;
  RunConfig zero = cohort.config("zero");
  zero.epochs = 0;
  REQUIRE(cmd_train(zero, out, err) == kExitOk);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(zero.out_dir)) files.push_back(e.path().filename().string());
  std::sort(files.begin(), files.end());
  CHECK(files == std::vector<std::string>{"loss.csv", "model.gnck"});
  const Checkpoint ck = load_checkpoint(zero.out_dir / "model.gnck");
  CHECK(ck.model.config() == zero.model);

  RunConfig missing = cohort.config("missing");
  missing.prior = cohort.dir / "absent.spri";
  CHECK(cmd_train(missing, out, err) == kExitMissingInput);
  missing = cohort.config("missing");
  missing.manifest = cohort.dir / "absent.tsv";
  CHECK(cmd_train(missing, out, err) == kExitMissingInput);

  RunConfig wild = cohort.config("wild");
  wild.epochs = 5;
  wild.lr = 1e150;
  std::ostringstream err2;
  CHECK(cmd_train(wild, out, err2) == kExitFailure);
  CHECK(err2.str().find("last finite epoch") != std::string::npos);
}

TEST_CASE("train: resume reproduces the uninterrupted run") {
  MiniCohort cohort;
  std::ostringstream out, err;
  RunConfig full = cohort.config("full");
  full.epochs = 3;
  full.checkpoint_every = 1;
  REQUIRE(cmd_train(full, out, err) == kExitOk);
  CHECK(fs::exists(full.out_dir / "epoch_0001.gnck"));
  CHECK(fs::exists(full.out_dir / "epoch_0003.gnck"));

  RunConfig part = cohort.config("part");
  part.epochs = 1;
  REQUIRE(cmd_train(part, out, err) == kExitOk);
  part.epochs = 3;
  part.resume = part.out_dir / "model.gnck";
  REQUIRE(cmd_train(part, out, err) == kExitOk);
  CHECK(slurp(part.out_dir / "loss.csv") == slurp(full.out_dir / "loss.csv"));
  CHECK(slurp(part.out_dir / "model.gnck") == slurp(full.out_dir / "model.gnck"));

  RunConfig other = cohort.config("other");
  other.model.base_channels = 4;
  other.resume = full.out_dir / "model.gnck";
  other.epochs = 4;
  std::ostringstream err2;
  CHECK(cmd_train(other, out, err2) == kExitFailure);
  CHECK(err2.str().find("checkpoint incompatible") != std::string::npos);
}

TEST_CASE("segment, evaluate and overlay") {
  MiniCohort cohort;
  std::ostringstream out, err;
  RunConfig cfg = cohort.config("seg");
  cfg.epochs = 1;
  REQUIRE(cmd_train(cfg, out, err) == kExitOk);
  const fs::path model = cfg.out_dir / "model.gnck";
  const auto entries = read_manifest(cohort.manifest);

  std::ostringstream seg_out;
  REQUIRE(cmd_segment(model, entries[0].image, cohort.prior, cohort.dir / "one.mvol", seg_out, err) == kExitOk);
  CHECK(seg_out.str().find(" s\n") != std::string::npos);
  const LabelVolume pred = read_label_volume(cohort.dir / "one.mvol");
  CHECK(same_dims(pred, read_label_volume(entries[0].labels)));
  for (const auto l : pred.values) CHECK(l <= 3);

  CHECK(cmd_segment(model, entries[0].image, cohort.dir / "absent.spri", cohort.dir / "x.mvol", out, err) ==
        kExitMissingInput);
  const GridNetConfig desk = GridNetConfig::desk();
  std::ostringstream err2;
  CHECK(cmd_segment(model, entries[0].image, cohort.prior, cohort.dir / "x.mvol", out, err2, &desk) == kExitFailure);
  CHECK(err2.str().find("checkpoint incompatible") != std::string::npos);

  REQUIRE(cmd_segment_manifest(model, cohort.manifest, cohort.prior, cohort.dir / "preds", out, err) == kExitOk);
  REQUIRE(cmd_evaluate(cohort.dir / "preds/predictions.tsv", cohort.manifest, cohort.dir / "r.csv", out, err) ==
          kExitOk);
  CHECK(slurp(cohort.dir / "r.csv").find("\nmean,") != std::string::npos);

  // Ground truth against itself. Evaluation keeps only the largest component
  // per class of the prediction, so the reference is cleaned the same way.
  std::vector<ManifestEntry> clean = entries;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    clean[i].labels = cohort.dir / (clean[i].case_id + "_clean.mvol");
    write_volume(clean[i].labels, largest_component(read_label_volume(entries[i].labels)));
  }
  write_manifest(cohort.dir / "clean.tsv", clean);
  REQUIRE(cmd_evaluate(cohort.dir / "clean.tsv", cohort.dir / "clean.tsv", cohort.dir / "self.csv", out, err) ==
          kExitOk);
  std::istringstream csv(slurp(cohort.dir / "self.csv"));
  std::string header, line;
  std::getline(csv, header);
  std::vector<std::string> cols;
  for (std::stringstream hs(header); std::getline(hs, line, ',');) cols.push_back(line);
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> f;
    for (std::stringstream ls(line); std::getline(ls, header, ',');) f.push_back(header);
    REQUIRE(f.size() == cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i].starts_with("dice_")) CHECK(std::stod(f[i]) == 1.0);
    ++rows;
  }
  CHECK(rows == entries.size() + 1);

  write_manifest(cohort.dir / "empty.tsv", {});
  REQUIRE(cmd_evaluate(cohort.dir / "empty.tsv", cohort.dir / "empty.tsv", cohort.dir / "e.csv", out, err) == kExitOk);
  const std::string e = slurp(cohort.dir / "e.csv");
  CHECK(std::count(e.begin(), e.end(), '\n') == 1);

  std::ostringstream err3;
  write_manifest(cohort.dir / "short.tsv", {entries[0]});
  CHECK(cmd_evaluate(cohort.dir / "short.tsv", cohort.manifest, cohort.dir / "s.csv", out, err3) == kExitFailure);
  CHECK(err3.str().find(entries[1].case_id) != std::string::npos);

  // Overlays.
  const Volume img = read_volume(entries[0].image);
  REQUIRE(cmd_overlay(entries[0].image, entries[0].labels, cohort.dir / "ov", out, err) == kExitOk);
  CHECK(count_ext(cohort.dir / "ov", ".ppm") == img.slices);
  CHECK(count_ext(cohort.dir / "ov", ".pgm") == img.slices);
  LabelVolume wrong = LabelVolume::filled(img.slices + 1, img.rows, img.cols, img.spacing, kBack);
  write_volume(cohort.dir / "wrong.mvol", wrong);
  CHECK(cmd_overlay(entries[0].image, cohort.dir / "wrong.mvol", cohort.dir / "ov2", out, err) == kExitFailure);
}

TEST_CASE("overlay pixels: all-Back equals grayscale, LV tint") {
  Volume v;
  static_cast<VoxelGrid<double>&>(v) = VoxelGrid<double>::filled(2, 3, 4, {});
  for (std::size_t i = 0; i < v.size(); ++i) v.values[i] = static_cast<double>(i);
  const auto gray = grayscale_slice(v, 1);
  CHECK(gray.back() == 255);
  const std::vector<std::uint8_t> back(12, kBack);
  const auto plain = tint_slice(gray, back);
  for (std::size_t i = 0; i < 12; ++i) CHECK(plain[i] == Rgb{gray[i], gray[i], gray[i]});

  std::vector<std::uint8_t> lv(12, kLv);
  const auto red = tint_slice(gray, lv);
  CHECK(class_color(kLv) == Rgb{255, 0, 0});
  CHECK(class_color(kMyo) == Rgb{0, 255, 0});
  CHECK(class_color(kRv) == Rgb{0, 0, 255});
  for (std::size_t i = 0; i < 12; ++i)
    CHECK(red[i] == Rgb{static_cast<std::uint8_t>((gray[i] + 255) / 2), static_cast<std::uint8_t>(gray[i] / 2),
                        static_cast<std::uint8_t>(gray[i] / 2)});
}

TEST_CASE("binary exit codes") {
  ScratchDir dir("bin");
  CHECK(run_binary("build-prior --manifest " + (dir / "absent.tsv").string() + " --out " +
                   (dir / "p.spri").string()) == kExitMissingInput);
  CHECK(run_binary("--config " + (dir / "absent.cfg").string() + " train") == kExitMissingInput);
  CHECK(run_binary("--seed 2 --out " + (dir / "g").string() + " gen-phantoms --count 2 --size 32") == kExitOk);
  CHECK(fs::exists(dir / "g/manifest.tsv"));
  CHECK(run_binary("segment --checkpoint " + (dir / "none.gnck").string() + " --prior x --input y") ==
        kExitMissingInput);
}

}  // TEST_SUITE
