#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <zlib.h>

#include "spinet/config.hpp"
#include "spinet/experiments.hpp"
#include "spinet/funcnet.hpp"
#include "spinet/heatmap.hpp"
#include "spinet/spin.hpp"
#include "test_util.hpp"

using namespace spinet;
using namespace spinet::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("tio_") += name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config: file parsing, overrides, validation") {
  TempDir dir("cfg");
  const fs::path cfg_path = dir.path / "exp.cfg";
  {
    std::ofstream out(cfg_path);
    out << "# comment line\n";
    out << "seed = 9\n";
    out << "alpha = 0.5   # trailing comment\n";
    out << "\n";
    out << "n_states = 7\n";
  }
  ExperimentConfig cfg;
  cfg.experiment = "tabular";
  apply_config_file(cfg, cfg_path.string());
  CHECK(cfg.seed == 9);
  CHECK(cfg.alpha == 0.5);
  CHECK(cfg.n_states == 7);

  CHECK_THROWS_AS(apply_config_line(cfg, "no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(apply_config_line(cfg, "alpha", "abc"), ConfigError);

  cfg.finalize_defaults();
  cfg.validate();

  // timescale violation is a ConfigError naming the rule
  ExperimentConfig bad = cfg;
  bad.beta = 0.0001;
  bad.rmsprop_decay = 0.999;
  try {
    bad.validate();
    CHECK(false);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("timescale") != std::string::npos);
  }
}

TEST_CASE("resolved config round trips through the parser") {
  ExperimentConfig cfg;
  cfg.experiment = "tabular";
  cfg.seed = 123;
  cfg.alpha = 0.07;
  cfg.finalize_defaults();
  const std::string text = resolved_config(cfg);

  TempDir dir("res");
  const fs::path p = dir.path / "config.resolved";
  {
    std::ofstream out(p);
    out << text;
  }
  ExperimentConfig back;
  apply_config_file(back, p.string());
  back.finalize_defaults();
  CHECK(back.experiment == cfg.experiment);
  CHECK(back.seed == cfg.seed);
  CHECK(back.alpha == cfg.alpha);
  CHECK(resolved_config(back) == text);
}

TEST_CASE("heatmap: zero field, extremes, sign flip swaps red and blue") {
  DenseMatrix zero(3, 4);
  auto pgm = heatmap_pgm_bytes(zero);
  // header "P5\n4 3\n255\n" then 12 bytes of mid-gray
  const std::string header(pgm.begin(), pgm.begin() + 9);
  CHECK(header == "P5\n4 3\n25");
  for (size_t i = pgm.size() - 12; i < pgm.size(); ++i) CHECK(pgm[i] == 128);
  auto ppm0 = heatmap_ppm_bytes(zero);
  for (size_t i = ppm0.size() - 36; i < ppm0.size(); ++i) CHECK(ppm0[i] == 255);

  DenseMatrix f(2, 2);
  f(0, 0) = -1.0;
  f(1, 1) = 1.0;
  auto bytes = heatmap_pgm_bytes(f);
  const size_t off = bytes.size() - 4;
  CHECK(bytes[off + 0] == 0);    // -1 -> black
  CHECK(bytes[off + 3] == 255);  // +1 -> white
  CHECK(bytes[off + 1] == 128);
  CHECK(bytes[off + 2] == 128);

  DenseMatrix g = f;
  for (size_t i = 0; i < g.size(); ++i) g.data()[i] = -g.data()[i];
  auto ppm_f = heatmap_ppm_bytes(f);
  auto ppm_g = heatmap_ppm_bytes(g);
  REQUIRE(ppm_f.size() == ppm_g.size());
  const size_t pix = ppm_f.size() - 12;  // 4 pixels * 3 channels
  for (size_t p = 0; p < 4; ++p) {
    CHECK(ppm_f[pix + 3 * p + 0] == ppm_g[pix + 3 * p + 2]);  // R <-> B
    CHECK(ppm_f[pix + 3 * p + 1] == ppm_g[pix + 3 * p + 1]);  // G equal
    CHECK(ppm_f[pix + 3 * p + 2] == ppm_g[pix + 3 * p + 0]);
  }

  DenseMatrix nan_field(1, 1);
  nan_field(0, 0) = std::nan("");
  CHECK_THROWS_AS(heatmap_pgm_bytes(nan_field), DomainViolation);

  TempDir dir("hm");
  export_heatmap(f, (dir.path / "img").string());
  CHECK(fs::exists(dir.path / "img.pgm"));
  CHECK(fs::exists(dir.path / "img.ppm"));
  auto again_a = slurp(dir.path / "img.pgm");
  export_heatmap(f, (dir.path / "img").string());
  CHECK(slurp(dir.path / "img.pgm") == again_a);
}

TEST_CASE("checkpoint: round trip identity, truncation, version mismatch") {
  funcnet::TabularNet net(6, 3);
  spin::TrainState state;
  state.params = net.init_params(5);
  state.averages = spin::AveragedState::initial(3, state.params.size(), 0.05);
  std::mt19937_64 eng(2);
  for (auto& v : state.averages.jac_sigma_bar) v = uniform_in(eng, -1.0, 1.0);
  state.averages.sigma_bar(0, 1) = 0.25;
  state.averages.sigma_bar(1, 0) = 0.25;
  state.opt.mean_square.assign(state.params.size(), 0.125);
  state.step = 321;
  state.seed = 99;

  TempDir dir("ckpt");
  const fs::path p1 = dir.path / "a.bin";
  const fs::path p2 = dir.path / "b.bin";
  spin::save_checkpoint(p1.string(), state);
  spin::TrainState loaded = spin::load_checkpoint(p1.string(), net);
  CHECK(loaded.step == 321);
  CHECK(loaded.seed == 99);
  CHECK(loaded.params.values == state.params.values);
  CHECK(loaded.averages.jac_sigma_bar == state.averages.jac_sigma_bar);
  CHECK(loaded.opt.mean_square == state.opt.mean_square);
  spin::save_checkpoint(p2.string(), loaded);
  CHECK(slurp(p1) == slurp(p2));

  // truncation is caught by the CRC
  std::string bytes = slurp(p1);
  {
    std::ofstream out(p1, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
  }
  CHECK_THROWS_AS(spin::load_checkpoint(p1.string(), net), CorruptChecksum);

  // version bump in the header (CRC recomputed so only the version differs)
  bytes[4] = 2;
  {
    const std::uint32_t crc = static_cast<std::uint32_t>(::crc32(
        0L, reinterpret_cast<const unsigned char*>(bytes.data()),
        static_cast<unsigned>(bytes.size() - 4)));
    std::memcpy(bytes.data() + bytes.size() - 4, &crc, 4);
    std::ofstream out(p2, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(spin::load_checkpoint(p2.string(), net),
                  FormatVersionMismatch);
}

TEST_CASE("tabular experiment: artifacts, determinism, resume continuation") {
  auto base_cfg = [] {
    ExperimentConfig cfg;
    cfg.experiment = "tabular";
    cfg.seed = 5;
    cfg.iters = 60;
    cfg.n_states = 8;
    cfg.k = 2;
    cfg.batch = 8;
    cfg.alpha = 0.01;
    cfg.beta = 0.1;
    cfg.rmsprop_decay = 0.9;
    return cfg;
  };

  TempDir da("runA");
  TempDir db("runB");
  {
    ExperimentConfig cfg = base_cfg();
    cfg.out_dir = da.path.string();
    REQUIRE(run_experiment(cfg) == 0);
  }
  {
    ExperimentConfig cfg = base_cfg();
    cfg.out_dir = db.path.string();
    REQUIRE(run_experiment(cfg) == 0);
  }
  for (const char* f : {"log.csv", "eigenvalues.csv", "comparison.csv",
                        "eigenvectors.csv", "config.resolved"}) {
    CHECK(fs::exists(da.path / f));
    CHECK(slurp(da.path / f) == slurp(db.path / f));
  }
  CHECK(!fs::exists(da.path / ".lock"));  // released

  // rerunning from config.resolved reproduces the log byte for byte
  TempDir dc("runC");
  {
    ExperimentConfig cfg;
    cfg.experiment = "tabular";
    apply_config_file(cfg, (da.path / "config.resolved").string());
    cfg.out_dir = dc.path.string();
    REQUIRE(run_experiment(cfg) == 0);
  }
  CHECK(slurp(dc.path / "log.csv") == slurp(da.path / "log.csv"));

  // interrupted at 30 and resumed to 60 equals the uninterrupted log
  TempDir dd("runD");
  {
    ExperimentConfig cfg = base_cfg();
    cfg.iters = 30;
    cfg.out_dir = dd.path.string();
    REQUIRE(run_experiment(cfg) == 0);
  }
  {
    ExperimentConfig cfg = base_cfg();
    cfg.out_dir = dd.path.string();
    cfg.resume = (dd.path / "checkpoint.bin").string();
    REQUIRE(run_experiment(cfg) == 0);
  }
  CHECK(slurp(dd.path / "log.csv") == slurp(da.path / "log.csv"));
}

TEST_CASE("run_experiment maps a timescale violation to exit code 2") {
  ExperimentConfig cfg;
  cfg.experiment = "tabular";
  cfg.iters = 5;
  cfg.beta = 0.0001;
  cfg.rmsprop_decay = 0.999;
  cfg.out_dir = "tio_exit2";
  CHECK(run_experiment(cfg) == 2);
  fs::remove_all("tio_exit2");
}

TEST_CASE("the output directory lock rejects a second concurrent run") {
  TempDir dir("lock");
  {
    std::ofstream lock(dir.path / ".lock");
    lock << "held\n";
  }
  ExperimentConfig cfg;
  cfg.experiment = "tabular";
  cfg.iters = 5;
  cfg.out_dir = dir.path.string();
  CHECK(run_experiment(cfg) == 1);
}
