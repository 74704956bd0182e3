#include "spinet/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "spinet/baseline.hpp"
#include "spinet/datasets.hpp"
#include "spinet/heatmap.hpp"
#include "spinet/kernels.hpp"
#include "spinet/rng.hpp"
#include "spinet/spin.hpp"

namespace fs = std::filesystem;

namespace spinet::cli {

namespace {

using funcnet::Mlp;
using funcnet::MlpSpec;
using funcnet::ParamVector;
using funcnet::TabularNet;
using operators::KernelOp;
using operators::PairBatch;
using operators::PiEstimator;
using spin::TrainConfig;
using spin::TrainState;

// One experiment process at a time per output directory.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    if (fs::exists(path_))
      throw Error("output directory " + dir.string() +
                  " is locked by another run (remove " + path_.string() +
                  " if that run is gone)");
    std::ofstream lock(path_);
    if (!lock) throw IoError("cannot create lock file " + path_.string());
    lock << "locked\n";
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

std::string csv_line(const spin::LogRecord& rec) {
  std::string line = std::to_string(rec.step);
  for (double l : rec.lambdas) line += "," + format_double(l);
  line += "," + format_double(rec.grad_norm);
  line += "," + format_double(rec.sigma_cond);
  line += "\n";
  return line;
}

void write_eigenvalues(const fs::path& path, const std::vector<double>& values) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << "index,eigenvalue\n";
  for (size_t i = 0; i < values.size(); ++i)
    out << i << "," << format_double(values[i]) << "\n";
}

struct RunContext {
  fs::path dir;
  std::ofstream log;
  std::uint64_t log_every = 1;
  std::uint64_t checkpoint_every = 0;

  void open_log(int k, bool resume) {
    const fs::path path = dir / "log.csv";
    if (resume && fs::exists(path)) {
      log.open(path, std::ios::app);
    } else {
      log.open(path, std::ios::trunc);
      log << "step";
      for (int i = 0; i < k; ++i) log << ",lambda_" << i;
      log << ",grad_norm,sigma_cond\n";
    }
    if (!log) throw IoError("cannot open " + path.string());
  }
};

TrainState run_training(RunContext& ctx, const ExperimentConfig& cfg,
                        const KernelOp& kernel, const funcnet::FeatureNet& net,
                        const spin::BatchSource& source) {
  std::optional<TrainState> initial;
  if (!cfg.resume.empty())
    initial = spin::load_checkpoint(cfg.resume, net);
  ctx.open_log(net.n_outputs(), initial.has_value());

  TrainConfig tc;
  tc.iterations = cfg.iters;
  tc.seed = cfg.seed;
  tc.beta = cfg.beta;
  tc.learning_rate = cfg.alpha;
  tc.rmsprop_decay = cfg.rmsprop_decay;
  tc.rmsprop_epsilon = cfg.rmsprop_epsilon;
  tc.robbins_monro = cfg.robbins_monro;
  tc.log_sink = [&](const spin::LogRecord& rec) {
    if (rec.step % ctx.log_every == 0) ctx.log << csv_line(rec);
  };
  if (ctx.checkpoint_every > 0) {
    tc.step_hook = [&](const TrainState& state) {
      if (state.step % ctx.checkpoint_every == 0)
        spin::save_checkpoint((ctx.dir / "checkpoint.bin").string(), state);
    };
  }

  TrainState final_state = spin::train_loop(tc, kernel, net, source, initial);
  spin::save_checkpoint((ctx.dir / "checkpoint.bin").string(), final_state);
  ctx.log.flush();
  return final_state;
}

spin::ExtractionMode extraction_mode(const ExperimentConfig& cfg) {
  return cfg.extraction == "cholesky" ? spin::ExtractionMode::CholeskyOnly
                                      : spin::ExtractionMode::FullDiagonalize;
}

// --- tabular ---------------------------------------------------------------

DenseMatrix random_symmetric(int n, std::uint64_t seed) {
  auto eng = make_engine(seed, 0x4D4154 /* MAT */);
  DenseMatrix m(n, n);
  // Box-Muller, deterministic across platforms
  auto gauss = [&eng]() {
    double u1 = uniform01(eng);
    while (u1 <= 0.0) u1 = uniform01(eng);
    const double u2 = uniform01(eng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double v = gauss();
      m(i, j) = v;
      m(j, i) = v;
    }
  return m;
}

void run_tabular(RunContext& ctx, const ExperimentConfig& cfg) {
  const int m = cfg.n_states;
  DenseMatrix matrix = random_symmetric(m, cfg.seed);
  KernelOp kernel{operators::TabularKernel{matrix, cfg.negate}};
  TabularNet net(m, cfg.k);
  datasets::TabularSource source(m, cfg.batch, cfg.exact_population);

  TrainState state = run_training(ctx, cfg, kernel, net, source);

  // exact statistics over the full state space
  DenseMatrix all_states(m, 1);
  for (int s = 0; s < m; ++s) all_states(s, 0) = s;
  FeatureBatch u = net.forward(state.params, all_states);
  DenseMatrix sigma = kernels::matmul_tn(u, u, 1.0 / m);
  const double sign = cfg.negate ? -1.0 : 1.0;
  DenseMatrix mu = kernels::matmul(matrix, u);
  DenseMatrix pi = symmetrize(kernels::matmul_tn(u, mu, sign / m));

  auto masked = spin::masked_gradient_matrices(pi, sigma);
  auto ordered = spin::ordered_eigenfunctions(sigma, masked.report.lambda_full,
                                              extraction_mode(cfg));
  write_eigenvalues(ctx.dir / "eigenvalues.csv", ordered.eigenvalues);

  // dense oracle on the signed matrix, ascending
  DenseMatrix signed_matrix = matrix;
  if (cfg.negate)
    for (size_t i = 0; i < signed_matrix.size(); ++i)
      signed_matrix.data()[i] = -signed_matrix.data()[i];
  auto oracle = linalg::sym_eig(signed_matrix);

  std::ofstream cmp(ctx.dir / "comparison.csv");
  if (!cmp) throw IoError("cannot open comparison.csv");
  cmp << "learned,oracle,abs_delta\n";
  for (int i = 0; i < cfg.k; ++i) {
    const double learned = ordered.eigenvalues[i];
    const double exact = oracle.values[m - 1 - i];
    cmp << format_double(learned) << "," << format_double(exact) << ","
        << format_double(std::fabs(learned - exact)) << "\n";
  }

  DenseMatrix v = ordered.apply(u);
  std::ofstream vecs(ctx.dir / "eigenvectors.csv");
  if (!vecs) throw IoError("cannot open eigenvectors.csv");
  vecs << "state";
  for (int k = 0; k < cfg.k; ++k) vecs << ",learned_" << k;
  for (int k = 0; k < cfg.k; ++k) vecs << ",oracle_" << k;
  vecs << "\n";
  for (int s = 0; s < m; ++s) {
    vecs << s;
    for (int k = 0; k < cfg.k; ++k) vecs << "," << format_double(v(s, k));
    for (int k = 0; k < cfg.k; ++k)
      vecs << "," << format_double(oracle.vectors(s, m - 1 - k));
    vecs << "\n";
  }
}

// --- hydrogen ---------------------------------------------------------------

operators::Potential make_potential(const ExperimentConfig& cfg) {
  if (!cfg.potential_file.empty())
    return operators::Potential::from_grid(
        operators::load_grid_potential(cfg.potential_file));
  return operators::Potential::coulomb(cfg.r_min);
}

void run_hydrogen(RunContext& ctx, const ExperimentConfig& cfg) {
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden = cfg.hidden_widths();
  spec.n_outputs = cfg.k;
  spec.block_sparse = cfg.block_sparse;
  spec.envelope_halfwidth = cfg.halfwidth;
  Mlp net(spec);

  KernelOp kernel{operators::LocalHamiltonian{cfg.fd_eps, make_potential(cfg)}};
  datasets::BoxSource source(cfg.batch, 2, cfg.halfwidth, cfg.fd_eps);

  TrainState state = run_training(ctx, cfg, kernel, net, source);

  // final estimates on a large held-out batch
  auto eng = make_engine(cfg.seed, 0x4556 /* EV */);
  DenseMatrix eval_points =
      datasets::sample_uniform_box(4096, 2, cfg.halfwidth, cfg.fd_eps, eng);
  PairBatch eval_batch{eval_points, {}};
  PiEstimator est(kernel, net, state.params, eval_batch);
  DenseMatrix sigma = spin::sigma_hat(est.features_first(), est.features_first());
  auto masked = spin::masked_gradient_matrices(est.pi(), sigma);
  auto ordered = spin::ordered_eigenfunctions(sigma, masked.report.lambda_full,
                                              extraction_mode(cfg));
  write_eigenvalues(ctx.dir / "eigenvalues.csv", ordered.eigenvalues);

  // heatmaps of each eigenfunction on a regular grid
  const int n = cfg.heatmap_n;
  DenseMatrix grid_points(n * n, 2);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      grid_points(r * n + c, 0) =
          -cfg.halfwidth + 2.0 * cfg.halfwidth * c / (n - 1);
      grid_points(r * n + c, 1) =
          -cfg.halfwidth + 2.0 * cfg.halfwidth * r / (n - 1);
    }
  DenseMatrix v = ordered.evaluate(net, state.params, grid_points);
  for (int k = 0; k < cfg.k; ++k) {
    DenseMatrix field(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) field(r, c) = v(r * n + c, k);
    export_heatmap(field, (ctx.dir / ("eigenfunction_" + std::to_string(k))).string());
  }
}

// --- sfa-video ---------------------------------------------------------------

std::vector<datasets::VideoClip> make_clip_pool(const ExperimentConfig& cfg,
                                                std::uint64_t stream) {
  std::vector<datasets::VideoClip> pool;
  pool.reserve(cfg.n_clips);
  for (int i = 0; i < cfg.n_clips; ++i)
    pool.push_back(datasets::bouncing_balls_generate(
        cfg.clip_frames, cfg.frame, cfg.frame, cfg.n_balls, cfg.ball_radius,
        cfg.ball_speed, derive_seed(cfg.seed, stream, i)));
  return pool;
}

void run_sfa(RunContext& ctx, const ExperimentConfig& cfg) {
  const int fdim = 2 * cfg.frame * cfg.frame;
  MlpSpec spec;
  spec.input_dim = fdim;
  spec.hidden = cfg.hidden_widths();
  spec.n_outputs = cfg.k;
  spec.block_sparse = cfg.block_sparse;
  auto mlp = std::make_shared<Mlp>(spec);
  spin::ConstantFirstNet net(mlp);

  KernelOp kernel{operators::SlownessKernel{}};
  datasets::SfaSource source(make_clip_pool(cfg, 0x434C4950 /* CLIP */),
                             cfg.clips_per_batch);

  TrainState state = run_training(ctx, cfg, kernel, net, source);

  // held-out clips for the final estimates and the position heatmaps
  ExperimentConfig eval_cfg = cfg;
  eval_cfg.n_clips = std::max(8, cfg.n_clips / 2);
  auto eval_pool = make_clip_pool(eval_cfg, 0x4556434C /* EVCL */);

  std::vector<PairBatch> eval_batches;
  for (const auto& clip : eval_pool)
    eval_batches.push_back(datasets::consecutive_pairs(clip));

  // pooled Sigma and Pi over all held-out pairs
  const int per_clip = eval_batches.front().first.rows();
  const int n_pairs = static_cast<int>(eval_batches.size()) * per_clip;
  DenseMatrix all_x(n_pairs, fdim), all_xp(n_pairs, fdim);
  for (size_t c = 0; c < eval_batches.size(); ++c)
    for (int t = 0; t < per_clip; ++t) {
      std::copy(eval_batches[c].first.row(t),
                eval_batches[c].first.row(t) + fdim,
                all_x.row(static_cast<int>(c) * per_clip + t));
      std::copy(eval_batches[c].second.row(t),
                eval_batches[c].second.row(t) + fdim,
                all_xp.row(static_cast<int>(c) * per_clip + t));
    }
  FeatureBatch ux = net.forward(state.params, all_x);
  FeatureBatch uxp = net.forward(state.params, all_xp);
  DenseMatrix sigma = spin::sigma_hat(ux, uxp);
  DenseMatrix pi = operators::slowness_pi_hat(ux, uxp);
  auto masked = spin::masked_gradient_matrices(pi, sigma);
  auto ordered = spin::ordered_eigenfunctions(sigma, masked.report.lambda_full,
                                              extraction_mode(cfg));
  write_eigenvalues(ctx.dir / "eigenvalues.csv", ordered.eigenvalues);

  // activation heatmaps against ball position (ball 0, first frame of x)
  DenseMatrix v = ordered.apply(ux);
  const int g = cfg.frame;
  const int n_outputs = net.n_outputs();
  std::vector<DenseMatrix> sums(n_outputs, DenseMatrix(g, g));
  DenseMatrix counts(g, g);
  for (size_t c = 0; c < eval_batches.size(); ++c) {
    for (int t = 0; t < per_clip; ++t) {
      const auto& st = eval_pool[c].state(t, 0);
      int bx = static_cast<int>(st.x * g);
      int by = static_cast<int>(st.y * g);
      bx = std::min(std::max(bx, 0), g - 1);
      by = std::min(std::max(by, 0), g - 1);
      counts(by, bx) += 1.0;
      const int row = static_cast<int>(c) * per_clip + t;
      for (int k = 0; k < n_outputs; ++k) sums[k](by, bx) += v(row, k);
    }
  }
  for (int k = 0; k < n_outputs; ++k) {
    DenseMatrix field(g, g);
    for (int r = 0; r < g; ++r)
      for (int col = 0; col < g; ++col)
        field(r, col) =
            counts(r, col) > 0.0 ? sums[k](r, col) / counts(r, col) : 0.0;
    export_heatmap(field, (ctx.dir / ("eigenfunction_" + std::to_string(k))).string());
  }
}

// --- baseline-grid -----------------------------------------------------------

void run_baseline_grid(RunContext& ctx, const ExperimentConfig& cfg) {
  auto matrix = baseline::grid_hamiltonian_build(cfg.grid_n, cfg.halfwidth,
                                                 make_potential(cfg));
  auto eig = baseline::smallest_eigs(matrix, cfg.k, cfg.seed);
  write_eigenvalues(ctx.dir / "eigenvalues.csv", eig.values);

  const int n = cfg.grid_n;
  for (int k = 0; k < cfg.k; ++k) {
    DenseMatrix field(n, n);
    for (int ix = 0; ix < n; ++ix)
      for (int iy = 0; iy < n; ++iy) field(iy, ix) = eig.vectors(ix * n + iy, k);
    export_heatmap(field, (ctx.dir / ("eigenvector_" + std::to_string(k))).string());
  }
}

}  // namespace

int run_experiment(ExperimentConfig cfg) {
  try {
    cfg.finalize_defaults();
    cfg.validate();
    if (cfg.out_dir.empty()) cfg.out_dir = "runs/" + cfg.experiment;

    fs::create_directories(cfg.out_dir);
    DirLock lock(cfg.out_dir);

    RunContext ctx;
    ctx.dir = cfg.out_dir;
    ctx.log_every = cfg.log_every;
    ctx.checkpoint_every = cfg.checkpoint_every;

    {
      std::ofstream resolved(ctx.dir / "config.resolved");
      if (!resolved) throw IoError("cannot write config.resolved");
      resolved << resolved_config(cfg);
    }

    if (cfg.experiment == "tabular") run_tabular(ctx, cfg);
    else if (cfg.experiment == "hydrogen") run_hydrogen(ctx, cfg);
    else if (cfg.experiment == "sfa-video") run_sfa(ctx, cfg);
    else if (cfg.experiment == "baseline-grid") run_baseline_grid(ctx, cfg);
    else throw ConfigError("unknown experiment '" + cfg.experiment + "'");
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NotPositiveDefinite& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const NonConvergence& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace spinet::cli
