#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "spinet/datasets.hpp"
#include "spinet/kernels.hpp"
#include "spinet/spin.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace spinet;
using namespace spinet::spin;
using funcnet::ParamVector;
using funcnet::TabularNet;
using operators::KernelOp;
using operators::PairBatch;
using operators::PiEstimator;
using operators::TabularKernel;
using testutil::max_abs_diff;
using testutil::random_dense;
using testutil::random_spd;
using testutil::random_symmetric;

using oracles::fd_masked_matrices;
using oracles::lambda_kk;

namespace {

double masked_fd_rel_error(int k_dim, std::mt19937_64& eng) {
  DenseMatrix sigma = random_spd(k_dim, eng);
  DenseMatrix pi = random_symmetric(k_dim, eng);
  auto mg = masked_gradient_matrices(pi, sigma);
  DenseMatrix d_pi_fd, d_sigma_fd;
  fd_masked_matrices(pi, sigma, d_pi_fd, d_sigma_fd);
  double scale = std::max({1.0, mg.d_pi.max_abs(), mg.d_sigma.max_abs()});
  return std::max(max_abs_diff(mg.d_pi, d_pi_fd),
                  max_abs_diff(mg.d_sigma, d_sigma_fd)) /
         scale;
}

DenseMatrix all_states(int m) {
  DenseMatrix s(m, 1);
  for (int i = 0; i < m; ++i) s(i, 0) = i;
  return s;
}

// exact Sigma and Pi over the full state space for a tabular kernel
void exact_tabular_stats(const TabularNet& net, const ParamVector& params,
                         const DenseMatrix& matrix, bool negate,
                         DenseMatrix& sigma, DenseMatrix& pi) {
  const int m = matrix.rows();
  FeatureBatch u = net.forward(params, all_states(m));
  sigma = kernels::matmul_tn(u, u, 1.0 / m);
  DenseMatrix mu = kernels::matmul(matrix, u);
  pi = symmetrize(kernels::matmul_tn(u, mu, (negate ? -1.0 : 1.0) / m));
}

}  // namespace

TEST_CASE("sigma_hat: constant batch, merged halves, half identity") {
  FeatureBatch c(3, 2);
  for (int r = 0; r < 3; ++r) {
    c(r, 0) = 2.0;
    c(r, 1) = -1.0;
  }
  DenseMatrix s = sigma_hat(c, c);
  CHECK(s(0, 0) == doctest::Approx(4.0));
  CHECK(s(0, 1) == doctest::Approx(-2.0));
  CHECK(s(1, 1) == doctest::Approx(1.0));

  std::mt19937_64 eng(1);
  FeatureBatch u = random_dense(5, 3, eng);
  DenseMatrix direct = kernels::matmul_tn(u, u, 0.2);
  CHECK(max_abs_diff(sigma_hat(u, u), direct) == 0.0);

  FeatureBatch e(2, 2);
  e(0, 0) = 1.0;
  e(1, 1) = 1.0;
  DenseMatrix half = sigma_hat(e, e);
  CHECK(half(0, 0) == doctest::Approx(0.5));
  CHECK(half(1, 1) == doctest::Approx(0.5));
  CHECK(half(0, 1) == 0.0);
}

TEST_CASE("masked gradients: identity Sigma and scalar Rayleigh case") {
  std::mt19937_64 eng(2);
  DenseMatrix pi = random_symmetric(4, eng);
  auto mg = masked_gradient_matrices(pi, DenseMatrix::identity(4));
  CHECK(max_abs_diff(mg.d_pi, DenseMatrix::identity(4)) < 1e-12);
  DenseMatrix expected = linalg::triu_inc_diag(pi);
  for (size_t i = 0; i < expected.size(); ++i)
    expected.data()[i] = -expected.data()[i];
  CHECK(max_abs_diff(mg.d_sigma, expected) < 1e-12);

  DenseMatrix s1(1, 1), p1(1, 1);
  s1(0, 0) = 0.7;
  p1(0, 0) = -0.3;
  auto sc = masked_gradient_matrices(p1, s1);
  CHECK(sc.d_pi(0, 0) == doctest::Approx(1.0 / 0.7));
  CHECK(sc.d_sigma(0, 0) == doctest::Approx(0.3 / (0.7 * 0.7)));
  CHECK(sc.report.lambdas[0] == doctest::Approx(-0.3 / 0.7));
}

TEST_CASE("masked gradients match Delta^k-masked finite differences (K=4)") {
  std::mt19937_64 eng(3);
  for (int trial = 0; trial < 3; ++trial)
    CHECK(masked_fd_rel_error(4, eng) < 1e-6);
}

TEST_CASE("block independence: leading Lambda block ignores trailing data") {
  std::mt19937_64 eng(4);
  const int k = 5;
  for (int trial = 0; trial < 20; ++trial) {
    DenseMatrix sigma = random_spd(k, eng);
    DenseMatrix pi = random_symmetric(k, eng);
    const int n = 1 + static_cast<int>(uniform_index(eng, k - 1));

    auto base = masked_gradient_matrices(pi, sigma);

    DenseMatrix sigma2 = sigma;
    DenseMatrix pi2 = pi;
    for (int i = 0; i < k; ++i)
      for (int j = n; j < k; ++j) {
        const double ds = uniform_in(eng, -0.05, 0.05);
        sigma2(i, j) += ds;
        if (i != j) sigma2(j, i) += ds;
        const double dp = uniform_in(eng, -0.5, 0.5);
        pi2(i, j) += dp;
        if (i != j) pi2(j, i) += dp;
      }
    // keep sigma2 positive definite
    for (int j = n; j < k; ++j) sigma2(j, j) += 1.0;

    auto pert = masked_gradient_matrices(pi2, sigma2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        CHECK(std::fabs(base.report.lambda_full(i, j) -
                        pert.report.lambda_full(i, j)) <= 1e-12);
  }
}

TEST_CASE("jacobian_of_sigma: constant features, symmetry, FD oracle") {
  // parameter-independent features: zero tensor
  struct FixedNet : funcnet::FeatureNet {
    int input_dim() const override { return 1; }
    int n_outputs() const override { return 2; }
    std::shared_ptr<const funcnet::ParamLayout> layout() const override {
      auto l = std::make_shared<funcnet::ParamLayout>();
      l->add("p", 3, 1);
      return l;
    }
    ParamVector init_params(std::uint64_t) const override {
      ParamVector p;
      p.layout = layout();
      p.values = {1.0, 2.0, 3.0};
      return p;
    }
    FeatureBatch forward(const ParamVector&, const DenseMatrix& x) const override {
      FeatureBatch u(x.rows(), 2);
      for (int r = 0; r < x.rows(); ++r) {
        u(r, 0) = 1.5;
        u(r, 1) = -0.5;
      }
      return u;
    }
    ParamVector backward(const ParamVector& p, const DenseMatrix&,
                         const DenseMatrix&) const override {
      ParamVector g;
      g.layout = p.layout;
      g.values.assign(3, 0.0);
      return g;
    }
  } fixed;
  ParamVector fp = fixed.init_params(0);
  DenseMatrix fx(4, 1);
  FeatureBatch fu = fixed.forward(fp, fx);
  auto fj = jacobian_of_sigma(fixed, fp, {{&fx, &fu, nullptr}});
  for (double v : fj) CHECK(v == 0.0);

  // tabular features: matches finite differences, symmetric slices exact
  TabularNet net(4, 3);
  ParamVector p = net.init_params(9);
  DenseMatrix idx(6, 1);
  std::mt19937_64 eng(5);
  for (int r = 0; r < 6; ++r)
    idx(r, 0) = static_cast<double>(uniform_index(eng, 4));
  FeatureBatch u = net.forward(p, idx);
  auto jac = jacobian_of_sigma(net, p, {{&idx, &u, nullptr}});

  const size_t np = p.size();
  const int k = 3;
  const double h = 1e-6;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      for (size_t q = 0; q < np; ++q)
        CHECK(jac[(static_cast<size_t>(i) * k + j) * np + q] ==
              jac[(static_cast<size_t>(j) * k + i) * np + q]);
      for (size_t q = 0; q < np; ++q) {
        ParamVector pp = p, pm = p;
        pp.values[q] += h;
        pm.values[q] -= h;
        FeatureBatch up = net.forward(pp, idx);
        FeatureBatch um = net.forward(pm, idx);
        const double sp = sigma_hat(up, up)(i, j);
        const double sm = sigma_hat(um, um)(i, j);
        const double fd = (sp - sm) / (2 * h);
        CHECK(jac[(static_cast<size_t>(i) * k + j) * np + q] ==
              doctest::Approx(fd).epsilon(1e-5));
      }
    }
}

TEST_CASE("assemble_param_gradient: linearity and the K=1 FD oracle") {
  DenseMatrix m(3, 3);
  m(0, 1) = 1.0;
  m(1, 0) = 1.0;
  m(1, 2) = -0.5;
  m(2, 1) = -0.5;
  m(0, 0) = 0.3;
  KernelOp kernel{TabularKernel{m, false}};
  TabularNet net(3, 1);
  ParamVector p = net.init_params(6);

  DenseMatrix first(5, 1), second(5, 1);
  std::mt19937_64 eng(7);
  for (int r = 0; r < 5; ++r) {
    first(r, 0) = static_cast<double>(uniform_index(eng, 3));
    second(r, 0) = static_cast<double>(uniform_index(eng, 3));
  }
  PairBatch batch{first, second};
  PiEstimator est(kernel, net, p, batch);

  DenseMatrix sigma_bar = random_spd(1, eng);
  auto mg = masked_gradient_matrices(est.pi(), sigma_bar);

  // with a zero Jacobian average the result is exactly the VJP term
  std::vector<double> zero_jac(p.size(), 0.0);
  ParamVector only_vjp =
      assemble_param_gradient(est, mg.d_pi, mg.d_sigma, zero_jac);
  ParamVector direct = est.vjp(mg.d_pi);
  for (size_t i = 0; i < p.size(); ++i)
    CHECK(only_vjp.values[i] == direct.values[i]);

  // FD of Lambda_11(Pi(theta), sigma_bar frozen)
  const double h = 1e-6;
  for (size_t q = 0; q < p.size(); ++q) {
    ParamVector pp = p, pm = p;
    pp.values[q] += h;
    pm.values[q] -= h;
    PiEstimator ep(kernel, net, pp, batch);
    PiEstimator em(kernel, net, pm, batch);
    const double fd =
        (lambda_kk(ep.pi(), sigma_bar, 0) - lambda_kk(em.pi(), sigma_bar, 0)) /
        (2 * h);
    CHECK(only_vjp.values[q] == doctest::Approx(fd).epsilon(1e-5));
  }

  // the Jacobian path adds the exact linear contraction
  std::vector<double> jac(p.size());
  for (size_t i = 0; i < jac.size(); ++i) jac[i] = uniform_in(eng, -1.0, 1.0);
  ParamVector with_jac = assemble_param_gradient(est, mg.d_pi, mg.d_sigma, jac);
  for (size_t i = 0; i < p.size(); ++i)
    CHECK(with_jac.values[i] ==
          doctest::Approx(direct.values[i] + mg.d_sigma(0, 0) * jac[i]));

  // zero masks give a zero gradient
  DenseMatrix zero1(1, 1);
  ParamVector zg = assemble_param_gradient(est, zero1, zero1, zero_jac);
  for (double v : zg.values) CHECK(v == 0.0);
}

TEST_CASE("moving_average_update: replacement, near-identity, arithmetic") {
  AveragedState st = AveragedState::initial(2, 3, 0.5);
  DenseMatrix shat(2, 2);
  shat(0, 0) = 2.0;
  shat(1, 1) = 2.0;
  std::vector<double> jhat(st.jac_sigma_bar.size(), 1.0);

  AveragedState replaced = st;
  moving_average_update(replaced, shat, jhat, 1.0);
  CHECK(max_abs_diff(replaced.sigma_bar, shat) == 0.0);
  for (double v : replaced.jac_sigma_bar) CHECK(v == 1.0);

  AveragedState nearly = st;
  moving_average_update(nearly, shat, jhat, 1e-12);
  CHECK(max_abs_diff(nearly.sigma_bar, st.sigma_bar) < 1e-11);

  AveragedState mix = st;
  moving_average_update(mix, shat, jhat, 0.01);
  CHECK(mix.sigma_bar(0, 0) == doctest::Approx(1.01));
  CHECK(mix.sigma_bar(0, 1) == doctest::Approx(0.0));

  CHECK_THROWS_AS(moving_average_update(mix, shat, jhat, 0.0),
                  DimensionMismatch);
}

TEST_CASE("rmsprop_step: formulas and the long-run step magnitude") {
  auto layout = std::make_shared<funcnet::ParamLayout>();
  layout->add("p", 2, 1);
  ParamVector params;
  params.layout = layout;
  params.values = {1.0, -2.0};
  RmsState opt;
  opt.mean_square = {0.04, 0.09};
  opt.decay = 0.9;
  opt.learning_rate = 0.1;

  ParamVector zero = funcnet::zeros_like(params);
  ParamVector before = params;
  rmsprop_step(opt, params, zero);
  CHECK(params.values[0] == before.values[0]);
  CHECK(params.values[1] == before.values[1]);
  CHECK(opt.mean_square[0] == doctest::Approx(0.036));

  RmsState fresh;
  fresh.mean_square = {0.0};
  fresh.decay = 0.9;
  fresh.learning_rate = 0.1;
  fresh.epsilon = 1e-10;
  ParamVector p1;
  p1.layout = layout;  // sizes only matter
  p1.values = {0.0};
  ParamVector g1 = p1;
  g1.values = {1.0};
  rmsprop_step(fresh, p1, g1);
  CHECK(fresh.mean_square[0] == doctest::Approx(0.1));
  CHECK(p1.values[0] == doctest::Approx(-0.1 / (std::sqrt(0.1) + 1e-10)));

  // constant gradient: steps approach alpha * sign(g)
  for (int t = 0; t < 500; ++t) {
    const double prev = p1.values[0];
    rmsprop_step(fresh, p1, g1);
    if (t > 400)
      CHECK(std::fabs(prev - p1.values[0]) == doctest::Approx(0.1).epsilon(0.01));
  }
}

TEST_CASE("train_loop: 2-state kernel converges to lambda = -1, u = (1,-1)") {
  DenseMatrix m(2, 2);
  m(0, 1) = 1.0;
  m(1, 0) = 1.0;
  KernelOp kernel{TabularKernel{m, false}};
  TabularNet net(2, 1);
  datasets::TabularSource source(2, 16);

  TrainConfig cfg;
  cfg.iterations = 4000;
  cfg.seed = 42;
  cfg.beta = 0.05;
  cfg.learning_rate = 0.02;
  cfg.rmsprop_decay = 0.99;
  TrainState state = train_loop(cfg, kernel, net, source);

  DenseMatrix sigma, pi;
  exact_tabular_stats(net, state.params, m, false, sigma, pi);
  auto mg = masked_gradient_matrices(pi, sigma);
  CHECK(mg.report.lambdas[0] == doctest::Approx(-1.0).epsilon(1e-2));

  FeatureBatch u = net.forward(state.params, all_states(2));
  const double norm = std::sqrt(u(0, 0) * u(0, 0) + u(1, 0) * u(1, 0));
  CHECK(std::fabs(u(0, 0) / norm) == doctest::Approx(std::sqrt(0.5)).epsilon(0.05));
  CHECK(u(0, 0) * u(1, 0) < 0.0);  // opposite signs
}

TEST_CASE("train_loop: beta=1 exact batches reach the dense fixed point") {
  std::mt19937_64 eng(11);
  DenseMatrix m = random_symmetric(6, eng);
  KernelOp kernel{TabularKernel{m, false}};
  TabularNet net(6, 2);
  datasets::TabularSource source(6, 0, /*exact_population=*/true);

  TrainConfig cfg;
  cfg.iterations = 60000;
  cfg.seed = 3;
  cfg.beta = 1.0;
  cfg.learning_rate = 0.05;
  cfg.rmsprop_decay = 0.9;
  cfg.robbins_monro = true;
  TrainState state = train_loop(cfg, kernel, net, source);

  DenseMatrix sigma, pi;
  exact_tabular_stats(net, state.params, m, false, sigma, pi);
  auto mg = masked_gradient_matrices(pi, sigma);
  auto oracle = linalg::sym_eig(m);
  CHECK(mg.report.lambdas[0] ==
        doctest::Approx(oracle.values[5]).epsilon(1e-6));
  CHECK(mg.report.lambdas[1] ==
        doctest::Approx(oracle.values[4]).epsilon(1e-6));

  // E[v v^T] = I over the full state space
  auto ordered = ordered_eigenfunctions(sigma, mg.report.lambda_full,
                                        ExtractionMode::CholeskyOnly);
  FeatureBatch u = net.forward(state.params, all_states(6));
  DenseMatrix v = ordered.apply(u);
  DenseMatrix vvt = kernels::matmul_tn(v, v, 1.0 / 6.0);
  CHECK(max_abs_diff(vvt, DenseMatrix::identity(2)) < 1e-8);
}

TEST_CASE("train_loop: determinism of the log stream") {
  DenseMatrix m(3, 3);
  m(0, 1) = 1.0;
  m(1, 0) = 1.0;
  m(2, 2) = -0.4;
  KernelOp kernel{TabularKernel{m, false}};
  TabularNet net(3, 2);
  datasets::TabularSource source(3, 8);

  auto run = [&](std::vector<LogRecord>& log) {
    TrainConfig cfg;
    cfg.iterations = 200;
    cfg.seed = 77;
    cfg.beta = 0.1;
    cfg.learning_rate = 0.01;
    cfg.rmsprop_decay = 0.9;
    cfg.log_sink = [&](const LogRecord& r) { log.push_back(r); };
    return train_loop(cfg, kernel, net, source);
  };
  std::vector<LogRecord> la, lb;
  run(la);
  run(lb);
  REQUIRE(la.size() == lb.size());
  for (size_t i = 0; i < la.size(); ++i) {
    CHECK(la[i].step == lb[i].step);
    CHECK(la[i].grad_norm == lb[i].grad_norm);
    CHECK(la[i].sigma_cond == lb[i].sigma_cond);
    for (size_t k = 0; k < la[i].lambdas.size(); ++k)
      CHECK(la[i].lambdas[k] == lb[i].lambdas[k]);
  }
}

TEST_CASE("train_loop rejects a timescale violation") {
  DenseMatrix m = DenseMatrix::identity(2);
  KernelOp kernel{TabularKernel{m, false}};
  TabularNet net(2, 1);
  datasets::TabularSource source(2, 4);
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.beta = 0.0005;  // less than 1 - 0.999
  cfg.learning_rate = 1e-3;
  cfg.rmsprop_decay = 0.999;
  CHECK_THROWS_AS(train_loop(cfg, kernel, net, source), ConfigError);
}

TEST_CASE("ordered_eigenfunctions: identity Sigma, diagonal Pi") {
  DenseMatrix lambda(3, 3);
  lambda(0, 0) = -2.0;
  lambda(1, 1) = -1.0;
  lambda(2, 2) = 0.5;
  auto ord = ordered_eigenfunctions(DenseMatrix::identity(3), lambda,
                                    ExtractionMode::CholeskyOnly);
  CHECK(ord.eigenvalues[0] == -2.0);
  CHECK(ord.eigenvalues[2] == 0.5);
  std::mt19937_64 eng(12);
  FeatureBatch u = random_dense(4, 3, eng);
  DenseMatrix v = ord.apply(u);
  CHECK(max_abs_diff(v, u) < 1e-12);
}

TEST_CASE("full_diagonalize undoes a rotation of true eigenvectors") {
  std::mt19937_64 eng(13);
  const int m = 6, k = 3;
  DenseMatrix a = random_symmetric(m, eng);
  auto eig = linalg::sym_eig(a);

  // rotate the k lowest eigenvectors by a random orthogonal R
  DenseMatrix r_seed = random_symmetric(k, eng);
  auto r_eig = linalg::sym_eig(r_seed);
  const DenseMatrix& rot = r_eig.vectors;  // orthogonal

  DenseMatrix e(m, k);
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < m; ++i) e(i, c) = eig.vectors(i, m - 1 - c);
  DenseMatrix u = kernels::matmul(e, rot);
  for (size_t i = 0; i < u.size(); ++i) u.data()[i] *= std::sqrt(double(m));

  DenseMatrix sigma = kernels::matmul_tn(u, u, 1.0 / m);
  DenseMatrix mu = kernels::matmul(a, u);
  DenseMatrix pi = symmetrize(kernels::matmul_tn(u, mu, 1.0 / m));
  auto mg = masked_gradient_matrices(pi, sigma);
  auto ord = ordered_eigenfunctions(sigma, mg.report.lambda_full,
                                    ExtractionMode::FullDiagonalize);
  DenseMatrix v = ord.apply(u);

  // columns align with the true eigenvectors up to sign
  for (int c = 0; c < k; ++c) {
    CHECK(ord.eigenvalues[c] == doctest::Approx(eig.values[m - 1 - c]).epsilon(1e-8));
    double dot = 0.0, nv = 0.0;
    for (int i = 0; i < m; ++i) {
      dot += v(i, c) * eig.vectors(i, m - 1 - c);
      nv += v(i, c) * v(i, c);
    }
    CHECK(std::fabs(dot) / std::sqrt(nv * 1.0) ==
          doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("constant first eigenfunction wrapper") {
  auto inner = std::make_shared<TabularNet>(3, 2);
  ConstantFirstNet net(inner);
  CHECK(net.n_outputs() == 3);
  ParamVector p = net.init_params(14);
  DenseMatrix idx(4, 1);
  idx(1, 0) = 1;
  idx(2, 0) = 2;
  FeatureBatch u = net.forward(p, idx);
  for (int r = 0; r < 4; ++r) CHECK(u(r, 0) == 1.0);

  DenseMatrix s = sigma_hat(u, u);
  CHECK(s(0, 0) == doctest::Approx(1.0));

  // gradients to the constant column are dropped
  DenseMatrix cot(4, 3);
  for (int r = 0; r < 4; ++r) cot(r, 0) = 5.0;  // only the constant column
  ParamVector g = net.backward(p, idx, cot);
  for (double v : g.values) CHECK(v == 0.0);
}
