#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "spinet/funcnet.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace spinet;
using namespace spinet::funcnet;
using testutil::random_dense;

using oracles::fd_param_gradient;

namespace {

double rel_error(const ParamVector& a, const ParamVector& b) {
  return oracles::param_rel_error(a, b);
}

}  // namespace

TEST_CASE("block_mask: layer 1 and single group are dense") {
  DenseMatrix m1 = block_mask(1, 4, 8, 8, 4);
  for (size_t i = 0; i < m1.size(); ++i) CHECK(m1.data()[i] == 1.0);
  DenseMatrix mk1 = block_mask(3, 4, 8, 8, 1);
  for (size_t i = 0; i < mk1.size(); ++i) CHECK(mk1.data()[i] == 1.0);
}

TEST_CASE("block_mask: L=2, K=2, layer 2 splits 4x4 into two 2x2 blocks") {
  DenseMatrix m = block_mask(2, 2, 4, 4, 2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const bool in_block = (i < 2 && j < 2) || (i >= 2 && j >= 2);
      CHECK(m(i, j) == (in_block ? 1.0 : 0.0));
    }
}

TEST_CASE("envelope: zero on the boundary, closed-form value at the center") {
  const double d = 50.0;
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden = {8};
  spec.n_outputs = 3;
  spec.envelope_halfwidth = d;
  Mlp net(spec);
  ParamVector p = net.init_params(7);

  DenseMatrix x(2, 2);
  x(0, 0) = d;   // on the box edge
  x(0, 1) = 0.0;
  x(1, 0) = 0.0;
  x(1, 1) = -d;
  FeatureBatch u = net.forward(p, x);
  for (int r = 0; r < 2; ++r)
    for (int k = 0; k < 3; ++k) CHECK(u(r, k) == 0.0);

  const double f0 = Mlp::envelope_factor(std::vector<double>{0.0, 0.0}.data(),
                                         2, d);
  CHECK(f0 == doctest::Approx(std::pow((std::sqrt(2.0) - 1.0) * d, 2.0)));
  CHECK(f0 == doctest::Approx(428.932).epsilon(1e-5));

  DenseMatrix out(1, 2);
  out(0, 0) = d + 1.0;
  out(0, 1) = 0.0;
  CHECK_THROWS_AS(net.forward(p, out), DomainViolation);
}

TEST_CASE("envelope zero-boundary property: 1024 random edge points") {
  const double d = 10.0;
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden = {6};
  spec.n_outputs = 2;
  spec.envelope_halfwidth = d;
  Mlp net(spec);
  ParamVector p = net.init_params(8);
  std::mt19937_64 eng(99);
  DenseMatrix x(1024, 2);
  for (int r = 0; r < 1024; ++r) {
    const int edge_coord = static_cast<int>(uniform_index(eng, 2));
    const double sign = uniform01(eng) < 0.5 ? -1.0 : 1.0;
    x(r, edge_coord) = sign * d;
    x(r, 1 - edge_coord) = uniform_in(eng, -d, d);
  }
  FeatureBatch u = net.forward(p, x);
  for (size_t i = 0; i < u.size(); ++i) CHECK(u.data()[i] == 0.0);
}

TEST_CASE("all-zero parameters give all-zero outputs") {
  MlpSpec spec;
  spec.input_dim = 3;
  spec.hidden = {5, 5};
  spec.n_outputs = 2;
  Mlp net(spec);
  ParamVector p = net.init_params(1);
  for (double& v : p.values) v = 0.0;
  std::mt19937_64 eng(5);
  FeatureBatch u = net.forward(p, random_dense(4, 3, eng));
  for (size_t i = 0; i < u.size(); ++i) CHECK(u.data()[i] == 0.0);
}

TEST_CASE("forward determinism: identical inputs give bit-identical outputs") {
  MlpSpec spec;
  spec.input_dim = 4;
  spec.hidden = {16, 16};
  spec.n_outputs = 5;
  spec.block_sparse = true;
  Mlp net(spec);
  ParamVector p = net.init_params(21);
  std::mt19937_64 eng(22);
  DenseMatrix x = random_dense(9, 4, eng);
  FeatureBatch a = net.forward(p, x);
  FeatureBatch b = net.forward(p, x);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("single linear layer backward: grad W = cot^T x summed over batch") {
  MlpSpec spec;
  spec.input_dim = 3;
  spec.hidden = {};
  spec.n_outputs = 2;
  Mlp net(spec);
  ParamVector p = net.init_params(3);
  std::mt19937_64 eng(6);
  DenseMatrix x = random_dense(5, 3, eng);
  DenseMatrix cot = random_dense(5, 2, eng);
  ParamVector g = net.backward(p, x, cot);
  // weight segment first: out x in
  for (int o = 0; o < 2; ++o)
    for (int i = 0; i < 3; ++i) {
      double ref = 0.0;
      for (int b = 0; b < 5; ++b) ref += cot(b, o) * x(b, i);
      CHECK(g.values[o * 3 + i] == doctest::Approx(ref).epsilon(1e-12));
    }
  // zero cotangent -> zero gradient
  DenseMatrix zero(5, 2);
  ParamVector gz = net.backward(p, x, zero);
  for (double v : gz.values) CHECK(v == 0.0);
}

TEST_CASE("param_backward matches finite differences on random networks") {
  std::mt19937_64 eng(77);
  for (int trial = 0; trial < 10; ++trial) {
    MlpSpec spec;
    spec.input_dim = 2 + static_cast<int>(uniform_index(eng, 3));
    const int n_hidden = 1 + static_cast<int>(uniform_index(eng, 2));
    for (int l = 0; l < n_hidden; ++l)
      spec.hidden.push_back(6 + static_cast<int>(uniform_index(eng, 10)));
    spec.n_outputs = 2 + static_cast<int>(uniform_index(eng, 3));
    spec.block_sparse = trial % 2 == 0;
    if (trial % 3 == 0) spec.envelope_halfwidth = 5.0;

    Mlp net(spec);
    ParamVector p = net.init_params(1000 + trial);
    const int batch = 1 + static_cast<int>(uniform_index(eng, 7));
    DenseMatrix x = random_dense(batch, spec.input_dim, eng, -2.0, 2.0);
    DenseMatrix cot = random_dense(batch, spec.n_outputs, eng);

    ParamVector g = net.backward(p, x, cot);
    ParamVector fd = fd_param_gradient(net, p, x, cot);
    CHECK(rel_error(g, fd) < 1e-5);
  }
}

TEST_CASE("masked weights stay exactly zero through init and gradients") {
  MlpSpec spec;
  spec.input_dim = 4;
  spec.hidden = {8, 8};
  spec.n_outputs = 4;
  spec.block_sparse = true;
  Mlp net(spec);
  ParamVector p = net.init_params(13);
  std::mt19937_64 eng(14);
  DenseMatrix x = random_dense(6, 4, eng);
  DenseMatrix cot = random_dense(6, 4, eng);
  ParamVector g = net.backward(p, x, cot);
  for (int l = 0; l < spec.n_layers(); ++l) {
    const auto& seg = net.layout()->segment(2 * l);
    const DenseMatrix& mask = net.weight_mask(l);
    if (mask.rows() == 0) continue;
    for (size_t i = 0; i < static_cast<size_t>(seg.rows) * seg.cols; ++i) {
      if (mask.data()[i] == 0.0) {
        CHECK(p.values[seg.offset + i] == 0.0);
        CHECK(g.values[seg.offset + i] == 0.0);
      }
    }
  }
}

TEST_CASE("tabular: lookup, repeated states, indicator gradient") {
  DenseMatrix table = DenseMatrix::identity(2);
  FeatureBatch u = tabular_forward(table, {1});
  CHECK(u(0, 0) == 0.0);
  CHECK(u(0, 1) == 1.0);

  FeatureBatch rep = tabular_forward(table, {1, 1, 1});
  for (int r = 1; r < 3; ++r)
    for (int c = 0; c < 2; ++c) CHECK(rep(r, c) == rep(0, c));

  CHECK_THROWS_AS(tabular_forward(table, {2}), IndexOutOfRange);

  TabularNet net(4, 3);
  ParamVector p = net.init_params(4);
  DenseMatrix idx(3, 1);
  idx(0, 0) = 2;
  idx(1, 0) = 0;
  idx(2, 0) = 2;
  std::mt19937_64 eng(15);
  DenseMatrix cot = random_dense(3, 3, eng);
  ParamVector g = net.backward(p, idx, cot);
  ParamVector fd = fd_param_gradient(net, p, idx, cot);
  CHECK(rel_error(g, fd) < 1e-7);
  // untouched rows get exactly zero
  for (int k = 0; k < 3; ++k) {
    CHECK(g.values[1 * 3 + k] == 0.0);
    CHECK(g.values[3 * 3 + k] == 0.0);
  }
}
