#include <doctest.h>

#include "evgraph/gradcheck.hpp"
#include "evgraph/model.hpp"
#include "support.hpp"

#include <algorithm>
#include <numeric>

using namespace evgraph;
using evtest::random_graph;
using evtest::random_matrix;

namespace {

ModelDims toy_dims() {
  ModelDims d;
  d.feature_dim = 4;
  d.metadata_dim = 3;
  d.num_classes = 3;
  d.cheb_order = 2;
  d.hidden = {5, 3};
  d.pae_hidden = 6;
  d.predictor_hidden = 7;
  return d;
}

ChebLayerParams random_layer(int order, Index in, Index out, RngStream& rng) {
  ChebLayerParams p;
  for (int k = 0; k <= order; ++k) p.filters.push_back(Tensor::parameter(random_matrix(in, out, rng)));
  return p;
}

}  // namespace

TEST_CASE("cheb_conv with K=0 ignores the graph") {
  RngStream rng(1);
  Tape tape(false);
  auto layer = random_layer(0, 3, 2, rng);
  Matrix h = random_matrix(5, 3, rng);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor lt = rescale_laplacian(tape, normalized_laplacian(tape, Tensor::constant(random_graph(5, rng))));
    Matrix out = cheb_conv(tape, Tensor::constant(h), lt, layer).value();
    CHECK((out - h * layer.filters[0].value()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("cheb_conv on an edgeless graph") {
  RngStream rng(2);
  Tape tape(false);
  auto layer = random_layer(2, 3, 4, rng);
  Matrix h = random_matrix(5, 3, rng);
  Tensor lt = rescale_laplacian(tape, normalized_laplacian(tape, Tensor::constant(Matrix::Zero(5, 5))));
  CHECK(lt.value().isZero(0.0));
  Matrix out = cheb_conv(tape, Tensor::constant(h), lt, layer).value();
  Matrix expected = h * (layer.filters[0].value() - layer.filters[2].value());
  CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cheb_conv matches the spectral oracle") {
  RngStream rng(3);
  Tape tape(false);
  auto layer = random_layer(3, 3, 2, rng);
  Matrix h = random_matrix(6, 3, rng);
  Tensor lt = rescale_laplacian(tape, normalized_laplacian(tape, Tensor::constant(random_graph(6, rng))));
  Matrix oracle = Matrix::Zero(6, 2);
  for (int k = 0; k <= 3; ++k) {
    oracle += evtest::spectral_apply(lt.value(), h, [k](double v) { return evtest::chebyshev_t(k, v); }) *
              layer.filters[static_cast<std::size_t>(k)].value();
  }
  CHECK((cheb_conv(tape, Tensor::constant(h), lt, layer).value() - oracle).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(cheb_conv(tape, Tensor::constant(random_matrix(6, 2, rng)), lt, layer), ShapeError);
}

TEST_CASE("initialisation") {
  ModelDims d = toy_dims();
  ModelParams a = init_params(d, 7);
  ModelParams b = init_params(d, 7);
  auto ta = a.named_tensors();
  auto tb = b.named_tensors();
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i].name == tb[i].name);
    CHECK(ta[i].tensor.value() == tb[i].tensor.value());
    if (ta[i].is_bias) CHECK(ta[i].tensor.value().isZero(0.0));
  }
  CHECK(init_params(d, 8).predictor.w1.value() != a.predictor.w1.value());

  CHECK(a.layers.size() == 2);
  CHECK(a.layers[0].filters.size() == 3);
  CHECK(a.layers[1].filters[0].rows() == 5);
  CHECK(a.predictor.w1.rows() == d.fused_width());
  CHECK(d.fused_width() == 8);

  ModelDims big;
  big.feature_dim = 128;
  big.metadata_dim = 128;
  big.pae_hidden = 128;
  big.hidden = {128};
  big.cheb_order = 0;
  big.predictor_hidden = 128;
  ModelParams p = init_params(big, 3);
  for (const Matrix* m : {&p.pae.w1.value(), &p.pae.w2.value(), &p.layers[0].filters[0].value(),
                          &p.predictor.w1.value()}) {
    const double mean = m->mean();
    const double var = (m->array() - mean).square().mean();
    CHECK(var == doctest::Approx(2.0 / 128.0).epsilon(0.2));
  }

  ModelDims bad = toy_dims();
  bad.feature_dim = 0;
  CHECK_THROWS_AS(init_params(bad, 0), ConfigError);
  bad = toy_dims();
  bad.num_classes = 1;
  CHECK_THROWS_AS(init_params(bad, 0), ConfigError);
  bad = toy_dims();
  bad.hidden = {4, -1};
  CHECK_THROWS_AS(init_params(bad, 0), ConfigError);
}

TEST_CASE("forward output is a distribution per subject") {
  RngStream rng(4);
  ModelParams p = init_params(toy_dims(), 1);
  PopulationGraph g{Tensor::constant(random_matrix(9, 4, rng)), Tensor::constant(random_graph(9, rng))};
  Tape tape(false);
  for (double rate : {0.0, 0.3}) {
    ForwardOptions fo;
    fo.edge_dropout = rate;
    fo.feature_dropout = rate;
    Matrix probs = forward(tape, g, p, fo, rng).value();
    CHECK(probs.rows() == 9);
    CHECK(probs.cols() == 3);
    for (Index i = 0; i < 9; ++i) CHECK(std::abs(probs.row(i).sum() - 1.0) < 1e-9);
    CHECK((probs.array() > 0.0).all());
    CHECK((probs.array() < 1.0).all());
  }
}

TEST_CASE("forward is permutation equivariant without dropout") {
  RngStream rng(5);
  ModelParams p = init_params(toy_dims(), 2);
  const Index n = 10;
  Matrix x = random_matrix(n, 4, rng);
  Matrix w = random_graph(n, rng);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  Matrix px(n, 4), pw(n, n);
  for (Index i = 0; i < n; ++i) {
    px.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < n; ++j) pw(i, j) = w(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  Tape tape(false);
  RngStream unused(0);
  Matrix base = forward(tape, {Tensor::constant(x), Tensor::constant(w)}, p, {}, unused).value();
  Matrix permuted = forward(tape, {Tensor::constant(px), Tensor::constant(pw)}, p, {}, unused).value();
  double diff = 0.0;
  for (Index i = 0; i < n; ++i) {
    diff = std::max(diff, (permuted.row(i) - base.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff());
  }
  CHECK(diff < 1e-9);
}

TEST_CASE("full-model gradient check on the N=6, C=4, K=2, L_G=2 toy") {
  GradcheckOptions o;
  o.cheb_order = 2;
  GradcheckReport r = run_gradcheck(o);
  CHECK(r.passed);
  std::vector<std::string> groups;
  for (const auto& g : r.groups) {
    groups.push_back(g.group);
    INFO(g.group << " " << g.max_rel_error);
    CHECK(g.max_rel_error < 1e-4);
    CHECK(g.analytic_norm > 0.0);
  }
  CHECK(groups == std::vector<std::string>{"pae", "gc0", "gc1", "predictor", "edge_weights"});
}

TEST_CASE("gradcheck relative error metric") {
  Matrix a(1, 3), n(1, 3);
  a << 1.0, -2.0, 0.5;
  n << 1.0, -2.0, 0.4;
  CHECK(max_relative_error(a, n) == doctest::Approx(0.05));
  CHECK(max_relative_error(Matrix::Zero(2, 2), Matrix::Zero(2, 2)) == 0.0);
  CHECK_THROWS_AS(max_relative_error(Matrix::Zero(2, 2), Matrix::Zero(1, 2)), ShapeError);
}
