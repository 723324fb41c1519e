#pragma once

#include "evgraph/gradcheck.hpp"
#include "evgraph/numcore.hpp"
#include "evgraph/rng.hpp"

#include <Eigen/Eigenvalues>

#include <functional>

namespace evtest {

using evgraph::Index;
using evgraph::Matrix;

inline Matrix random_matrix(Index rows, Index cols, evgraph::RngStream& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * rng.uniform();
  return m;
}

// Symmetric weights in [0,1] with a unit diagonal.
inline Matrix random_graph(Index n, evgraph::RngStream& rng) {
  Matrix w = random_matrix(n, n, rng, 0.0, 1.0);
  w = (0.5 * (w + w.transpose())).eval();
  w.diagonal().setOnes();
  return w;
}

// Relative error of reverse-mode vs central differences for a scalar function
// of one leaf tensor. `f` builds the loss on the given tape.
inline double grad_error(const std::function<evgraph::Tensor(evgraph::Tape&, const evgraph::Tensor&)>& f,
                         const Matrix& at, double step = 1e-5) {
  evgraph::Tensor x = evgraph::Tensor::parameter(at);
  {
    evgraph::Tape tape;
    tape.backward(f(tape, x));
  }
  Matrix probe = at;
  Matrix numeric = evgraph::numeric_gradient(
      [&]() {
        evgraph::Tape tape(false);
        return f(tape, evgraph::Tensor::constant(probe)).item();
      },
      probe, step);
  return evgraph::max_relative_error(x.grad(), numeric);
}

// Weighted sum so that every output entry gets a distinct upstream gradient.
inline evgraph::Tensor weighted_sum(evgraph::Tape& tape, const evgraph::Tensor& y, std::uint64_t seed = 99) {
  evgraph::RngStream rng(seed);
  auto w = evgraph::Tensor::constant(random_matrix(y.rows(), y.cols(), rng));
  return evgraph::sum_all(tape, evgraph::mul(tape, y, w));
}

// f(L~) X through the eigendecomposition of the symmetric L~.
inline Matrix spectral_apply(const Matrix& lt, const Matrix& x, const std::function<double(double)>& f) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig{Eigen::MatrixXd(lt)};
  Eigen::VectorXd d = eig.eigenvalues().unaryExpr(f);
  Eigen::MatrixXd u = eig.eigenvectors();
  return Matrix(u * d.asDiagonal() * u.transpose() * Eigen::MatrixXd(x));
}

inline double chebyshev_t(int k, double x) {
  double t0 = 1.0, t1 = x;
  if (k == 0) return t0;
  for (int i = 2; i <= k; ++i) {
    const double t2 = 2.0 * x * t1 - t0;
    t0 = t1;
    t1 = t2;
  }
  return t1;
}

}  // namespace evtest
