#include "evgraph/graph.hpp"

#include <cmath>
#include <string>

namespace evgraph {

void validate_edge_weights(const Matrix& w) {
  if (w.rows() != w.cols()) throw ShapeError("edge weights must be square, got " + shape_str(w.rows(), w.cols()));
  for (Index i = 0; i < w.rows(); ++i) {
    if (w(i, i) != 1.0) throw DomainError("edge weight diagonal must be 1 at node " + std::to_string(i));
    for (Index j = i + 1; j < w.cols(); ++j) {
      if (w(i, j) != w(j, i)) {
        throw DomainError("edge weights not symmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
      if (!(w(i, j) >= 0.0 && w(i, j) <= 1.0)) {
        throw DomainError("edge weight outside [0,1] at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
}

namespace {

// d^{-1/2} with the zero-degree convention (0 -> 0).
Tensor inv_sqrt_degree(Tape& tape, const Tensor& degree) {
  Matrix v = degree.value().unaryExpr([](double d) { return d > 0.0 ? 1.0 / std::sqrt(d) : 0.0; });
  return tape.emit(std::move(v), {degree}, [degree](const Tensor& out) -> Tape::Backward {
    return [degree, out]() {
      if (!degree.requires_grad()) return;
      Matrix local = degree.value().binaryExpr(out.value(), [](double d, double s) {
        return d > 0.0 ? -0.5 * s / d : 0.0;
      });
      Tensor(degree).grad() += out.grad().cwiseProduct(local);
    };
  });
}

}  // namespace

Tensor normalized_laplacian(Tape& tape, const Tensor& w) {
  if (w.rows() != w.cols()) throw ShapeError("normalized_laplacian: square matrix required, got " + w.shape());
  if ((w.value().array() < 0.0).any()) throw DomainError("normalized_laplacian: negative edge weight");
  const Index n = w.rows();
  Tensor s = inv_sqrt_degree(tape, row_sum(tape, w));
  Tensor a = scale_rows_cols(tape, w, s);
  return sub(tape, Tensor::constant(Matrix::Identity(n, n)), a);
}

Tensor rescale_laplacian(Tape& tape, const Tensor& laplacian, double lambda_max) {
  if (!(lambda_max > 0.0)) throw DomainError("rescale_laplacian: lambda_max must be positive");
  const Index n = laplacian.rows();
  if (n != laplacian.cols()) throw ShapeError("rescale_laplacian: square matrix required, got " + laplacian.shape());
  return sub(tape, scale(tape, laplacian, 2.0 / lambda_max), Tensor::constant(Matrix::Identity(n, n)));
}

std::vector<Tensor> chebyshev_basis(Tape& tape, const Tensor& scaled_laplacian, const Tensor& x, int order) {
  if (order < 0) throw DomainError("chebyshev_basis: order must be >= 0, got " + std::to_string(order));
  if (scaled_laplacian.cols() != x.rows() || scaled_laplacian.rows() != scaled_laplacian.cols()) {
    throw ShapeError("chebyshev_basis: laplacian " + scaled_laplacian.shape() + " vs signal " + x.shape());
  }
  std::vector<Tensor> terms;
  terms.reserve(static_cast<std::size_t>(order) + 1);
  terms.push_back(x);
  if (order >= 1) terms.push_back(matmul(tape, scaled_laplacian, x));
  for (int k = 2; k <= order; ++k) {
    Tensor lt = matmul(tape, scaled_laplacian, terms[k - 1]);
    terms.push_back(sub(tape, scale(tape, lt, 2.0), terms[k - 2]));
  }
  return terms;
}

double lambda_max_exact(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw DomainError("eigensolve failed");
  return solver.eigenvalues().maxCoeff();
}

}  // namespace evgraph
