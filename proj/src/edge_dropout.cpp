#include "evgraph/edge_dropout.hpp"

namespace evgraph {

Matrix edge_dropout_mask(Index n, double rate, RngStream& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw DomainError("edge_dropout: rate must lie in [0,1]");
  Matrix mask = Matrix::Identity(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double keep = rng.uniform() >= rate ? 1.0 : 0.0;
      mask(i, j) = keep;
      mask(j, i) = keep;
    }
  }
  return mask;
}

Tensor edge_dropout(Tape& tape, const Tensor& w, double rate, RngStream& rng) {
  if (w.rows() != w.cols()) throw ShapeError("edge_dropout: square matrix required, got " + w.shape());
  if (!(rate >= 0.0 && rate <= 1.0)) throw DomainError("edge_dropout: rate must lie in [0,1]");
  if (rate == 0.0) return w;
  return mul(tape, w, Tensor::constant(edge_dropout_mask(w.rows(), rate, rng)));
}

}  // namespace evgraph
