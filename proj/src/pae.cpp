#include "evgraph/pae.hpp"

#include <string>

namespace evgraph {

NormStats fit_norm_stats(const Matrix& metadata) {
  if (metadata.rows() == 0) throw ShapeError("fit_norm_stats: no subjects");
  NormStats stats;
  const double n = static_cast<double>(metadata.rows());
  stats.mean = metadata.colwise().sum() / n;
  Matrix centered = metadata.rowwise() - stats.mean;
  stats.stddev = (centered.colwise().squaredNorm() / n).cwiseSqrt();
  stats.stddev = stats.stddev.cwiseMax(kStdFloor);
  return stats;
}

Tensor normalize_metadata(const Tensor& metadata, const NormStats& stats) {
  if (metadata.cols() != stats.mean.size()) {
    throw ShapeError("normalize_metadata: " + std::to_string(stats.mean.size()) + " columns expected, got " +
                     metadata.shape());
  }
  Matrix out = (metadata.value().rowwise() - stats.mean).array().rowwise() / stats.stddev.array();
  // exact zeros for clamped (constant) columns
  for (Index c = 0; c < out.cols(); ++c) {
    if (stats.stddev(c) <= kStdFloor) out.col(c).setZero();
  }
  return Tensor::constant(std::move(out));
}

Tensor project(Tape& tape, const Tensor& normalized, const PaeParams& params, bool training, RngStream& rng) {
  if (normalized.cols() != params.w1.rows()) {
    throw ShapeError("pae project: metadata " + normalized.shape() + " vs projection " + params.w1.shape());
  }
  Tensor hidden = relu(tape, add_row(tape, matmul(tape, normalized, params.w1), params.b1));
  if (training) hidden = dropout(tape, hidden, params.dropout_rate, rng);
  return matmul(tape, hidden, params.w2);
}

Tensor pairwise_scores(Tape& tape, const Tensor& latents) {
  const Index n = latents.rows();
  Tensor unit = div_rows(tape, latents, row_l2_norm(tape, latents));
  Tensor cosine = gram(tape, unit);
  Tensor w = clamp(tape, add_scalar(tape, scale(tape, cosine, 0.5), 0.5), 0.0, 1.0);
  Matrix off_diagonal = Matrix::Ones(n, n) - Matrix::Identity(n, n);
  return add(tape, mul(tape, w, Tensor::constant(std::move(off_diagonal))),
             Tensor::constant(Matrix::Identity(n, n)));
}

PopulationGraph build_adaptive_graph(Tape& tape, const Tensor& features, const Tensor& metadata,
                                     const PaeParams& params, const NormStats& stats, bool training,
                                     RngStream& rng) {
  if (features.rows() != metadata.rows()) {
    throw ShapeError("build_adaptive_graph: features " + features.shape() + " vs metadata " + metadata.shape());
  }
  Tensor latents = project(tape, normalize_metadata(metadata, stats), params, training, rng);
  return PopulationGraph{features, pairwise_scores(tape, latents)};
}

}  // namespace evgraph
