#pragma once

// Pairwise association encoder: a siamese projection MLP over standardized
// non-imaging metadata, scored by rescaled cosine similarity in latent space.

#include "evgraph/graph.hpp"
#include "evgraph/numcore.hpp"
#include "evgraph/rng.hpp"

namespace evgraph {

inline constexpr double kStdFloor = 1e-8;

/// Per-column population mean and standard deviation.
struct NormStats {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd stddev;  // >= kStdFloor
};

/// Population (divide-by-N) statistics of each column.
NormStats fit_norm_stats(const Matrix& metadata);

/// (x - mean) / std per column; constant columns map to zero.
Tensor normalize_metadata(const Tensor& metadata, const NormStats& stats);

/// Weights are stored input-major so that a row of subjects multiplies on the
/// left: hidden = relu(x * w1 + b1), latent = hidden * w2.
struct PaeParams {
  Tensor w1;  // M x D_h
  Tensor b1;  // 1 x D_h
  Tensor w2;  // D_h x D_h
  double dropout_rate = 0.2;
};

/// Latent codes h_i for every subject row. In training mode the hidden
/// activation goes through inverted dropout.
Tensor project(Tape& tape, const Tensor& normalized, const PaeParams& params, bool training, RngStream& rng);

/// w_ij = <h_i, h_j> / (2 |h_i| |h_j|) + 0.5 with a unit diagonal.
Tensor pairwise_scores(Tape& tape, const Tensor& latents);

PopulationGraph build_adaptive_graph(Tape& tape, const Tensor& features, const Tensor& metadata,
                                     const PaeParams& params, const NormStats& stats, bool training,
                                     RngStream& rng);

}  // namespace evgraph
