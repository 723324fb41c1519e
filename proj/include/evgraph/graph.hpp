#pragma once

#include "evgraph/numcore.hpp"

#include <vector>

namespace evgraph {

/// Dense population graph: one node per subject, a complete weighted edge
/// matrix with unit self-loops.
struct PopulationGraph {
  Tensor node_features;  // N x C
  Tensor edge_weights;   // N x N, symmetric, entries in [0, 1], unit diagonal

  Index size() const { return edge_weights.rows(); }
};

/// Throws DomainError/ShapeError unless `w` is square, exactly symmetric,
/// bounded in [0, 1] and has a unit diagonal.
void validate_edge_weights(const Matrix& w);

/// Default spectral bound used to rescale the Laplacian during training.
inline constexpr double kDefaultLambdaMax = 2.0;

/// L = I - D^{-1/2} W D^{-1/2}. A node with zero degree gets D^{-1/2} = 0 and
/// thus an identity row.
Tensor normalized_laplacian(Tape& tape, const Tensor& w);

/// 2 L / lambda_max - I.
Tensor rescale_laplacian(Tape& tape, const Tensor& laplacian, double lambda_max = kDefaultLambdaMax);

/// [T_0(L~) X, ..., T_K(L~) X] via T_k = 2 L~ T_{k-1} - T_{k-2}; one matmul
/// per step, no matrix powers.
std::vector<Tensor> chebyshev_basis(Tape& tape, const Tensor& scaled_laplacian, const Tensor& x, int order);

/// Largest eigenvalue of a symmetric matrix (dense eigensolve).
double lambda_max_exact(const Matrix& symmetric);

}  // namespace evgraph
