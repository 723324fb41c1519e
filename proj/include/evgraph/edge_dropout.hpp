#pragma once

#include "evgraph/numcore.hpp"
#include "evgraph/rng.hpp"

namespace evgraph {

/// Symmetric keep-mask for an n-node graph: one Bernoulli(1 - rate) draw per
/// unordered off-diagonal pair (row-major upper triangle order), unit diagonal.
Matrix edge_dropout_mask(Index n, double rate, RngStream& rng);

/// Zeroes dropped edges of `w` in both directions; kept weights are not
/// rescaled and self-loops are untouched.
Tensor edge_dropout(Tape& tape, const Tensor& w, double rate, RngStream& rng);

}  // namespace evgraph
