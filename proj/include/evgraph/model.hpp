#pragma once

// Chebyshev graph-convolution network with jumping-connection fusion and a
// vertex-wise MLP predictor.

#include "evgraph/graph.hpp"
#include "evgraph/numcore.hpp"
#include "evgraph/pae.hpp"
#include "evgraph/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace evgraph {

struct ModelDims {
  int feature_dim = 0;       // C
  int metadata_dim = 0;      // M, after categorical expansion
  int num_classes = 2;       // C_k
  int cheb_order = 3;        // K
  std::vector<int> hidden = {16, 16, 16, 16};  // one width per GC layer (L_G entries)
  int pae_hidden = 128;      // D_h
  int predictor_hidden = 256;

  int num_layers() const { return static_cast<int>(hidden.size()); }
  int fused_width() const;

  /// Throws ConfigError on non-positive widths, K < 0 or fewer than 2 classes.
  void validate() const;

  bool operator==(const ModelDims&) const = default;
};

struct ChebLayerParams {
  std::vector<Tensor> filters;  // K + 1 matrices, C_in x C_out

  int order() const { return static_cast<int>(filters.size()) - 1; }
};

struct PredictorParams {
  Tensor w1;  // fused x predictor_hidden
  Tensor b1;
  Tensor w2;  // predictor_hidden x C_k
  Tensor b2;
};

struct NamedTensor {
  std::string name;
  std::string group;  // "pae", "gc<l>" or "predictor"
  Tensor tensor;
  bool is_bias = false;
};

struct ModelParams {
  ModelDims dims;
  PaeParams pae;
  std::vector<ChebLayerParams> layers;
  PredictorParams predictor;

  /// Every trainable tensor in a fixed order (checkpoint order).
  std::vector<NamedTensor> named_tensors() const;
  ModelParams clone() const;
  void zero_grad();
};

/// He-normal weights (variance 2 / fan_in), zero biases; deterministic in `seed`.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed, double pae_dropout = 0.2);

/// sum_k T_k(L~) H Theta_k (no bias).
Tensor cheb_conv(Tape& tape, const Tensor& h, const Tensor& scaled_laplacian, const ChebLayerParams& params);

/// Stochastic parts of a forward pass. All zero means deterministic inference.
struct ForwardOptions {
  double edge_dropout = 0.0;
  double feature_dropout = 0.0;
  double lambda_max = kDefaultLambdaMax;
};

/// Class probabilities, N x C_k. RNG draws happen in a fixed order: edge mask,
/// then one feature mask per layer.
Tensor forward(Tape& tape, const PopulationGraph& graph, const ModelParams& params, const ForwardOptions& options,
               RngStream& rng);

}  // namespace evgraph
