#pragma once

// Monte-Carlo edge dropout: T stochastic passes that differ only in which
// edges are dropped; per-subject mean class probability and its entropy.

#include "evgraph/train.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace evgraph {

struct UncertaintyReport {
  Matrix mean_probs;            // N x C_k, m_i
  std::vector<double> entropy;  // u_i, in [0, ln C_k]
  int t_passes = 0;

  /// Mean entropy over subjects of `split`; NaN when the split is empty.
  double mean_entropy(const LabelMask& mask, Split split) const;
  double mean_entropy() const;
};

/// -sum_c p_c ln p_c with 0 ln 0 = 0, clamped into [0, ln C].
double predictive_entropy(const Eigen::Ref<const Eigen::RowVectorXd>& probs);

/// Averages per-pass probability matrices (pairwise summation in pass order)
/// and computes entropies.
UncertaintyReport aggregate_passes(std::span<const Matrix> passes);

struct McedOptions {
  int t_passes = 128;
  double edge_dropout = 0.2;
  double lambda_max = kDefaultLambdaMax;
  std::uint64_t seed = 0;
  int threads = 1;  // passes are split across this many threads
};

/// Pass t draws its edge mask from RngStream(seed).split(t); vertex-feature
/// and PAE dropout stay off. Results do not depend on `threads`.
UncertaintyReport mced(const Problem& problem, const ModelParams& params, const McedOptions& options);

/// argmax of mean_probs per subject, ties to the lowest class index.
std::vector<int> mced_ensemble_predict(const UncertaintyReport& report);

}  // namespace evgraph
