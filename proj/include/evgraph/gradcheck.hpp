#pragma once

// Finite-difference verification of every parameter group of the full model,
// including the association encoder whose only path to the loss runs through
// the graph Laplacian.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "evgraph/numcore.hpp"

namespace evgraph {

/// max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|); 0 when both are zero.
double max_relative_error(const Matrix& analytic, const Matrix& numeric);

/// Central differences of `loss` with respect to every entry of `x`, which is
/// perturbed in place and restored.
Matrix numeric_gradient(const std::function<double()>& loss, Matrix& x, double step = 1e-5);

struct GradcheckOptions {
  int n_subjects = 6;
  int feature_dim = 4;
  int metadata_dim = 3;
  int num_classes = 2;
  int cheb_order = 2;
  int num_layers = 2;
  int hidden_width = 3;
  int pae_hidden = 5;
  int predictor_hidden = 4;
  double dropout = 0.2;       // masks are re-drawn from the same seed on every evaluation
  double edge_dropout = 0.2;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
};

struct GroupCheck {
  std::string group;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  double analytic_norm = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GroupCheck> groups;  // pae, gc<l>..., predictor, edge_weights
  double edge_grad_norm = 0.0;     // |d loss / d W| at the adaptive graph
  bool passed = false;

  std::vector<std::string> failed_groups() const;
};

/// Builds a random toy population, evaluates the masked cross-entropy of the
/// adaptive model and compares reverse-mode gradients against central
/// differences for each parameter group and for the edge weights themselves.
/// For cheb_order >= 1 a zero edge gradient is also a failure.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace evgraph
