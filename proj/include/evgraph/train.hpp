#pragma once

// Transductive semi-supervised training: masked cross-entropy on the labeled
// training subjects, Adam with decoupled weight decay, edge dropout as
// augmentation.

#include "evgraph/datagen.hpp"
#include "evgraph/edge_dropout.hpp"
#include "evgraph/model.hpp"
#include "evgraph/pae.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace evgraph {

struct TrainConfig {
  double learning_rate = 0.01;
  double weight_decay = 5e-5;
  double dropout = 0.2;                // vertex features after each GC layer
  double edge_dropout = 0.2;
  std::optional<double> pae_dropout;   // falls back to `dropout`
  int epochs = 300;
  int cheb_order = 3;                  // K
  int num_layers = 4;                  // L_G
  int hidden_width = 16;
  int pae_hidden = 128;
  int predictor_hidden = 256;
  int t_mc = 128;
  double lambda_max = kDefaultLambdaMax;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;

  double effective_pae_dropout() const { return pae_dropout.value_or(dropout); }
  /// Throws ConfigError.
  void validate() const;
};

/// The fixed ingredients of one run: node features, standardized metadata
/// statistics, labels, and how the graph is obtained.
struct Problem {
  Tensor features;
  Tensor metadata;
  NormStats stats;  // fitted on all subjects
  LabelMask mask;
  GraphKind kind = GraphKind::kAdaptive;
  Tensor fixed_edges;  // random / affinity graphs only

  Index size() const { return features.rows(); }
};

Problem make_problem(const Dataset& data, GraphKind kind, const BaselineGraphParams& baseline = {});
ModelDims make_dims(const Problem& problem, const TrainConfig& config);

/// Population graph for this pass; adaptive graphs go through the PAE.
PopulationGraph build_graph(Tape& tape, const Problem& problem, const ModelParams& params, bool training,
                            RngStream& rng);

/// Mean of -log p[true class] over subjects of `split`; log clamped at 1e-12.
Tensor masked_cross_entropy(Tape& tape, const Tensor& probs, const LabelMask& mask, Split split = Split::kTrain);

struct AdamConfig {
  double learning_rate = 0.01;
  double weight_decay = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long step = 0;
};

/// One Adam update from each tensor's accumulated gradient. Non-bias weights
/// decay as theta *= (1 - lr * wd) before the moment-based step.
void adam_step(std::span<const NamedTensor> params, AdamState& state, const AdamConfig& config);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;  // NaN without validation subjects
};

struct FitResult {
  ModelParams params;
  std::vector<EpochRecord> history;
};

/// Full-batch training for config.epochs; deterministic in config.seed.
/// Throws std::runtime_error when the loss turns non-finite.
FitResult fit(const Problem& problem, const TrainConfig& config);

/// Deterministic single-pass class probabilities (no dropout of any kind).
Matrix predict(const Problem& problem, const ModelParams& params, double lambda_max = kDefaultLambdaMax);

// Metrics over the subjects of one split.
std::vector<int> argmax_rows(const Matrix& probs);
double accuracy(const Matrix& probs, const LabelMask& mask, Split split);
/// Binary: ROC AUC of p[:,1]; C_k > 2: one-vs-rest macro average.
double auc(const Matrix& probs, const LabelMask& mask, Split split);
/// Binary F1 with class 1 as positive; NaN for C_k > 2.
double f1_score(const Matrix& probs, const LabelMask& mask, Split split);

}  // namespace evgraph
