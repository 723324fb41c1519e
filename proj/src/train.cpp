#include "evgraph/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace evgraph {

void TrainConfig::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0,1]");
  };
  auto positive = [](double v, const char* what) {
    if (!(v > 0)) throw ConfigError(std::string(what) + " must be positive");
  };
  prob(dropout, "dropout");
  prob(edge_dropout, "edge_dropout");
  if (pae_dropout) prob(*pae_dropout, "pae_dropout");
  if (dropout >= 1.0) throw ConfigError("dropout must be < 1");
  if (effective_pae_dropout() >= 1.0) throw ConfigError("pae_dropout must be < 1");
  positive(learning_rate, "learning_rate");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  positive(epochs, "epochs");
  positive(num_layers, "num_layers");
  positive(hidden_width, "hidden_width");
  positive(pae_hidden, "pae_hidden");
  positive(predictor_hidden, "predictor_hidden");
  positive(t_mc, "t_mc");
  positive(lambda_max, "lambda_max");
  if (cheb_order < 0) throw ConfigError("cheb_order must be >= 0");
  prob(beta1, "beta1");
  prob(beta2, "beta2");
  positive(adam_epsilon, "adam_epsilon");
}

Problem make_problem(const Dataset& data, GraphKind kind, const BaselineGraphParams& baseline) {
  data.mask.validate();
  if (data.metadata.rows() != data.size()) throw ShapeError("dataset metadata and features disagree in rows");
  Problem p;
  p.features = Tensor::constant(data.features);
  p.metadata = Tensor::constant(data.metadata);
  p.stats = fit_norm_stats(data.metadata);
  p.mask = data.mask;
  p.kind = kind;
  if (kind != GraphKind::kAdaptive) p.fixed_edges = build_baseline_graph(kind, data, baseline).edge_weights;
  return p;
}

ModelDims make_dims(const Problem& problem, const TrainConfig& config) {
  ModelDims dims;
  dims.feature_dim = static_cast<int>(problem.features.cols());
  dims.metadata_dim = static_cast<int>(problem.metadata.cols());
  dims.num_classes = problem.mask.num_classes;
  dims.cheb_order = config.cheb_order;
  dims.hidden.assign(static_cast<std::size_t>(config.num_layers), config.hidden_width);
  dims.pae_hidden = config.pae_hidden;
  dims.predictor_hidden = config.predictor_hidden;
  dims.validate();
  return dims;
}

PopulationGraph build_graph(Tape& tape, const Problem& problem, const ModelParams& params, bool training,
                            RngStream& rng) {
  if (problem.kind == GraphKind::kAdaptive) {
    return build_adaptive_graph(tape, problem.features, problem.metadata, params.pae, problem.stats, training, rng);
  }
  return PopulationGraph{problem.features, problem.fixed_edges};
}

Tensor masked_cross_entropy(Tape& tape, const Tensor& probs, const LabelMask& mask, Split split) {
  if (static_cast<std::size_t>(probs.rows()) != mask.size()) {
    throw ShapeError("masked_cross_entropy: " + std::to_string(mask.size()) + " labels for " + probs.shape());
  }
  const auto rows = mask.indices(split);
  if (rows.empty()) throw DomainError("masked_cross_entropy: no subjects in split " + std::string(to_string(split)));
  Matrix pick = Matrix::Zero(probs.rows(), probs.cols());
  for (Index i : rows) {
    const int y = mask.labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= probs.cols()) throw DomainError("masked_cross_entropy: invalid label at subject " + std::to_string(i));
    pick(i, y) = 1.0;
  }
  Tensor logp = log(tape, clamp(tape, probs, 1e-12, 1.0));
  Tensor total = sum_all(tape, mul(tape, logp, Tensor::constant(std::move(pick))));
  return scale(tape, total, -1.0 / static_cast<double>(rows.size()));
}

void adam_step(std::span<const NamedTensor> params, AdamState& state, const AdamConfig& config) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
      state.second_moment.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: state/parameter count mismatch");
  ++state.step;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    const Matrix& g = t.grad();
    if (g.rows() != t.rows() || g.cols() != t.cols()) throw ShapeError("adam_step: gradient shape mismatch for " + params[i].name);
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    if (!params[i].is_bias && config.weight_decay != 0.0) t.value() *= 1.0 - config.learning_rate * config.weight_decay;
    t.value().array() -=
        config.learning_rate * (m.array() / correction1) / ((v.array() / correction2).sqrt() + config.epsilon);
  }
}

Matrix predict(const Problem& problem, const ModelParams& params, double lambda_max) {
  Tape tape(false);
  RngStream unused(0);
  auto graph = build_graph(tape, problem, params, false, unused);
  ForwardOptions options;
  options.lambda_max = lambda_max;
  return forward(tape, graph, params, options, unused).value();
}

FitResult fit(const Problem& problem, const TrainConfig& config) {
  config.validate();
  problem.mask.validate();
  if (problem.mask.indices(Split::kTrain).empty()) throw DomainError("fit: no training labels");

  FitResult result;
  result.params = init_params(make_dims(problem, config), config.seed, config.effective_pae_dropout());
  auto named = result.params.named_tensors();
  if (problem.kind != GraphKind::kAdaptive) {
    std::erase_if(named, [](const NamedTensor& t) { return t.group == "pae"; });
  }
  const AdamConfig adam{config.learning_rate, config.weight_decay, config.beta1, config.beta2, config.adam_epsilon};
  AdamState state;
  const RngStream base = RngStream(config.seed).split(0x5eed);
  const bool has_val = !problem.mask.indices(Split::kVal).empty();

  ForwardOptions train_options;
  train_options.edge_dropout = config.edge_dropout;
  train_options.feature_dropout = config.dropout;
  train_options.lambda_max = config.lambda_max;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    RngStream rng = base.split(static_cast<std::uint64_t>(epoch));
    result.params.zero_grad();
    Tape tape;
    auto graph = build_graph(tape, problem, result.params, true, rng);
    Tensor probs = forward(tape, graph, result.params, train_options, rng);
    Tensor loss = masked_cross_entropy(tape, probs, problem.mask, Split::kTrain);
    const double loss_value = loss.item();
    if (!std::isfinite(loss_value)) {
      throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch));
    }
    tape.backward(loss);
    for (const auto& nt : named) {
      if (!nt.tensor.grad().allFinite()) {
        throw std::runtime_error("training diverged: non-finite gradient in " + nt.name + " at epoch " +
                                 std::to_string(epoch));
      }
    }
    adam_step(named, state, adam);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_value;
    rec.val_accuracy = has_val ? accuracy(predict(problem, result.params, config.lambda_max), problem.mask, Split::kVal)
                               : std::numeric_limits<double>::quiet_NaN();
    result.history.push_back(rec);
  }
  return result;
}

// ---------------------------------------------------------------------------
// metrics

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Index i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (Index c = 1; c < probs.cols(); ++c) {
      if (probs(i, c) > probs(i, best)) best = static_cast<int>(c);  // strict: ties keep the lower index
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

double accuracy(const Matrix& probs, const LabelMask& mask, Split split) {
  const auto rows = mask.indices(split);
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto pred = argmax_rows(probs);
  std::size_t hits = 0;
  for (Index i : rows) hits += pred[static_cast<std::size_t>(i)] == mask.labels[static_cast<std::size_t>(i)];
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

namespace {

// Mann-Whitney estimate with tied scores counted as one half.
double binary_auc(const std::vector<double>& score, const std::vector<bool>& positive) {
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] < score[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && score[order[j]] == score[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j + 1);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = score.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1) / 2) / (np * static_cast<double>(n_neg));
}

}  // namespace

double auc(const Matrix& probs, const LabelMask& mask, Split split) {
  const auto rows = mask.indices(split);
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  auto one_vs_rest = [&](Index c) {
    std::vector<double> score;
    std::vector<bool> positive;
    for (Index i : rows) {
      score.push_back(probs(i, c));
      positive.push_back(mask.labels[static_cast<std::size_t>(i)] == c);
    }
    return binary_auc(score, positive);
  };
  if (probs.cols() == 2) return one_vs_rest(1);
  double total = 0.0;
  int counted = 0;
  for (Index c = 0; c < probs.cols(); ++c) {
    const double a = one_vs_rest(c);
    if (std::isnan(a)) continue;
    total += a;
    ++counted;
  }
  return counted ? total / counted : std::numeric_limits<double>::quiet_NaN();
}

double f1_score(const Matrix& probs, const LabelMask& mask, Split split) {
  if (probs.cols() != 2) return std::numeric_limits<double>::quiet_NaN();
  const auto rows = mask.indices(split);
  const auto pred = argmax_rows(probs);
  double tp = 0, fp = 0, fn = 0;
  for (Index i : rows) {
    const bool p = pred[static_cast<std::size_t>(i)] == 1;
    const bool y = mask.labels[static_cast<std::size_t>(i)] == 1;
    tp += p && y;
    fp += p && !y;
    fn += !p && y;
  }
  if (tp == 0) return 0.0;
  return 2 * tp / (2 * tp + fp + fn);
}

}  // namespace evgraph
