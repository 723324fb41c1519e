#include "evgraph/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace evgraph {

double UncertaintyReport::mean_entropy(const LabelMask& mask, Split split) const {
  const auto rows = mask.indices(split);
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (Index i : rows) total += entropy[static_cast<std::size_t>(i)];
  return total / static_cast<double>(rows.size());
}

double UncertaintyReport::mean_entropy() const {
  if (entropy.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (double u : entropy) total += u;
  return total / static_cast<double>(entropy.size());
}

double predictive_entropy(const Eigen::Ref<const Eigen::RowVectorXd>& probs) {
  double u = 0.0;
  for (Index c = 0; c < probs.size(); ++c) {
    const double p = probs(c);
    if (p > 0.0) u -= p * std::log(p);
  }
  return std::clamp(u, 0.0, std::log(static_cast<double>(probs.size())));
}

namespace {

Matrix pairwise_sum(std::span<const Matrix> parts) {
  if (parts.size() == 1) return parts.front();
  const auto half = parts.size() / 2;
  return pairwise_sum(parts.first(half)) + pairwise_sum(parts.subspan(half));
}

}  // namespace

UncertaintyReport aggregate_passes(std::span<const Matrix> passes) {
  if (passes.empty()) throw DomainError("aggregate_passes: at least one pass is required");
  UncertaintyReport report;
  report.t_passes = static_cast<int>(passes.size());
  report.mean_probs = pairwise_sum(passes) / static_cast<double>(passes.size());
  report.entropy.resize(static_cast<std::size_t>(report.mean_probs.rows()));
  for (Index i = 0; i < report.mean_probs.rows(); ++i) {
    report.entropy[static_cast<std::size_t>(i)] = predictive_entropy(report.mean_probs.row(i));
  }
  return report;
}

UncertaintyReport mced(const Problem& problem, const ModelParams& params, const McedOptions& options) {
  if (options.t_passes < 1) throw DomainError("mced: T must be >= 1, got " + std::to_string(options.t_passes));
  if (!(options.edge_dropout >= 0.0 && options.edge_dropout <= 1.0)) {
    throw DomainError("mced: edge dropout rate must lie in [0,1]");
  }

  PopulationGraph graph;
  {
    Tape tape(false);
    RngStream unused(0);
    graph = build_graph(tape, problem, params, false, unused);
  }
  ForwardOptions fo;
  fo.edge_dropout = options.edge_dropout;
  fo.lambda_max = options.lambda_max;
  const RngStream base(options.seed);

  std::vector<Matrix> passes(static_cast<std::size_t>(options.t_passes));
  auto run_range = [&](int begin, int end) {
    for (int t = begin; t < end; ++t) {
      Tape tape(false);
      RngStream rng = base.split(static_cast<std::uint64_t>(t));
      passes[static_cast<std::size_t>(t)] = forward(tape, graph, params, fo, rng).value();
    }
  };
  const int threads = std::clamp(options.threads, 1, options.t_passes);
  if (threads == 1) {
    run_range(0, options.t_passes);
  } else {
    std::vector<std::jthread> workers;
    const int chunk = (options.t_passes + threads - 1) / threads;
    for (int w = 0; w < threads; ++w) {
      const int begin = w * chunk;
      const int end = std::min(options.t_passes, begin + chunk);
      if (begin < end) workers.emplace_back(run_range, begin, end);
    }
  }
  return aggregate_passes(passes);
}

std::vector<int> mced_ensemble_predict(const UncertaintyReport& report) { return argmax_rows(report.mean_probs); }

}  // namespace evgraph
