#include "evgraph/gradcheck.hpp"

#include "evgraph/train.hpp"

#include <map>

namespace evgraph {

double max_relative_error(const Matrix& analytic, const Matrix& numeric) {
  if (analytic.rows() != numeric.rows() || analytic.cols() != numeric.cols()) {
    throw ShapeError("max_relative_error: " + shape_str(analytic.rows(), analytic.cols()) + " vs " +
                     shape_str(numeric.rows(), numeric.cols()));
  }
  if (analytic.size() == 0) return 0.0;
  const double scale = std::max(analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
  if (scale == 0.0) return 0.0;
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

Matrix numeric_gradient(const std::function<double()>& loss, Matrix& x, double step) {
  Matrix g(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + step;
    const double up = loss();
    x.data()[i] = saved - step;
    const double down = loss();
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * step);
  }
  return g;
}

std::vector<std::string> GradcheckReport::failed_groups() const {
  std::vector<std::string> out;
  for (const auto& g : groups) {
    if (!g.passed) out.push_back(g.group);
  }
  return out;
}

namespace {

Matrix flatten(const std::vector<Matrix>& parts) {
  Index total = 0;
  for (const auto& p : parts) total += p.size();
  Matrix out(1, total);
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.size()) = Eigen::Map<const Matrix>(p.data(), 1, p.size());
    off += p.size();
  }
  return out;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& o) {
  if (o.n_subjects < 2) throw ConfigError("gradcheck: at least two subjects are required");
  RngStream data_rng(o.seed);
  Matrix features(o.n_subjects, o.feature_dim);
  Matrix metadata(o.n_subjects, o.metadata_dim);
  for (Index i = 0; i < features.size(); ++i) features.data()[i] = data_rng.normal();
  for (Index i = 0; i < metadata.size(); ++i) metadata.data()[i] = data_rng.normal();

  Problem problem;
  problem.features = Tensor::constant(features);
  problem.metadata = Tensor::constant(metadata);
  problem.stats = fit_norm_stats(metadata);
  problem.kind = GraphKind::kAdaptive;
  problem.mask.num_classes = o.num_classes;
  for (int i = 0; i < o.n_subjects; ++i) {
    problem.mask.labels.push_back(i % o.num_classes);
    // two held-out subjects keep the mask non-trivial
    problem.mask.splits.push_back(i < o.n_subjects - 2 || o.n_subjects <= 2 ? Split::kTrain : Split::kTest);
  }

  ModelDims dims;
  dims.feature_dim = o.feature_dim;
  dims.metadata_dim = o.metadata_dim;
  dims.num_classes = o.num_classes;
  dims.cheb_order = o.cheb_order;
  dims.hidden.assign(static_cast<std::size_t>(o.num_layers), o.hidden_width);
  dims.pae_hidden = o.pae_hidden;
  dims.predictor_hidden = o.predictor_hidden;
  ModelParams params = init_params(dims, o.seed, o.dropout);

  ForwardOptions fo;
  fo.edge_dropout = o.edge_dropout;
  fo.feature_dropout = o.dropout;
  const RngStream stream = RngStream(o.seed).split(0x67c);

  auto full_loss = [&](Tape& tape) {
    RngStream rng = stream;
    auto graph = build_graph(tape, problem, params, true, rng);
    return masked_cross_entropy(tape, forward(tape, graph, params, fo, rng), problem.mask);
  };

  params.zero_grad();
  {
    Tape tape;
    Tensor loss = full_loss(tape);
    tape.backward(loss);
  }

  std::map<std::string, std::pair<std::vector<Matrix>, std::vector<Matrix>>> by_group;
  std::vector<std::string> order;
  for (auto& nt : params.named_tensors()) {
    if (!by_group.count(nt.group)) order.push_back(nt.group);
    auto& [analytic, numeric] = by_group[nt.group];
    analytic.push_back(nt.tensor.grad());
    Tensor handle = nt.tensor;
    numeric.push_back(numeric_gradient(
        [&]() {
          Tape tape(false);
          return full_loss(tape).item();
        },
        handle.value(), o.step));
  }

  GradcheckReport report;
  report.passed = true;
  auto add_group = [&](const std::string& name, const Matrix& analytic, const Matrix& numeric) {
    GroupCheck g;
    g.group = name;
    g.entries = static_cast<std::size_t>(analytic.size());
    g.max_rel_error = max_relative_error(analytic, numeric);
    g.analytic_norm = analytic.norm();
    g.passed = g.max_rel_error < o.tolerance;
    // the graph only reaches the loss through T_k, k >= 1
    if (o.cheb_order >= 1 && (name == "pae" || name == "edge_weights")) g.passed = g.passed && g.analytic_norm > 0.0;
    report.passed = report.passed && g.passed;
    report.groups.push_back(g);
  };
  for (const auto& name : order) {
    const auto& [analytic, numeric] = by_group[name];
    add_group(name, flatten(analytic), flatten(numeric));
  }

  // d loss / d W with the edge weights as a free leaf.
  Matrix w_value;
  {
    Tape tape(false);
    RngStream rng = stream;
    w_value = build_graph(tape, problem, params, true, rng).edge_weights.value();
  }
  Tensor w = Tensor::parameter(w_value);
  const RngStream edge_stream = stream.split(1);
  auto edge_loss = [&](Tape& tape) {
    RngStream rng = edge_stream;
    return masked_cross_entropy(tape, forward(tape, PopulationGraph{problem.features, w}, params, fo, rng),
                                problem.mask);
  };
  {
    Tape tape;
    Tensor loss = edge_loss(tape);
    tape.backward(loss);
  }
  Matrix numeric_w = numeric_gradient(
      [&]() {
        Tape tape(false);
        return edge_loss(tape).item();
      },
      w.value(), o.step);
  report.edge_grad_norm = w.grad().norm();
  add_group("edge_weights", w.grad(), numeric_w);
  return report;
}

}  // namespace evgraph
