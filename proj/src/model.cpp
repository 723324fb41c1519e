#include "evgraph/model.hpp"

#include "evgraph/edge_dropout.hpp"

#include <cmath>
#include <numeric>

namespace evgraph {

int ModelDims::fused_width() const { return std::accumulate(hidden.begin(), hidden.end(), 0); }

void ModelDims::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw ConfigError(std::string(what) + " must be positive, got " + std::to_string(v));
  };
  positive(feature_dim, "feature_dim");
  positive(metadata_dim, "metadata_dim");
  positive(pae_hidden, "pae_hidden");
  positive(predictor_hidden, "predictor_hidden");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2, got " + std::to_string(num_classes));
  if (cheb_order < 0) throw ConfigError("cheb_order must be >= 0, got " + std::to_string(cheb_order));
  if (hidden.empty()) throw ConfigError("at least one graph-convolution layer is required");
  for (int h : hidden) positive(h, "hidden width");
}

std::vector<NamedTensor> ModelParams::named_tensors() const {
  std::vector<NamedTensor> out;
  out.push_back({"pae.w1", "pae", pae.w1, false});
  out.push_back({"pae.b1", "pae", pae.b1, true});
  out.push_back({"pae.w2", "pae", pae.w2, false});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string group = "gc" + std::to_string(l);
    for (std::size_t k = 0; k < layers[l].filters.size(); ++k) {
      out.push_back({group + ".theta" + std::to_string(k), group, layers[l].filters[k], false});
    }
  }
  out.push_back({"predictor.w1", "predictor", predictor.w1, false});
  out.push_back({"predictor.b1", "predictor", predictor.b1, true});
  out.push_back({"predictor.w2", "predictor", predictor.w2, false});
  out.push_back({"predictor.b2", "predictor", predictor.b2, true});
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams p;
  p.dims = dims;
  p.pae = {pae.w1.clone(), pae.b1.clone(), pae.w2.clone(), pae.dropout_rate};
  for (const auto& layer : layers) {
    ChebLayerParams c;
    for (const auto& f : layer.filters) c.filters.push_back(f.clone());
    p.layers.push_back(std::move(c));
  }
  p.predictor = {predictor.w1.clone(), predictor.b1.clone(), predictor.w2.clone(), predictor.b2.clone()};
  return p;
}

void ModelParams::zero_grad() {
  for (auto& nt : named_tensors()) nt.tensor.zero_grad();
}

namespace {

Tensor he_normal(Index rows, Index cols, RngStream& rng, Index fan_in = 0) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in > 0 ? fan_in : rows));
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
  return Tensor::parameter(std::move(m));
}

}  // namespace

ModelParams init_params(const ModelDims& dims, std::uint64_t seed, double pae_dropout) {
  dims.validate();
  RngStream rng(seed);
  ModelParams p;
  p.dims = dims;
  p.pae.w1 = he_normal(dims.metadata_dim, dims.pae_hidden, rng);
  p.pae.b1 = Tensor::zeros(1, dims.pae_hidden, true);
  p.pae.w2 = he_normal(dims.pae_hidden, dims.pae_hidden, rng);
  p.pae.dropout_rate = pae_dropout;
  int in = dims.feature_dim;
  for (int width : dims.hidden) {
    ChebLayerParams layer;
    // each output unit sums K+1 filtered copies of the input
    const Index fan_in = static_cast<Index>(in) * (dims.cheb_order + 1);
    for (int k = 0; k <= dims.cheb_order; ++k) layer.filters.push_back(he_normal(in, width, rng, fan_in));
    p.layers.push_back(std::move(layer));
    in = width;
  }
  p.predictor.w1 = he_normal(dims.fused_width(), dims.predictor_hidden, rng);
  p.predictor.b1 = Tensor::zeros(1, dims.predictor_hidden, true);
  p.predictor.w2 = he_normal(dims.predictor_hidden, dims.num_classes, rng);
  p.predictor.b2 = Tensor::zeros(1, dims.num_classes, true);
  return p;
}

Tensor cheb_conv(Tape& tape, const Tensor& h, const Tensor& scaled_laplacian, const ChebLayerParams& params) {
  if (params.filters.empty()) throw ShapeError("cheb_conv: no filters");
  const auto& first = params.filters.front();
  for (const auto& f : params.filters) {
    if (f.rows() != first.rows() || f.cols() != first.cols()) throw ShapeError("cheb_conv: non-uniform filter bank");
  }
  if (h.cols() != first.rows()) {
    throw ShapeError("cheb_conv: input " + h.shape() + " does not match filters " + first.shape());
  }
  auto terms = chebyshev_basis(tape, scaled_laplacian, h, params.order());
  Tensor out = matmul(tape, terms[0], params.filters[0]);
  for (std::size_t k = 1; k < terms.size(); ++k) out = add(tape, out, matmul(tape, terms[k], params.filters[k]));
  return out;
}

Tensor forward(Tape& tape, const PopulationGraph& graph, const ModelParams& params, const ForwardOptions& options,
               RngStream& rng) {
  if (graph.node_features.rows() != graph.size()) {
    throw ShapeError("forward: features " + graph.node_features.shape() + " vs graph of " +
                     std::to_string(graph.size()) + " nodes");
  }
  Tensor w = graph.edge_weights;
  if (options.edge_dropout > 0.0) w = edge_dropout(tape, w, options.edge_dropout, rng);
  Tensor scaled = rescale_laplacian(tape, normalized_laplacian(tape, w), options.lambda_max);

  std::vector<Tensor> hidden;
  hidden.reserve(params.layers.size());
  Tensor h = graph.node_features;
  for (const auto& layer : params.layers) {
    h = relu(tape, cheb_conv(tape, h, scaled, layer));
    if (options.feature_dropout > 0.0) h = dropout(tape, h, options.feature_dropout, rng);
    hidden.push_back(h);
  }
  Tensor fused = concat_cols(tape, hidden);
  Tensor z = relu(tape, add_row(tape, matmul(tape, fused, params.predictor.w1), params.predictor.b1));
  Tensor logits = add_row(tape, matmul(tape, z, params.predictor.w2), params.predictor.b2);
  return softmax_rows(tape, logits);
}

}  // namespace evgraph
