#include "evgraph/checkpoint.hpp"

#include <fstream>
#include <map>

namespace evgraph {

using nlohmann::json;

namespace {

json row_to_json(const Eigen::RowVectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::RowVectorXd row_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string("checkpoint: '") + what + "' must be an array");
  Eigen::RowVectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

const json& field(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) throw ConfigError(std::string("checkpoint: missing field '") + key + "'");
  return obj.at(key);
}

}  // namespace

json checkpoint_to_json(const Checkpoint& c) {
  const auto& d = c.params.dims;
  json tensors = json::array();
  for (const auto& nt : c.params.named_tensors()) {
    const Matrix& m = nt.tensor.value();
    tensors.push_back({{"name", nt.name},
                       {"rows", m.rows()},
                       {"cols", m.cols()},
                       {"data", std::vector<double>(m.data(), m.data() + m.size())}});
  }
  return {
      {"format", kCheckpointFormat},
      {"format_version", kCheckpointFormatVersion},
      {"seed", c.seed},
      {"graph", c.graph},
      {"dims",
       {{"feature_dim", d.feature_dim},
        {"metadata_dim", d.metadata_dim},
        {"num_classes", d.num_classes},
        {"cheb_order", d.cheb_order},
        {"hidden", d.hidden},
        {"pae_hidden", d.pae_hidden},
        {"predictor_hidden", d.predictor_hidden}}},
      {"pae_dropout", c.params.pae.dropout_rate},
      {"lambda_max", c.lambda_max},
      {"norm_stats", {{"mean", row_to_json(c.stats.mean)}, {"stddev", row_to_json(c.stats.stddev)}}},
      {"tensors", tensors},
  };
}

Checkpoint checkpoint_from_json(const json& doc) {
  try {
    if (field(doc, "format") != kCheckpointFormat) throw ConfigError("checkpoint: not an evgraph checkpoint");
    const int version = field(doc, "format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw ConfigError("checkpoint: unsupported format_version " + std::to_string(version));
    }
    Checkpoint c;
    c.seed = field(doc, "seed").get<std::uint64_t>();
    c.graph = field(doc, "graph").get<std::string>();
    c.lambda_max = field(doc, "lambda_max").get<double>();
    const json& jd = field(doc, "dims");
    ModelDims dims;
    dims.feature_dim = field(jd, "feature_dim").get<int>();
    dims.metadata_dim = field(jd, "metadata_dim").get<int>();
    dims.num_classes = field(jd, "num_classes").get<int>();
    dims.cheb_order = field(jd, "cheb_order").get<int>();
    dims.hidden = field(jd, "hidden").get<std::vector<int>>();
    dims.pae_hidden = field(jd, "pae_hidden").get<int>();
    dims.predictor_hidden = field(jd, "predictor_hidden").get<int>();
    dims.validate();

    const json& js = field(doc, "norm_stats");
    c.stats.mean = row_from_json(field(js, "mean"), "norm_stats.mean");
    c.stats.stddev = row_from_json(field(js, "stddev"), "norm_stats.stddev");
    if (c.stats.mean.size() != dims.metadata_dim || c.stats.stddev.size() != dims.metadata_dim) {
      throw ConfigError("checkpoint: norm_stats width " + std::to_string(c.stats.mean.size()) +
                        " does not match metadata_dim " + std::to_string(dims.metadata_dim));
    }

    c.params = init_params(dims, 0, field(doc, "pae_dropout").get<double>());
    std::map<std::string, const json*> stored;
    for (const auto& t : field(doc, "tensors")) stored[field(t, "name").get<std::string>()] = &t;
    auto slots = c.params.named_tensors();
    if (stored.size() != slots.size()) {
      throw ConfigError("checkpoint: expected " + std::to_string(slots.size()) + " tensors, found " +
                        std::to_string(stored.size()));
    }
    for (auto& nt : slots) {
      auto it = stored.find(nt.name);
      if (it == stored.end()) throw ConfigError("checkpoint: missing tensor '" + nt.name + "'");
      const json& t = *it->second;
      Matrix& m = nt.tensor.value();
      const auto rows = field(t, "rows").get<Index>();
      const auto cols = field(t, "cols").get<Index>();
      const json& data = field(t, "data");
      if (rows != m.rows() || cols != m.cols() || static_cast<Index>(data.size()) != m.size()) {
        throw ConfigError("checkpoint: tensor '" + nt.name + "' expected " + shape_str(m.rows(), m.cols()) +
                          ", found " + shape_str(rows, cols));
      }
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = data[static_cast<std::size_t>(i)].get<double>();
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint: malformed field: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  out << checkpoint_to_json(ckpt).dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(doc);
}

void check_compatible(const ModelDims& dims, int feature_dim, int metadata_dim, int num_classes) {
  auto mismatch = [](const char* what, int expected, int actual) {
    throw ConfigError(std::string("dimension mismatch: checkpoint expects ") + what + "=" + std::to_string(expected) +
                      ", data has " + what + "=" + std::to_string(actual));
  };
  if (dims.feature_dim != feature_dim) mismatch("feature_dim", dims.feature_dim, feature_dim);
  if (dims.metadata_dim != metadata_dim) mismatch("metadata_dim", dims.metadata_dim, metadata_dim);
  if (num_classes > dims.num_classes) mismatch("num_classes", dims.num_classes, num_classes);
}

}  // namespace evgraph
