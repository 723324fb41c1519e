#include "evgraph/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace evgraph {

using nlohmann::json;

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  synthetic.seed = s;
  baseline.seed = s;
}

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) throw ConfigError("config: '" + display() + "' must be an object");
  }

  bool has(const std::string& key) {
    allowed_.insert(key);
    return obj_.contains(key);
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_number()) fail(key, "a number");
    out = v.get<double>();
  }

  void integer(const std::string& key, int& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_number_integer()) fail(key, "an integer");
    out = v.get<int>();
  }

  void unsigned_integer(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_number_unsigned()) fail(key, "a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  void string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_string()) fail(key, "a string");
    out = v.get<std::string>();
  }

  const json& at(const std::string& key) const { return obj_.at(key); }
  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!allowed_.count(it.key())) throw ConfigError("config: unknown key '" + path(it.key()) + "'");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("config: '" + path(key) + "' must be " + what);
  }

 private:
  std::string display() const { return prefix_.empty() ? "<root>" : prefix_; }

  const json& obj_;
  std::string prefix_;
  std::set<std::string> allowed_;
};

GraphKind graph_kind_from(const std::string& s, const std::string& where) {
  auto k = parse_graph_kind(s);
  if (!k) throw ConfigError("config: '" + where + "' must be one of adaptive, random, affinity (got '" + s + "')");
  return *k;
}

Informativeness informativeness_from(const std::string& s, const std::string& where) {
  auto k = parse_informativeness(s);
  if (!k) throw ConfigError("config: '" + where + "' must be one of noise, partial, full (got '" + s + "')");
  return *k;
}

void read_train(const json& j, TrainConfig& t) {
  ObjectReader r(j, "train");
  r.number("learning_rate", t.learning_rate);
  r.number("weight_decay", t.weight_decay);
  r.number("dropout", t.dropout);
  r.number("edge_dropout", t.edge_dropout);
  if (r.has("pae_dropout")) {
    double v = 0;
    r.number("pae_dropout", v);
    t.pae_dropout = v;
  }
  r.integer("epochs", t.epochs);
  r.integer("cheb_order", t.cheb_order);
  r.integer("num_layers", t.num_layers);
  r.integer("hidden_width", t.hidden_width);
  r.integer("pae_hidden", t.pae_hidden);
  r.integer("predictor_hidden", t.predictor_hidden);
  r.integer("t_mc", t.t_mc);
  r.number("lambda_max", t.lambda_max);
  r.number("beta1", t.beta1);
  r.number("beta2", t.beta2);
  r.number("adam_epsilon", t.adam_epsilon);
  r.finish();
}

void read_synthetic(const json& j, SynthSpec& s) {
  ObjectReader r(j, "synthetic");
  r.integer("n_subjects", s.n_subjects);
  r.integer("n_classes", s.n_classes);
  r.integer("feature_dim", s.feature_dim);
  r.integer("metadata_dim", s.metadata_dim);
  r.integer("n_sites", s.n_sites);
  r.number("class_separation", s.class_separation);
  r.number("site_effect", s.site_effect);
  r.number("feature_noise", s.feature_noise);
  r.number("partial_flip", s.partial_flip);
  std::string info;
  r.string("informativeness", info);
  if (!info.empty()) s.informativeness = informativeness_from(info, "synthetic.informativeness");
  r.number("train_fraction", s.train_fraction);
  r.number("val_fraction", s.val_fraction);
  r.finish();
}

void read_baseline(const json& j, BaselineGraphParams& b) {
  ObjectReader r(j, "baseline");
  r.number("random_p", b.random_p);
  if (r.has("affinity_beta")) {
    const auto& v = r.at("affinity_beta");
    b.affinity_beta.clear();
    if (v.is_number()) {
      b.affinity_beta.push_back(v.get<double>());
    } else if (v.is_array() && !v.empty()) {
      for (const auto& e : v) {
        if (!e.is_number()) r.fail("affinity_beta", "a number or an array of numbers");
        b.affinity_beta.push_back(e.get<double>());
      }
    } else {
      r.fail("affinity_beta", "a number or an array of numbers");
    }
  }
  r.finish();
}

void read_ablate(const json& j, AblateSpec& a) {
  ObjectReader r(j, "ablate");
  auto strings = [&](const std::string& key) {
    std::vector<std::string> out;
    const auto& v = r.at(key);
    if (!v.is_array() || v.empty()) r.fail(key, "a non-empty array of strings");
    for (const auto& e : v) {
      if (!e.is_string()) r.fail(key, "a non-empty array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  };
  if (r.has("graphs")) {
    a.graphs.clear();
    for (const auto& s : strings("graphs")) a.graphs.push_back(graph_kind_from(s, "ablate.graphs"));
  }
  if (r.has("informativeness")) {
    a.informativeness.clear();
    for (const auto& s : strings("informativeness")) a.informativeness.push_back(informativeness_from(s, "ablate.informativeness"));
  }
  if (r.has("seeds")) {
    const auto& v = r.at("seeds");
    if (!v.is_array() || v.empty()) r.fail("seeds", "a non-empty array of non-negative integers");
    a.seeds.clear();
    for (const auto& e : v) {
      if (!e.is_number_unsigned()) r.fail("seeds", "a non-empty array of non-negative integers");
      a.seeds.push_back(e.get<std::uint64_t>());
    }
  }
  r.finish();
}

void read_data(const json& j, DataPaths& d, const std::filesystem::path& base_dir) {
  ObjectReader r(j, "data");
  std::string f, m, l;
  r.string("features", f);
  r.string("metadata", m);
  r.string("labels", l);
  r.finish();
  if (f.empty() || m.empty() || l.empty()) throw ConfigError("config: 'data' needs features, metadata and labels paths");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  d = {resolve(f), resolve(m), resolve(l)};
}

}  // namespace

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  ObjectReader r(doc, "");
  int version = kConfigSchemaVersion;
  r.integer("schema_version", version);
  if (version != kConfigSchemaVersion) {
    throw ConfigError("config: unsupported schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kConfigSchemaVersion) + ")");
  }
  std::uint64_t seed = 0;
  r.unsigned_integer("seed", seed);
  std::string graph;
  r.string("graph", graph);
  if (!graph.empty()) cfg.graph = graph_kind_from(graph, "graph");
  std::string out;
  r.string("out", out);
  if (!out.empty()) cfg.out = out;
  if (r.has("train")) read_train(r.at("train"), cfg.train);
  if (r.has("synthetic")) read_synthetic(r.at("synthetic"), cfg.synthetic);
  if (r.has("baseline")) read_baseline(r.at("baseline"), cfg.baseline);
  if (r.has("ablate")) read_ablate(r.at("ablate"), cfg.ablate);
  if (r.has("data")) {
    DataPaths d;
    read_data(r.at("data"), d, base_dir);
    cfg.data = d;
  }
  r.finish();
  cfg.set_seed(seed);
  cfg.train.validate();
  cfg.synthetic.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

json to_json(const RunConfig& c) {
  json train = {
      {"learning_rate", c.train.learning_rate}, {"weight_decay", c.train.weight_decay},
      {"dropout", c.train.dropout},             {"edge_dropout", c.train.edge_dropout},
      {"epochs", c.train.epochs},               {"cheb_order", c.train.cheb_order},
      {"num_layers", c.train.num_layers},       {"hidden_width", c.train.hidden_width},
      {"pae_hidden", c.train.pae_hidden},       {"predictor_hidden", c.train.predictor_hidden},
      {"t_mc", c.train.t_mc},                   {"lambda_max", c.train.lambda_max},
      {"beta1", c.train.beta1},                 {"beta2", c.train.beta2},
      {"adam_epsilon", c.train.adam_epsilon},
  };
  if (c.train.pae_dropout) train["pae_dropout"] = *c.train.pae_dropout;
  json synthetic = {
      {"n_subjects", c.synthetic.n_subjects},
      {"n_classes", c.synthetic.n_classes},
      {"feature_dim", c.synthetic.feature_dim},
      {"metadata_dim", c.synthetic.metadata_dim},
      {"n_sites", c.synthetic.n_sites},
      {"class_separation", c.synthetic.class_separation},
      {"site_effect", c.synthetic.site_effect},
      {"feature_noise", c.synthetic.feature_noise},
      {"partial_flip", c.synthetic.partial_flip},
      {"informativeness", std::string(to_string(c.synthetic.informativeness))},
      {"train_fraction", c.synthetic.train_fraction},
      {"val_fraction", c.synthetic.val_fraction},
  };
  json ablate_graphs = json::array(), ablate_info = json::array();
  for (auto g : c.ablate.graphs) ablate_graphs.push_back(std::string(to_string(g)));
  for (auto i : c.ablate.informativeness) ablate_info.push_back(std::string(to_string(i)));
  json doc = {
      {"schema_version", kConfigSchemaVersion},
      {"seed", c.seed},
      {"graph", std::string(to_string(c.graph))},
      {"out", c.out.string()},
      {"train", train},
      {"synthetic", synthetic},
      {"baseline", {{"random_p", c.baseline.random_p}, {"affinity_beta", c.baseline.affinity_beta}}},
      {"ablate", {{"graphs", ablate_graphs}, {"informativeness", ablate_info}, {"seeds", c.ablate.seeds}}},
  };
  if (c.data) {
    doc["data"] = {{"features", c.data->features.string()},
                   {"metadata", c.data->metadata.string()},
                   {"labels", c.data->labels.string()}};
  }
  return doc;
}

std::string config_schema_help() {
  std::ostringstream os;
  os << "Config schema version " << kConfigSchemaVersion << " (JSON; unknown keys are rejected). Defaults:\n"
     << to_json(RunConfig{}).dump(2) << "\n"
     << "Optional keys: train.pae_dropout (defaults to train.dropout);\n"
     << "  data = {\"features\": PATH, \"metadata\": PATH, \"labels\": PATH} replaces the synthetic generator.\n"
     << "  graph / ablate.graphs: adaptive | random | affinity; informativeness: noise | partial | full.\n";
  return os.str();
}

Dataset load_run_data(const RunConfig& config) {
  if (config.data) return load_dataset(config.data->features, config.data->metadata, config.data->labels);
  return generate_synthetic(config.synthetic);
}

}  // namespace evgraph
