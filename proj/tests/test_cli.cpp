#include <doctest.h>

#include "evgraph/commands.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace evgraph;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("evgraph_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Small enough for unit-test time budgets.
RunConfig tiny_config(const fs::path& out) {
  RunConfig c;
  c.out = out;
  c.synthetic.n_subjects = 30;
  c.synthetic.feature_dim = 6;
  c.train.epochs = 8;
  c.train.num_layers = 2;
  c.train.hidden_width = 4;
  c.train.pae_hidden = 8;
  c.train.predictor_hidden = 8;
  c.train.t_mc = 6;
  return c;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config defaults match the documented training defaults") {
  RunConfig c = parse_run_config(json::object());
  CHECK(c.train.learning_rate == 0.01);
  CHECK(c.train.weight_decay == 5e-5);
  CHECK(c.train.dropout == 0.2);
  CHECK(c.train.edge_dropout == 0.2);
  CHECK(c.train.epochs == 300);
  CHECK(c.train.cheb_order == 3);
  CHECK(c.train.num_layers == 4);
  CHECK(c.train.t_mc == 128);
  CHECK(c.graph == GraphKind::kAdaptive);
  CHECK_FALSE(c.data);
}

TEST_CASE("config parsing") {
  json doc = json::parse(R"({
    "schema_version": 1, "seed": 7, "graph": "affinity", "out": "runs/a",
    "train": {"epochs": 12, "pae_dropout": 0.1, "learning_rate": 0.005},
    "synthetic": {"informativeness": "partial", "n_subjects": 50},
    "baseline": {"affinity_beta": [0.2, 0.3], "random_p": 0.05},
    "ablate": {"graphs": ["random"], "informativeness": ["noise", "full"], "seeds": [3, 4]},
    "data": {"features": "f.csv", "metadata": "/abs/m.csv", "labels": "l.csv"}
  })");
  RunConfig c = parse_run_config(doc, "/base");
  CHECK(c.seed == 7);
  CHECK(c.train.seed == 7);
  CHECK(c.synthetic.seed == 7);
  CHECK(c.baseline.seed == 7);
  CHECK(c.graph == GraphKind::kAffinity);
  CHECK(c.out == fs::path("runs/a"));
  CHECK(c.train.epochs == 12);
  CHECK(c.train.effective_pae_dropout() == 0.1);
  CHECK(c.synthetic.informativeness == Informativeness::kPartial);
  CHECK(c.baseline.affinity_beta == std::vector<double>{0.2, 0.3});
  CHECK(c.ablate.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(c.ablate.informativeness.size() == 2);
  REQUIRE(c.data);
  CHECK(c.data->features == fs::path("/base/f.csv"));
  CHECK(c.data->metadata == fs::path("/abs/m.csv"));

  RunConfig again = parse_run_config(to_json(c));
  CHECK(to_json(again) == to_json(c));

  CHECK(parse_run_config(json::parse(R"({"baseline": {"affinity_beta": 0.5}})")).baseline.affinity_beta ==
        std::vector<double>{0.5});
}

TEST_CASE("config errors name the offending key") {
  auto err = [](const char* text) { return message_of([&] { parse_run_config(json::parse(text)); }); };
  CHECK(err(R"({"epochs": 3})").find("'epochs'") != std::string::npos);
  CHECK(err(R"({"train": {"lr": 0.1}})").find("train.lr") != std::string::npos);
  CHECK(err(R"({"train": {"epochs": "many"}})").find("train.epochs") != std::string::npos);
  CHECK(err(R"({"graph": "knn"})").find("knn") != std::string::npos);
  CHECK(err(R"({"schema_version": 2})").find("schema_version") != std::string::npos);
  CHECK(err(R"({"train": {"dropout": 1.5}})").find("dropout") != std::string::npos);
  CHECK(err(R"({"ablate": {"seeds": [-1]}})").find("ablate.seeds") != std::string::npos);
  CHECK(err(R"({"data": {"features": "f.csv"}})").find("data") != std::string::npos);
  CHECK_THROWS_AS(parse_run_config(json::parse(R"({"seed": -3})")), ConfigError);

  const std::string missing = message_of([] { load_run_config("/no/such/config.json"); });
  CHECK(missing.find("/no/such/config.json") != std::string::npos);
  CHECK_THROWS_AS(load_run_config("/no/such/config.json"), ConfigError);

  fs::path dir = scratch_dir("badjson");
  std::ofstream(dir / "c.json") << "{ not json";
  CHECK_THROWS_AS(load_run_config(dir / "c.json"), ConfigError);
  CHECK(config_schema_help().find("schema version 1") != std::string::npos);
}

TEST_CASE("overrides") {
  Overrides o;
  o.seed = 9;
  o.t_passes = 3;
  o.graph = GraphKind::kRandom;
  o.out = "elsewhere";
  RunConfig c = resolve_config({}, o);
  CHECK(c.seed == 9);
  CHECK(c.synthetic.seed == 9);
  CHECK(c.train.t_mc == 3);
  CHECK(c.graph == GraphKind::kRandom);
  CHECK(c.out == fs::path("elsewhere"));
  o.t_passes = 0;
  CHECK_THROWS_AS(resolve_config({}, o), ConfigError);
}

TEST_CASE("checkpoint round trip is exact") {
  fs::path dir = scratch_dir("ckpt");
  RunConfig cfg = tiny_config(dir);
  Problem p = make_problem(load_run_data(cfg), GraphKind::kAdaptive);
  Checkpoint c;
  c.seed = 11;
  c.stats = p.stats;
  c.params = init_params(make_dims(p, cfg.train), 11, 0.3);
  c.params.predictor.b2.value()(0, 1) = 0.1 + 0.2;  // not exactly representable
  save_checkpoint(c, dir / "a.json");
  Checkpoint back = load_checkpoint(dir / "a.json");
  CHECK(back.seed == 11);
  CHECK(back.graph == "adaptive");
  CHECK(back.params.dims == c.params.dims);
  CHECK(back.params.pae.dropout_rate == 0.3);
  CHECK(back.stats.mean == c.stats.mean);
  CHECK(back.stats.stddev == c.stats.stddev);
  auto ta = c.params.named_tensors();
  auto tb = back.params.named_tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].tensor.value() == tb[i].tensor.value());
  save_checkpoint(back, dir / "b.json");
  CHECK(read_file(dir / "a.json") == read_file(dir / "b.json"));

  json doc = checkpoint_to_json(c);
  CHECK(doc["format"] == "evgraph-checkpoint");
  CHECK(doc["format_version"] == 1);
  doc["format_version"] = 2;
  CHECK_THROWS_AS(checkpoint_from_json(doc), ConfigError);
  doc = checkpoint_to_json(c);
  doc["tensors"][0]["rows"] = 1;
  CHECK_THROWS_AS(checkpoint_from_json(doc), ConfigError);
  doc = checkpoint_to_json(c);
  doc.erase("dims");
  CHECK_THROWS_AS(checkpoint_from_json(doc), ConfigError);

  const std::string msg = message_of([&] { check_compatible(c.params.dims, 5, 6, 2); });
  CHECK(msg.find("feature_dim=6") != std::string::npos);
  CHECK(msg.find("feature_dim=5") != std::string::npos);
}

TEST_CASE("train, predict and uncertainty commands") {
  fs::path dir = scratch_dir("cmds");
  RunConfig cfg = tiny_config(dir / "run");
  std::ostringstream log;
  cmd_train(cfg, log);
  CHECK(log.str().find("final val accuracy") != std::string::npos);
  CHECK(fs::exists(cfg.out / "checkpoint.json"));
  auto history = lines_of(cfg.out / "history.csv");
  CHECK(history.front() == "epoch,train_loss,val_accuracy");
  CHECK(history.size() == 9);

  cmd_predict(cfg, {}, log);
  CHECK(lines_of(cfg.out / "predictions.csv").size() == 31);

  UncertaintyReport r = cmd_uncertainty(cfg, {}, log);
  auto rows = lines_of(cfg.out / "uncertainty.csv");
  CHECK(rows.front() == "subject_id,predicted_class,p_0,p_1,entropy");
  CHECK(rows.size() == 31);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double u = std::stod(rows[i].substr(rows[i].rfind(',') + 1));
    CHECK(u >= 0.0);
    CHECK(u <= std::log(2.0));
  }
  CHECK(log.str().find("mean test uncertainty") != std::string::npos);

  // T=1 without edge dropout reproduces single-pass entropy
  RunConfig single = cfg;
  single.train.t_mc = 1;
  single.train.edge_dropout = 0.0;
  single.out = dir / "single";
  fs::create_directories(single.out);
  UncertaintyReport one = cmd_uncertainty(single, cfg.out / "checkpoint.json", log);
  Checkpoint ckpt = load_checkpoint(cfg.out / "checkpoint.json");
  Problem p = make_problem(load_run_data(cfg), GraphKind::kAdaptive);
  Matrix probs = predict(p, ckpt.params);
  for (Index i = 0; i < probs.rows(); ++i) {
    CHECK(std::abs(one.entropy[static_cast<std::size_t>(i)] - predictive_entropy(probs.row(i))) < 1e-12);
  }

  // data with a different width is refused with both sizes named
  RunConfig wider = cfg;
  wider.synthetic.feature_dim = 7;
  const std::string msg = message_of([&] { cmd_uncertainty(wider, cfg.out / "checkpoint.json", log); });
  CHECK(msg.find("feature_dim=6") != std::string::npos);
  CHECK(msg.find("feature_dim=7") != std::string::npos);
  CHECK_THROWS_AS(cmd_predict(wider, cfg.out / "checkpoint.json", log), ConfigError);
}

TEST_CASE("commands reproduce artifacts byte for byte") {
  fs::path dir = scratch_dir("bytes");
  std::ostringstream log;
  for (const char* run : {"a", "b"}) {
    RunConfig cfg = tiny_config(dir / run);
    cfg.graph = GraphKind::kAffinity;
    cmd_train(cfg, log);
    cmd_predict(cfg, {}, log);
    cmd_uncertainty(cfg, {}, log);
    cmd_generate(cfg, log);
  }
  for (const char* f : {"checkpoint.json", "history.csv", "predictions.csv", "uncertainty.csv", "features.csv",
                        "metadata.csv", "labels.csv"}) {
    INFO(f);
    CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
  }
}

TEST_CASE("generated CSVs load back as a data config") {
  fs::path dir = scratch_dir("gen");
  RunConfig cfg = tiny_config(dir);
  std::ostringstream log;
  cmd_generate(cfg, log);
  json doc = to_json(cfg);
  doc["data"] = {{"features", "features.csv"}, {"metadata", "metadata.csv"}, {"labels", "labels.csv"}};
  std::ofstream(dir / "config.json") << doc.dump(2);
  RunConfig loaded = load_run_config(dir / "config.json");
  Dataset a = load_run_data(loaded);
  Dataset b = load_run_data(cfg);
  CHECK(a.features == b.features);
  CHECK(a.metadata == b.metadata);
  CHECK(a.mask.splits == b.mask.splits);
}

TEST_CASE("ablation grid") {
  fs::path dir = scratch_dir("ablate");
  RunConfig cfg = tiny_config(dir);
  cfg.ablate.seeds = {0, 1};
  std::ostringstream log;
  AblationResult r = cmd_ablate(cfg, log);
  CHECK(r.runs.size() == 6);
  REQUIRE(r.cells.size() == 3);
  CHECK(r.cells[0].graph == GraphKind::kRandom);
  CHECK(r.cells[2].graph == GraphKind::kAdaptive);
  CHECK(lines_of(dir / "ablation.csv").size() == 4);
  CHECK(lines_of(dir / "ablation_runs.csv").size() == 7);
  CHECK(log.str().find("affinity") != std::string::npos);

  // scheduling does not change the results
  AblationResult serial = run_ablation(cfg, 1);
  AblationResult parallel = run_ablation(cfg, 3);
  for (std::size_t i = 0; i < serial.runs.size(); ++i) {
    CHECK(serial.runs[i].test_accuracy == parallel.runs[i].test_accuracy);
    CHECK(serial.runs[i].test_uncertainty == parallel.runs[i].test_uncertainty);
  }
}

TEST_CASE("normal-approximation interval") {
  Interval iv = mean_interval({1.0, 2.0, 3.0, 4.0});
  CHECK(iv.mean == 2.5);
  CHECK(iv.half_width == doctest::Approx(1.96 * std::sqrt(5.0 / 3.0) / 2.0));
  CHECK(mean_interval({0.7}).half_width == 0.0);
}

TEST_CASE("gradcheck command") {
  std::ostringstream log;
  std::vector<GradcheckOptions> runs(1);
  runs[0].cheb_order = 1;
  CHECK(cmd_gradcheck(runs, log).empty());
  CHECK(log.str().find("edge_weights") != std::string::npos);
  runs[0].tolerance = 0.0;
  CHECK_FALSE(cmd_gradcheck(runs, log).empty());
}
