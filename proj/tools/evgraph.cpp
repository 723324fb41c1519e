// evgraph: train / predict / uncertainty / ablate / gradcheck / generate.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
// Failures print a single line "error code=<n>: <message>" on stderr.

#include <CLI11.hpp>

#include "evgraph/commands.hpp"

#include <iostream>
#include <map>

namespace {

using namespace evgraph;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> t_passes;
  std::optional<std::string> graph;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_t, bool with_checkpoint) {
  cmd->add_option("--config", f.config, "JSON run config (defaults apply when omitted)");
  cmd->add_option("--seed", f.seed, "seed for data generation, initialisation and dropout");
  cmd->add_option("--out", f.out, "output directory");
  if (with_t) cmd->add_option("--t-passes", f.t_passes, "MCED forward passes T");
  cmd->add_option("--graph", f.graph, "graph construction: adaptive, random or affinity")
      ->check(CLI::IsMember({"adaptive", "random", "affinity"}));
  if (with_checkpoint) cmd->add_option("--checkpoint", f.checkpoint, "checkpoint path (default OUT/checkpoint.json)");
  cmd->footer("Config schema version " + std::to_string(kConfigSchemaVersion) +
              "; `evgraph schema` lists every key and default.");
}

RunConfig config_from(const CommonFlags& f) {
  Overrides o;
  o.seed = f.seed;
  if (f.out) o.out = *f.out;
  o.t_passes = f.t_passes;
  if (f.graph) o.graph = parse_graph_kind(*f.graph);
  return resolve_config(f.config, o);
}

int fail(int code, const std::string& message) {
  std::string line = message;
  for (char& c : line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error code=" << code << ": " << line << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge-variational graph convolutional networks with Monte-Carlo edge dropout."};
  app.require_subcommand(1);
  app.footer("Config schema version " + std::to_string(kConfigSchemaVersion) +
             ". Exit codes: 0 success, 1 runtime failure, 2 usage/config error. EVGRAPH_THREADS caps parallelism.");

  CommonFlags train_f, predict_f, unc_f, ablate_f, gen_f;
  auto* train = app.add_subcommand("train", "train a model; writes checkpoint.json and history.csv");
  add_common(train, train_f, false, false);
  auto* predict = app.add_subcommand("predict", "single-pass predictions from a checkpoint; writes predictions.csv");
  add_common(predict, predict_f, false, true);
  auto* unc = app.add_subcommand("uncertainty", "MCED uncertainty from a checkpoint; writes uncertainty.csv");
  add_common(unc, unc_f, true, true);
  auto* ablate = app.add_subcommand("ablate", "graph x informativeness x seed grid; writes ablation.csv");
  add_common(ablate, ablate_f, true, false);
  auto* generate = app.add_subcommand("generate", "write the configured dataset as CSV files");
  add_common(generate, gen_f, false, false);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every parameter group");
  GradcheckOptions gc;
  std::vector<int> orders = {1, 2, 3};
  gradcheck->add_option("--seed", gc.seed, "seed for the toy population")->capture_default_str();
  gradcheck->add_option("--cheb-order", orders, "Chebyshev orders K to check")->capture_default_str();
  gradcheck->add_option("--subjects", gc.n_subjects, "subjects N (at most 10)")->capture_default_str();
  gradcheck->add_option("--features", gc.feature_dim, "feature width C")->capture_default_str();
  gradcheck->add_option("--metadata", gc.metadata_dim, "metadata width M")->capture_default_str();
  gradcheck->add_option("--layers", gc.num_layers, "graph-convolution layers L_G")->capture_default_str();
  gradcheck->add_option("--tolerance", gc.tolerance, "max relative error")->capture_default_str();
  gradcheck->footer("Config schema version " + std::to_string(kConfigSchemaVersion) + " (gradcheck takes no config).");

  app.add_subcommand("schema", "print the config schema with defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, e.what());
  }

  try {
    if (app.got_subcommand("schema")) {
      std::cout << config_schema_help();
    } else if (*train) {
      cmd_train(config_from(train_f), std::cout);
    } else if (*predict) {
      cmd_predict(config_from(predict_f), predict_f.checkpoint, std::cout);
    } else if (*unc) {
      cmd_uncertainty(config_from(unc_f), unc_f.checkpoint, std::cout);
    } else if (*ablate) {
      cmd_ablate(config_from(ablate_f), std::cout);
    } else if (*generate) {
      cmd_generate(config_from(gen_f), std::cout);
    } else if (*gradcheck) {
      if (gc.n_subjects < 2 || gc.n_subjects > 10) return fail(2, "--subjects must lie in [2, 10]");
      std::vector<GradcheckOptions> runs;
      for (int k : orders) {
        GradcheckOptions o = gc;
        o.cheb_order = k;
        runs.push_back(o);
      }
      const auto failed = cmd_gradcheck(runs, std::cout);
      if (!failed.empty()) {
        std::string list;
        for (const auto& f : failed) list += (list.empty() ? "" : ", ") + f;
        return fail(1, "gradient check failed for " + list);
      }
    }
  } catch (const ConfigError& e) {
    return fail(2, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
  return 0;
}
