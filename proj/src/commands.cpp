#include "evgraph/commands.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <thread>

namespace evgraph {

namespace fs = std::filesystem;

RunConfig resolve_config(const fs::path& config_path, const Overrides& o) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  if (o.seed) cfg.set_seed(*o.seed);
  if (o.out) cfg.out = *o.out;
  if (o.t_passes) {
    if (*o.t_passes < 1) throw ConfigError("--t-passes must be >= 1, got " + std::to_string(*o.t_passes));
    cfg.train.t_mc = *o.t_passes;
  }
  if (o.graph) cfg.graph = *o.graph;
  return cfg;
}

int thread_budget() {
  if (const char* env = std::getenv("EVGRAPH_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

std::ofstream open_artifact(const RunConfig& config, const std::string& name) {
  fs::create_directories(config.out);
  const fs::path path = config.out / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

fs::path default_checkpoint(const RunConfig& config, const fs::path& checkpoint) {
  return checkpoint.empty() ? config.out / "checkpoint.json" : checkpoint;
}

// Problem for a trained checkpoint: the graph kind and metadata statistics
// come from the checkpoint, the subjects from the configured data.
Problem checkpoint_problem(const RunConfig& config, const Dataset& data, const Checkpoint& ckpt) {
  const auto kind = parse_graph_kind(ckpt.graph);
  if (!kind) throw ConfigError("checkpoint: unknown graph kind '" + ckpt.graph + "'");
  check_compatible(ckpt.params.dims, static_cast<int>(data.features.cols()), static_cast<int>(data.metadata.cols()),
                   data.num_classes());
  Problem problem = make_problem(data, *kind, config.baseline);
  problem.stats = ckpt.stats;
  problem.mask.num_classes = ckpt.params.dims.num_classes;
  return problem;
}

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

std::string cell_label(const std::optional<Informativeness>& i) {
  return i ? std::string(to_string(*i)) : std::string("data");
}

}  // namespace

double cmd_train(const RunConfig& config, std::ostream& log) {
  const Dataset data = load_run_data(config);
  const Problem problem = make_problem(data, config.graph, config.baseline);
  const FitResult result = fit(problem, config.train);

  Checkpoint ckpt;
  ckpt.seed = config.seed;
  ckpt.graph = std::string(to_string(config.graph));
  ckpt.lambda_max = config.train.lambda_max;
  ckpt.stats = problem.stats;
  ckpt.params = result.params;
  fs::create_directories(config.out);
  save_checkpoint(ckpt, config.out / "checkpoint.json");

  auto history = open_artifact(config, "history.csv");
  history << "epoch,train_loss,val_accuracy\n";
  for (const auto& r : result.history) {
    history << r.epoch << ',' << format_number(r.train_loss) << ',' << format_number(r.val_accuracy) << '\n';
  }

  const double val = result.history.empty() ? std::nan("") : result.history.back().val_accuracy;
  const Matrix probs = predict(problem, result.params, config.train.lambda_max);
  log << "trained " << to_string(config.graph) << " model for " << config.train.epochs << " epochs on "
      << problem.size() << " subjects\n";
  log << "final val accuracy: " << format_metric(val) << "\n";
  if (!problem.mask.indices(Split::kTest).empty()) {
    log << "test accuracy: " << format_metric(accuracy(probs, problem.mask, Split::kTest)) << "\n";
  }
  log << "wrote " << (config.out / "checkpoint.json").string() << " and " << (config.out / "history.csv").string()
      << "\n";
  return val;
}

void cmd_predict(const RunConfig& config, const fs::path& checkpoint, std::ostream& log) {
  const Checkpoint ckpt = load_checkpoint(default_checkpoint(config, checkpoint));
  const Dataset data = load_run_data(config);
  const Problem problem = checkpoint_problem(config, data, ckpt);
  const Matrix probs = predict(problem, ckpt.params, ckpt.lambda_max);
  const auto classes = argmax_rows(probs);

  auto out = open_artifact(config, "predictions.csv");
  out << "subject_id,split,predicted_class";
  for (Index c = 0; c < probs.cols(); ++c) out << ",p_" << c;
  out << '\n';
  for (Index i = 0; i < probs.rows(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    out << data.ids[k] << ',' << to_string(problem.mask.splits[k]) << ',' << classes[k];
    for (Index c = 0; c < probs.cols(); ++c) out << ',' << format_number(probs(i, c));
    out << '\n';
  }
  if (!problem.mask.indices(Split::kTest).empty()) {
    log << "test accuracy: " << format_metric(accuracy(probs, problem.mask, Split::kTest)) << "\n";
  }
  log << "wrote " << (config.out / "predictions.csv").string() << "\n";
}

UncertaintyReport cmd_uncertainty(const RunConfig& config, const fs::path& checkpoint, std::ostream& log) {
  const Checkpoint ckpt = load_checkpoint(default_checkpoint(config, checkpoint));
  const Dataset data = load_run_data(config);
  const Problem problem = checkpoint_problem(config, data, ckpt);
  McedOptions mo;
  mo.t_passes = config.train.t_mc;
  mo.edge_dropout = config.train.edge_dropout;
  mo.lambda_max = ckpt.lambda_max;
  mo.seed = config.seed;
  mo.threads = thread_budget();
  const UncertaintyReport report = mced(problem, ckpt.params, mo);
  const auto classes = mced_ensemble_predict(report);

  auto out = open_artifact(config, "uncertainty.csv");
  out << "subject_id,predicted_class";
  for (Index c = 0; c < report.mean_probs.cols(); ++c) out << ",p_" << c;
  out << ",entropy\n";
  for (Index i = 0; i < report.mean_probs.rows(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    out << data.ids[k] << ',' << classes[k];
    for (Index c = 0; c < report.mean_probs.cols(); ++c) out << ',' << format_number(report.mean_probs(i, c));
    out << ',' << format_number(report.entropy[k]) << '\n';
  }
  log << "MCED with T=" << mo.t_passes << ", edge dropout " << mo.edge_dropout << "\n";
  if (!problem.mask.indices(Split::kTest).empty()) {
    log << "mean test uncertainty: " << format_metric(report.mean_entropy(problem.mask, Split::kTest)) << "\n";
    log << "MCED test accuracy: " << format_metric(accuracy(report.mean_probs, problem.mask, Split::kTest)) << "\n";
  }
  log << "mean uncertainty (all subjects): " << format_metric(report.mean_entropy()) << "\n";
  log << "wrote " << (config.out / "uncertainty.csv").string() << "\n";
  return report;
}

void cmd_generate(const RunConfig& config, std::ostream& log) {
  const Dataset data = load_run_data(config);
  fs::create_directories(config.out);
  write_dataset(data, config.out / "features.csv", config.out / "metadata.csv", config.out / "labels.csv");
  log << "wrote " << data.size() << " subjects to " << config.out.string() << "\n";
}

Interval mean_interval(const std::vector<double>& values) {
  Interval iv;
  if (values.empty()) return {std::nan(""), std::nan("")};
  const auto n = static_cast<double>(values.size());
  for (double v : values) iv.mean += v;
  iv.mean /= n;
  if (values.size() < 2) return iv;
  double ss = 0.0;
  for (double v : values) ss += (v - iv.mean) * (v - iv.mean);
  iv.half_width = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return iv;
}

AblationResult run_ablation(const RunConfig& config, int threads) {
  std::vector<std::optional<Informativeness>> levels;
  if (config.data) {
    levels.push_back(std::nullopt);
  } else {
    levels.assign(config.ablate.informativeness.begin(), config.ablate.informativeness.end());
  }

  AblationResult result;
  for (const auto& level : levels) {
    for (GraphKind g : config.ablate.graphs) {
      for (std::uint64_t seed : config.ablate.seeds) {
        AblationRun run;
        run.graph = g;
        run.informativeness = level;
        run.seed = seed;
        result.runs.push_back(run);
      }
    }
  }

  auto execute = [&](AblationRun& run) {
    RunConfig rc = config;
    rc.set_seed(run.seed);
    rc.graph = run.graph;
    if (run.informativeness) rc.synthetic.informativeness = *run.informativeness;
    const Dataset data = load_run_data(rc);
    const Problem problem = make_problem(data, rc.graph, rc.baseline);
    const FitResult fitted = fit(problem, rc.train);
    const Matrix probs = predict(problem, fitted.params, rc.train.lambda_max);
    McedOptions mo;
    mo.t_passes = rc.train.t_mc;
    mo.edge_dropout = rc.train.edge_dropout;
    mo.lambda_max = rc.train.lambda_max;
    mo.seed = rc.seed;
    const UncertaintyReport report = mced(problem, fitted.params, mo);
    run.test_accuracy = accuracy(probs, problem.mask, Split::kTest);
    run.test_auc = auc(probs, problem.mask, Split::kTest);
    run.test_f1 = f1_score(probs, problem.mask, Split::kTest);
    run.mced_accuracy = accuracy(report.mean_probs, problem.mask, Split::kTest);
    run.test_uncertainty = report.mean_entropy(problem.mask, Split::kTest);
    run.all_uncertainty = report.mean_entropy();
    run.max_entropy = *std::max_element(report.entropy.begin(), report.entropy.end());
  };

  const int workers = std::clamp(threads, 1, static_cast<int>(std::max<std::size_t>(result.runs.size(), 1)));
  if (workers == 1) {
    for (auto& run : result.runs) execute(run);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
      std::vector<std::jthread> pool;
      for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t i = next++; i < result.runs.size(); i = next++) {
            try {
              execute(result.runs[i]);
            } catch (...) {
              std::lock_guard lock(failure_mutex);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

  const std::size_t per_cell = config.ablate.seeds.size();
  for (std::size_t start = 0; start < result.runs.size(); start += per_cell) {
    AblationCell cell;
    cell.graph = result.runs[start].graph;
    cell.informativeness = result.runs[start].informativeness;
    cell.runs = static_cast<int>(per_cell);
    std::vector<double> acc, au, macc, unc;
    for (std::size_t i = start; i < start + per_cell; ++i) {
      acc.push_back(result.runs[i].test_accuracy);
      au.push_back(result.runs[i].test_auc);
      macc.push_back(result.runs[i].mced_accuracy);
      unc.push_back(result.runs[i].test_uncertainty);
    }
    cell.accuracy = mean_interval(acc);
    cell.auc = mean_interval(au);
    cell.mced_accuracy = mean_interval(macc);
    cell.uncertainty = mean_interval(unc);
    result.cells.push_back(cell);
  }
  return result;
}

AblationResult cmd_ablate(const RunConfig& config, std::ostream& log) {
  const AblationResult result = run_ablation(config, thread_budget());

  auto cells = open_artifact(config, "ablation.csv");
  cells << "informativeness,graph,runs,accuracy_mean,accuracy_ci95,auc_mean,auc_ci95,mced_accuracy_mean,"
           "mced_accuracy_ci95,uncertainty_mean,uncertainty_ci95\n";
  for (const auto& c : result.cells) {
    cells << cell_label(c.informativeness) << ',' << to_string(c.graph) << ',' << c.runs;
    for (const Interval* iv : {&c.accuracy, &c.auc, &c.mced_accuracy, &c.uncertainty}) {
      cells << ',' << format_number(iv->mean) << ',' << format_number(iv->half_width);
    }
    cells << '\n';
  }

  auto runs = open_artifact(config, "ablation_runs.csv");
  runs << "informativeness,graph,seed,test_accuracy,test_auc,test_f1,mced_accuracy,test_uncertainty,"
          "all_uncertainty\n";
  for (const auto& r : result.runs) {
    runs << cell_label(r.informativeness) << ',' << to_string(r.graph) << ',' << r.seed;
    for (double v : {r.test_accuracy, r.test_auc, r.test_f1, r.mced_accuracy, r.test_uncertainty, r.all_uncertainty}) {
      runs << ',' << format_number(v);
    }
    runs << '\n';
  }

  auto pm = [](const Interval& iv) { return format_metric(iv.mean) + " +- " + format_metric(iv.half_width); };
  log << std::left << std::setw(16) << "associations" << std::setw(10) << "graph" << std::setw(20) << "accuracy"
      << std::setw(20) << "auc" << std::setw(20) << "mced accuracy" << "uncertainty\n";
  for (const auto& c : result.cells) {
    log << std::left << std::setw(16) << cell_label(c.informativeness) << std::setw(10) << to_string(c.graph)
        << std::setw(20) << pm(c.accuracy) << std::setw(20) << pm(c.auc) << std::setw(20) << pm(c.mced_accuracy)
        << pm(c.uncertainty) << "\n";
  }
  log << "wrote " << (config.out / "ablation.csv").string() << " and " << (config.out / "ablation_runs.csv").string()
      << "\n";
  return result;
}

std::vector<std::string> cmd_gradcheck(const std::vector<GradcheckOptions>& runs, std::ostream& log) {
  std::vector<std::string> failed;
  for (const auto& o : runs) {
    const GradcheckReport report = run_gradcheck(o);
    log << "K=" << o.cheb_order << " N=" << o.n_subjects << " C=" << o.feature_dim << " M=" << o.metadata_dim
        << " L_G=" << o.num_layers << "\n";
    for (const auto& g : report.groups) {
      log << "  " << std::left << std::setw(14) << g.group << " entries=" << std::setw(5) << g.entries
          << " max_rel_error=" << std::scientific << std::setprecision(3) << g.max_rel_error
          << " grad_norm=" << g.analytic_norm << std::defaultfloat << (g.passed ? "  ok" : "  FAIL") << "\n";
      if (!g.passed) failed.push_back("K=" + std::to_string(o.cheb_order) + "/" + g.group);
    }
  }
  log << (failed.empty() ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return failed;
}

}  // namespace evgraph
