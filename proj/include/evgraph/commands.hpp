#pragma once

// The CLI commands as library functions. Each writes its artifacts under
// config.out and a short human summary to `log`; nothing time-dependent is
// written to disk, so reruns reproduce artifacts byte for byte.

#include "evgraph/checkpoint.hpp"
#include "evgraph/config.hpp"
#include "evgraph/gradcheck.hpp"
#include "evgraph/uncertainty.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

namespace evgraph {

/// Command-line values that take precedence over the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<int> t_passes;
  std::optional<GraphKind> graph;
};

/// Loads `config_path` (defaults when empty) and applies the overrides.
RunConfig resolve_config(const std::filesystem::path& config_path, const Overrides& overrides);

/// EVGRAPH_THREADS when set to a positive integer, else the hardware count.
int thread_budget();

/// Writes checkpoint.json and history.csv; returns the final validation accuracy.
double cmd_train(const RunConfig& config, std::ostream& log);

/// Deterministic single-pass predictions -> predictions.csv.
void cmd_predict(const RunConfig& config, const std::filesystem::path& checkpoint, std::ostream& log);

/// MCED report -> uncertainty.csv (subject_id, predicted_class, p_0.., entropy).
UncertaintyReport cmd_uncertainty(const RunConfig& config, const std::filesystem::path& checkpoint,
                                  std::ostream& log);

/// Writes the configured dataset (synthetic or loaded) as features/metadata/labels CSV.
void cmd_generate(const RunConfig& config, std::ostream& log);

struct AblationRun {
  GraphKind graph = GraphKind::kAdaptive;
  std::optional<Informativeness> informativeness;  // empty for file data
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;  // deterministic single pass
  double test_auc = 0.0;
  double test_f1 = 0.0;
  double mced_accuracy = 0.0;
  double test_uncertainty = 0.0;  // mean MCED entropy over test subjects
  double all_uncertainty = 0.0;   // ... and over every subject
  double max_entropy = 0.0;
};

/// Mean with a normal-approximation 95% interval, mean +- 1.96 sd / sqrt(n).
struct Interval {
  double mean = 0.0;
  double half_width = 0.0;
};

Interval mean_interval(const std::vector<double>& values);

struct AblationCell {
  GraphKind graph = GraphKind::kAdaptive;
  std::optional<Informativeness> informativeness;
  int runs = 0;
  Interval accuracy;
  Interval auc;
  Interval mced_accuracy;
  Interval uncertainty;
};

struct AblationResult {
  std::vector<AblationRun> runs;    // informativeness-major, then graph, then seed
  std::vector<AblationCell> cells;  // same order without the seed axis
};

/// One training + MCED per grid point; runs execute on up to `threads`
/// workers and results are ordered independently of scheduling.
AblationResult run_ablation(const RunConfig& config, int threads);

/// run_ablation, then ablation.csv, ablation_runs.csv and a table on `log`.
AblationResult cmd_ablate(const RunConfig& config, std::ostream& log);

/// Prints one line per group and configuration; returns the failed group
/// names prefixed with "K=<k>/".
std::vector<std::string> cmd_gradcheck(const std::vector<GradcheckOptions>& runs, std::ostream& log);

}  // namespace evgraph
