#pragma once

// JSON run configuration shared by all CLI commands. Parsing is strict:
// unknown keys and mistyped values raise ConfigError naming the key.

#include "evgraph/datagen.hpp"
#include "evgraph/train.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace evgraph {

inline constexpr int kConfigSchemaVersion = 1;

struct DataPaths {
  std::filesystem::path features;
  std::filesystem::path metadata;
  std::filesystem::path labels;
};

struct AblateSpec {
  std::vector<GraphKind> graphs = {GraphKind::kRandom, GraphKind::kAffinity, GraphKind::kAdaptive};
  std::vector<Informativeness> informativeness = {Informativeness::kFull};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
};

struct RunConfig {
  std::uint64_t seed = 0;
  GraphKind graph = GraphKind::kAdaptive;
  TrainConfig train;
  SynthSpec synthetic;             // used when `data` is absent
  std::optional<DataPaths> data;   // CSV inputs
  BaselineGraphParams baseline;
  AblateSpec ablate;
  std::filesystem::path out = "evgraph_out";

  /// Propagates one seed to training, the synthetic generator and the random baseline graph.
  void set_seed(std::uint64_t s);
};

/// Parses a config document; relative data paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
/// Throws ConfigError naming the path when the file is missing or unreadable.
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

/// Human-readable key/default listing for --help.
std::string config_schema_help();

/// Loads CSV data when configured, otherwise generates the synthetic population.
Dataset load_run_data(const RunConfig& config);

}  // namespace evgraph
