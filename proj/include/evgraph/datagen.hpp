#pragma once

// Dataset ingestion (CSV), the synthetic population generator and the
// fixed baseline graphs (random, affinity).

#include "evgraph/graph.hpp"
#include "evgraph/numcore.hpp"
#include "evgraph/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace evgraph {

enum class Split { kTrain, kVal, kTest, kUnlabeled };

std::string_view to_string(Split s);
std::optional<Split> parse_split(std::string_view s);

inline constexpr int kNoLabel = -1;

/// Class labels plus a disjoint train/val/test/unlabeled partition.
struct LabelMask {
  std::vector<int> labels;  // kNoLabel when absent
  std::vector<Split> splits;
  int num_classes = 2;

  std::size_t size() const { return labels.size(); }
  std::vector<Index> indices(Split s) const;
  /// Throws ConfigError if a train/val/test subject lacks a valid label.
  void validate() const;
};

struct ColumnInfo {
  std::string name;
  bool categorical = false;
  std::vector<std::string> categories;  // sorted; one expanded column each
};

struct Dataset {
  std::vector<std::string> ids;
  Matrix features;   // N x C
  Matrix metadata;   // N x M, categorical columns one-hot expanded
  std::vector<ColumnInfo> columns;                // source metadata schema
  std::vector<std::string> metadata_names;        // expanded column names
  LabelMask mask;

  Index size() const { return features.rows(); }
  int num_classes() const { return mask.num_classes; }
};

/// Shortest decimal form that reads back to the same double.
std::string format_number(double v);

/// features.csv: subject_id + numeric columns.
/// metadata.csv: subject_id + columns whose header cells are `name` or
///   `name:num` (continuous) and `name:cat` (categorical, one-hot expanded).
/// labels.csv: subject_id,class,split with split in {train,val,test,unlabeled};
///   class may be empty for unlabeled subjects. Subjects missing from the
///   file are unlabeled.
/// Subject order follows features.csv. Throws ParseError with file:line.
Dataset load_dataset(const std::filesystem::path& features_path, const std::filesystem::path& metadata_path,
                     const std::filesystem::path& labels_path);

/// Writes the three CSV files (metadata as expanded numeric columns).
void write_dataset(const Dataset& data, const std::filesystem::path& features_path,
                   const std::filesystem::path& metadata_path, const std::filesystem::path& labels_path);

enum class Informativeness { kNoise, kPartial, kFull };

std::string_view to_string(Informativeness i);
std::optional<Informativeness> parse_informativeness(std::string_view s);

/// Synthetic population. Every subject has a class y and an acquisition site
/// s; features are class centroid + site offset + Gaussian noise. Metadata
/// columns 0 and 1 are binary, the rest standard normal nuisance:
///   noise   - both binary columns are coin flips;
///   partial - column 0 is y with probability 1 - partial_flip (else another class), column 1 a coin flip;
///   full    - column 0 is y and column 1 is s, and the nuisance columns are
///             a fixed normal code per (y, s) group, so every column is a
///             function of the group.
struct SynthSpec {
  int n_subjects = 200;
  int n_classes = 2;
  int feature_dim = 32;
  int metadata_dim = 6;
  int n_sites = 2;
  double class_separation = 0.9;  // distance of each class centroid from the origin
  double site_effect = 1.0;       // norm of each site offset
  double feature_noise = 1.0;     // per-coordinate noise std
  double partial_flip = 0.2;
  Informativeness informativeness = Informativeness::kFull;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
};

/// Deterministic in `spec`. Splits are stratified per class.
Dataset generate_synthetic(const SynthSpec& spec);

enum class GraphKind { kAdaptive, kRandom, kAffinity };

std::string_view to_string(GraphKind k);
std::optional<GraphKind> parse_graph_kind(std::string_view s);

struct BaselineGraphParams {
  double random_p = 0.1;                   // edge probability for the random graph
  std::vector<double> affinity_beta = {0.3};  // one per metadata column, or one shared value
  std::uint64_t seed = 0;
};

/// Column similarity for the affinity graph: exp(-|a - b|) on standardized values.
double column_similarity(double a, double b);

/// random: symmetric Bernoulli(p) unit edges. affinity: edge iff every
/// standardized metadata column similarity exceeds its beta. Both keep the
/// unit diagonal. kAdaptive is rejected with ConfigError.
PopulationGraph build_baseline_graph(GraphKind kind, const Dataset& data, const BaselineGraphParams& params);

}  // namespace evgraph
