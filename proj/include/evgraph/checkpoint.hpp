#pragma once

// Trained-model checkpoints as JSON.
//
//   {
//     "format": "evgraph-checkpoint", "format_version": 1,
//     "seed": 0, "graph": "adaptive",
//     "dims": {feature_dim, metadata_dim, num_classes, cheb_order, hidden: [..],
//              pae_hidden, predictor_hidden},
//     "pae_dropout": 0.2, "lambda_max": 2.0,
//     "norm_stats": {"mean": [..], "stddev": [..]},
//     "tensors": [{"name": "pae.w1", "rows": R, "cols": C, "data": [row-major]}, ...]
//   }
//
// Numbers are written with shortest round-trip formatting, so save/load is
// exact and identical parameters give identical bytes.

#include "evgraph/model.hpp"
#include "evgraph/pae.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace evgraph {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kCheckpointFormat = "evgraph-checkpoint";

struct Checkpoint {
  std::uint64_t seed = 0;
  std::string graph = "adaptive";
  double lambda_max = kDefaultLambdaMax;
  NormStats stats;
  ModelParams params;
};

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
/// Throws ConfigError on a wrong format tag or version, missing fields and
/// tensor shapes that disagree with the stored dims.
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws ConfigError naming expected and actual sizes when the checkpoint
/// cannot be applied to data with these feature/metadata widths and classes.
void check_compatible(const ModelDims& dims, int feature_dim, int metadata_dim, int num_classes);

}  // namespace evgraph
