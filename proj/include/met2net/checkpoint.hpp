#pragma once

#include <cstdint>
#include <limits>
#include <string>

#include "json.hpp"
#include "met2net/model.hpp"
#include "met2net/optimizer.hpp"

namespace met2net {

/// Bookkeeping stored alongside the weights. `config` is an opaque echo of
/// the run configuration; the model's architectural fields are serialized
/// separately and verified on load.
struct CheckpointMeta {
    nlohmann::json config = nlohmann::json::object();
    std::int64_t step = 0;
    int epoch = 0;
    std::string rng_state;  // text serialization of the shuffle RNG
    double best_val_mse = std::numeric_limits<double>::infinity();  // inf = none yet
};

/// Directory layout: `manifest.json` plus `params/<path>.bin` raw
/// little-endian blobs at the model dtype — every primary, every shadow, and
/// the optimizer moments as `opt.m.<path>` / `opt.v.<path>`.
void save_checkpoint(const std::string& dir, Met2Net& model, const Adam& opt,
                     const CheckpointMeta& meta);

/// Restores parameters, shadows, optimizer moments, and bookkeeping in place.
/// Raises DataError for a corrupt manifest, a missing or truncated blob, or a
/// path-set mismatch; ConfigError when the checkpointed architecture disagrees
/// with the live model.
CheckpointMeta load_checkpoint(const std::string& dir, Met2Net& model, Adam& opt);

/// The architecture block that save_checkpoint embeds and load_checkpoint
/// verifies (exposed for the config plumbing and its tests).
nlohmann::json model_config_json(const ModelConfig& cfg);

/// Inverse of model_config_json: rebuilds an architecture from a
/// checkpoint's embedded model block (DataError on malformed input).
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace met2net
