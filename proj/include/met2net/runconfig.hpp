#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "met2net/data.hpp"
#include "met2net/model.hpp"
#include "met2net/train.hpp"

namespace met2net {

struct EvalConfig {
    std::string split = "test";  // "train" or "test"
    int batch_size = 16;
    int n_bins = 32;           // histogram resolution for analyze
    int cka_samples = 64;      // representation-similarity sample budget, <= 512
    std::string cka_var_a = "ch1";
    std::string cka_var_b = "ch1";
    double data_range = 1.0;   // dynamic range L for SSIM/PSNR
    int heatmap_samples = 1;   // PGM error maps for this many leading samples
    void validate() const;
};

/// The three architecture/training mechanisms that can be toggled
/// independently: per-variable codecs, variable attention, and the implicit
/// two-stage schedule. All-false is the plain end-to-end baseline.
struct AblationConfig {
    bool med = true;
    bool va = true;
    bool its = true;
};

/// Fully-resolved run configuration. Dataset geometry lives in `data`; the
/// model section carries only architecture hyperparameters and is combined
/// with a concrete dataset manifest via model_for().
struct RunConfig {
    int latent_dim = 8;
    int down_factor = 2;
    int enc_depth = 2;
    int translator_depth = 2;
    int heads = 1;
    bool inference_use_shadow = false;
    std::string dtype = "f32";

    TrainConfig train;
    data::SpriteSceneConfig data;
    std::string data_dir = "data";
    EvalConfig eval;
    AblationConfig ablation;

    nlohmann::json echo;  // the merged JSON, echoed into run directories

    ModelConfig model_for(const data::DatasetManifest& m) const;
};

/// Every recognized key with its default value (the schema).
nlohmann::json default_run_config_json();

/// Extracts a RunConfig from a merged JSON document. Unknown keys and
/// type-mismatched values raise ConfigError naming the dotted path.
RunConfig parse_run_config(const nlohmann::json& merged);

/// defaults <- optional config file <- dotted "a.b.c=value" overrides.
/// Override values parse as JSON scalars, falling back to plain strings.
RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides);

}  // namespace met2net
