#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "met2net/tensor.hpp"

namespace met2net::data {

/// Generation recipe for the procedural multivariate moving-sprites set.
/// Three variables per sample: variable 1 renders stroke sprites, variable 2
/// renders filled-shape sprites on the same trajectories, variable 3 is the
/// exact pixel inversion of variable 1.
struct SpriteSceneConfig {
    int height = 64;
    int width = 64;
    int n_channels = 3;  // fixed by the construction
    int n_sprites = 2;   // per variable
    int t_in = 10;
    int t_out = 10;
    std::int64_t n_train = 10000;
    std::int64_t n_test = 10000;
    /// "glyphs" for the built-in procedural sprites, otherwise a path to an
    /// IDX image file (its images alternate between the two sprite pools).
    std::string sprite_source = "glyphs";
    double min_speed = 2.0;
    double max_speed = 4.0;
    std::uint64_t seed = 0;
    void validate() const;
};

/// On-disk descriptor, stored as manifest.json next to the four blobs
/// (train_x/train_y/test_x/test_y.bin, raw little-endian f32, C-order
/// [sample, T or T', N, C, H, W]).
struct DatasetManifest {
    std::int64_t n_train = 0, n_test = 0;
    int t_in = 0, t_out = 0, n_vars = 0, channels = 1, height = 0, width = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> var_names;
    std::vector<double> mean, stddev;  // per variable, training split only
};

struct GenerateSummary {
    std::int64_t n_train = 0, n_test = 0;
    std::uint64_t bytes_written = 0;
};

/// One sprite's kinematic state; a frame advance integrates constant
/// velocity and reflects elastically off [0,xmax] x [0,ymax] (positions are
/// sprite-tile corners). Exposed for direct testing of the reflection rule.
struct SpriteState {
    double x = 0, y = 0, vx = 0, vy = 0;
};
void advance_sprite(SpriteState& s, double xmax, double ymax);

/// Writes manifest + blobs into `out_dir`. Each sample is reproducible from
/// (seed, global sample index) alone; test samples follow the training ones
/// in the index space.
GenerateSummary generate_mvm(const SpriteSceneConfig& cfg, const std::string& out_dir);

/// Fully-loaded splits, standardized per variable with the manifest's
/// training-split statistics.
struct Dataset {
    DatasetManifest manifest;
    Tensor train_x, train_y, test_x, test_y;  // standardized f32

    /// Map standardized values back to physical units (accepts the 6-D data
    /// layout or a 4-D [N,C,H,W] field).
    Tensor denormalize(const Tensor& t) const;
    Tensor normalize(const Tensor& t) const;
    /// Per-pixel mean of the denormalized training targets: [N,C,H,W].
    Tensor climatology() const;
};
Dataset load_dataset(const std::string& manifest_path);

/// The deterministic shuffle used for training iteration: identical
/// (n, seed) pairs give identical orders.
std::vector<std::int64_t> shuffled_order(std::int64_t n, std::uint64_t seed);

/// Distribution analysis of one variable of a [S,T,N,C,H,W] split (given in
/// physical units): value histograms of a spatial slice (sample 0, frame 0)
/// and of the center-pixel time series, both as fractions; and first-order
/// temporal/spatial difference populations standardized to zero mean / unit
/// variance with |z| > 3 dropped, histogrammed over [-3,3] as raw counts.
struct DistributionReport {
    int variable = 0;
    int n_bins = 0;
    std::vector<double> value_edges;         // n_bins + 1 edges
    std::vector<double> spatial_value_hist;  // fractions summing to 1
    std::vector<double> point_value_hist;    // fractions summing to 1
    struct DiffStats {
        double mean = 0.0;    // of the raw differences
        double stddev = 0.0;  // population std of the raw differences
        std::int64_t total = 0;
        std::int64_t kept = 0;               // after the 3-sigma filter
        std::vector<std::int64_t> hist;      // counts over [-3,3], sum == kept
    };
    DiffStats temporal, spatial;
};
DistributionReport analyze_distribution(const Tensor& frames, int variable, int n_bins = 32);

}  // namespace met2net::data
