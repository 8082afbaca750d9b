#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "met2net/model.hpp"
#include "met2net/optimizer.hpp"

namespace met2net {

/// Schedule for the two-stage loop.
struct TrainConfig {
    double alpha = 0.999;  // momentum coefficient for the shadow modules
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 16;
    int epochs = 50;
    std::uint64_t seed = 0;
    bool its_enabled = true;  // implicit two-stage; false = plain end-to-end
    double w_rec = 1.0;       // weight of the stage-1 reconstruction loss
    double w_pre = 1.0;       // weight of the stage-2 prediction loss
    int val_interval = 1;     // epochs between validation passes
    void validate() const;
};

/// Per-step record. `monitor_mse` is the shadow-decoded reconstruction of the
/// stage-2 prediction — logged for inspection, never part of any loss (zero
/// in end-to-end mode).
struct StepReport {
    double loss_rec = 0.0;
    double loss_pre = 0.0;
    double total = 0.0;
    std::int64_t step = 0;
    double wall_ms = 0.0;
    double monitor_mse = 0.0;
};

/// One appended line of history.csv
/// (header `epoch,step,loss_rec,loss_pre,total,val_mse`).
struct HistoryRow {
    int epoch = 0;
    std::int64_t step = 0;
    double loss_rec = 0.0;
    double loss_pre = 0.0;
    double total = 0.0;
    std::optional<double> val_mse;  // only on the closing row of a validated epoch
};

/// theta_m <- alpha * theta_m + (1 - alpha) * theta, elementwise in double,
/// stored back at the parameter dtype. The collections pair positionally and
/// every shadow path must be "m." + its primary's path.
void momentum_update(const ParameterCollection& shadow, const ParameterCollection& primary,
                     double alpha);

/// One implicit two-stage step on batch (x [B,T,N,C,H,W], y [B,T',N,C,H,W]):
/// stage-1 reconstruction through the frozen shadow translator, momentum
/// update of the shadow codecs, stage-2 latent prediction from detached
/// shadow-encoder tokens, momentum update of the shadow translator, then one
/// backward of w_rec*loss_rec + w_pre*loss_pre and one Adam step over every
/// primary parameter. Raises NumericError naming the stage if a loss turns
/// non-finite.
StepReport train_step(Met2Net& model, Adam& opt, const Tensor& x, const Tensor& y,
                      const TrainConfig& cfg);

/// Ablation baseline: one ordinary step on mse(decode(translate(encode(x))), y)
/// with every primary parameter trainable; shadows are left untouched.
StepReport train_step_e2e(Met2Net& model, Adam& opt, const Tensor& x, const Tensor& y,
                          const TrainConfig& cfg);

/// In-memory training data. Validation tensors may be undefined to skip
/// validation (then no best checkpoint is tracked).
struct FitData {
    Tensor train_x, train_y;  // [S,T,N,C,H,W] / [S,T',N,C,H,W]
    Tensor val_x, val_y;
};

/// Mean squared error of forward_inference over a split, batched, in the
/// units the tensors are given in.
double validation_mse(Met2Net& model, const Tensor& x, const Tensor& y, int batch_size);

/// Epoch loop: seeded shuffle, train_step or train_step_e2e per batch
/// (partial final batch included), periodic validation, best-checkpoint
/// retention by validation MSE, history.csv emission. With a non-empty
/// `run_dir` writes `history.csv`, `checkpoints/latest`, and
/// `checkpoints/best`; with `resume` picks up from `checkpoints/latest`,
/// discarding any history rows the interrupted epoch had written. Returns the
/// rows produced by this call.
std::vector<HistoryRow> fit(Met2Net& model, const FitData& data, const TrainConfig& cfg,
                            const std::string& run_dir,
                            const nlohmann::json& config_echo = nlohmann::json::object(),
                            bool resume = false);

}  // namespace met2net
