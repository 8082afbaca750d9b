#pragma once

#include <string>
#include <vector>

#include "met2net/tensor.hpp"

namespace met2net::metrics {

/// Pooled error statistics over all elements (inputs must have equal shapes).
struct PixelMetrics {
    double mse = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
};
PixelMetrics pixel_metrics(const Tensor& pred, const Tensor& target);

/// Single-scale SSIM between two 2-D fields using the standard 11x11
/// Gaussian window (sigma 1.5), C1=(0.01L)^2, C2=(0.03L)^2, averaged over
/// the valid window positions. Throws ShapeError if a side is < 11.
double ssim(const Tensor& pred, const Tensor& target, double dynamic_range);

/// 10*log10(L^2 / mse); reported as 100 dB when mse < 1e-10.
double psnr(const Tensor& pred, const Tensor& target, double dynamic_range);

/// Pearson correlation over the flattened pair. Zero variance on either side
/// raises NumericError rather than returning NaN.
double pcc(const Tensor& pred, const Tensor& target);

/// Coefficient of determination 1 - SSE/SST (SST about the target mean).
double r2(const Tensor& pred, const Tensor& target);

/// Anomaly correlation coefficient: centered pattern correlation of
/// (pred - climatology) against (target - climatology). All three tensors
/// must share a shape.
double acc(const Tensor& pred, const Tensor& target, const Tensor& climatology);

/// Linear centered kernel alignment between row-major sample matrices
/// [n, p] and [n, q] (same n >= 2): with column-centered X and Y,
/// ||Y^T X||_F^2 / (||X^T X||_F * ||Y^T Y||_F), computed via n x n Gram
/// matrices. Degenerate (zero after centering) input raises NumericError.
double linear_cka(const Tensor& a, const Tensor& b);

/// One evaluated cell of the report CSV.
struct MetricRow {
    int variable = 0;
    int leadtime = 0;
    std::string metric;
    double value = 0.0;
};

/// Full per-variable, per-leadtime evaluation of a forecast against its
/// target, both [S, T', N, C, H, W] and already in physical units.
/// `climatology` is [N, C, H, W] (training-split per-pixel mean of targets);
/// `dynamic_range` feeds SSIM and PSNR. Emits, per (variable, leadtime):
/// mse, mae, rmse pooled over samples; ssim averaged over sample-channel
/// frames; psnr from the pooled mse; pcc per sample then averaged; r2 pooled;
/// acc per sample against climatology then averaged. Frames whose pcc/acc is
/// undefined (zero variance) are skipped from those averages; if every frame
/// of a cell is degenerate the error propagates.
std::vector<MetricRow> evaluate_forecast(const Tensor& pred, const Tensor& target,
                                         const Tensor& climatology, double dynamic_range);

}  // namespace met2net::metrics
