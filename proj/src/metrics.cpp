#include "met2net/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "met2net/common.hpp"
#include "eigen_gemm.hpp"

namespace met2net::metrics {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(who) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
    }
}

/// Pearson correlation with explicit degenerate-input reporting.
double pearson(const Tensor& x, const Tensor& y, const char* who) {
    const std::int64_t n = x.numel();
    double mx = 0.0, my = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        mx += x.at(i);
        my += y.at(i);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double dx = x.at(i) - mx, dy = y.at(i) - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw NumericError(std::string(who) + ": undefined for zero-variance input");
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

PixelMetrics pixel_metrics(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "pixel_metrics");
    const std::int64_t n = pred.numel();
    double se = 0.0, ae = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = pred.at(i) - target.at(i);
        se += d * d;
        ae += std::abs(d);
    }
    PixelMetrics r;
    r.mse = se / static_cast<double>(n);
    r.mae = ae / static_cast<double>(n);
    r.rmse = std::sqrt(r.mse);
    return r;
}

double ssim(const Tensor& pred, const Tensor& target, double dynamic_range) {
    require_same_shape(pred, target, "ssim");
    if (pred.ndim() != 2) throw ShapeError("ssim: expects 2-D fields");
    if (dynamic_range <= 0.0) throw ConfigError("ssim: dynamic range must be positive");
    constexpr int K = 11;
    const std::int64_t H = pred.dim(0), W = pred.dim(1);
    if (H < K || W < K) {
        throw ShapeError("ssim: field " + shape_str(pred.shape()) +
                         " is smaller than the 11x11 window");
    }

    // Normalized Gaussian window, sigma = 1.5.
    static const std::vector<double> win = [] {
        std::vector<double> w(K * K);
        double sum = 0.0;
        for (int i = 0; i < K; ++i) {
            for (int j = 0; j < K; ++j) {
                const double di = i - K / 2, dj = j - K / 2;
                w[i * K + j] = std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
                sum += w[i * K + j];
            }
        }
        for (double& v : w) v /= sum;
        return w;
    }();

    const double c1 = 0.01 * dynamic_range * 0.01 * dynamic_range;
    const double c2 = 0.03 * dynamic_range * 0.03 * dynamic_range;
    double total = 0.0;
    std::int64_t windows = 0;
    for (std::int64_t oy = 0; oy + K <= H; ++oy) {
        for (std::int64_t ox = 0; ox + K <= W; ++ox) {
            double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
            for (int i = 0; i < K; ++i) {
                for (int j = 0; j < K; ++j) {
                    const double w = win[i * K + j];
                    const double px = pred.at((oy + i) * W + ox + j);
                    const double py = target.at((oy + i) * W + ox + j);
                    mx += w * px;
                    my += w * py;
                    sxx += w * px * px;
                    syy += w * py * py;
                    sxy += w * px * py;
                }
            }
            sxx -= mx * mx;
            syy -= my * my;
            sxy -= mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) /
                     ((mx * mx + my * my + c1) * (sxx + syy + c2));
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

double psnr(const Tensor& pred, const Tensor& target, double dynamic_range) {
    require_same_shape(pred, target, "psnr");
    if (dynamic_range <= 0.0) throw ConfigError("psnr: dynamic range must be positive");
    const double mse = pixel_metrics(pred, target).mse;
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(dynamic_range * dynamic_range / mse);
}

double pcc(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "pcc");
    return pearson(pred, target, "pcc");
}

double r2(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "r2");
    const std::int64_t n = pred.numel();
    double mt = 0.0;
    for (std::int64_t i = 0; i < n; ++i) mt += target.at(i);
    mt /= static_cast<double>(n);
    double sse = 0.0, sst = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double e = pred.at(i) - target.at(i);
        const double d = target.at(i) - mt;
        sse += e * e;
        sst += d * d;
    }
    if (sst == 0.0) throw NumericError("r2: undefined for zero-variance target");
    return 1.0 - sse / sst;
}

double acc(const Tensor& pred, const Tensor& target, const Tensor& climatology) {
    require_same_shape(pred, target, "acc");
    require_same_shape(pred, climatology, "acc");
    Tensor pa(pred.shape(), Dtype::F64), ta(pred.shape(), Dtype::F64);
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        pa.set(i, pred.at(i) - climatology.at(i));
        ta.set(i, target.at(i) - climatology.at(i));
    }
    return pearson(pa, ta, "acc");
}

double linear_cka(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) throw ShapeError("linear_cka: expects [n,p] matrices");
    const std::int64_t n = a.dim(0);
    if (b.dim(0) != n) {
        throw ShapeError("linear_cka: row counts differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    if (n < 2) throw ShapeError("linear_cka: needs at least 2 rows");

    // n x n Gram matrices (in double), then double-centering: the centered
    // Gram of A equals the Gram of column-centered A.
    auto gram = [n](const Tensor& m) {
        std::vector<double> rows(static_cast<std::size_t>(n) * m.dim(1));
        for (std::int64_t i = 0; i < m.numel(); ++i) rows[i] = m.at(i);
        std::vector<double> g(static_cast<std::size_t>(n) * n);
        met2net::detail::gemm<double>(rows.data(), rows.data(), g.data(), n, m.dim(1), n, false,
                                      true);
        std::vector<double> rmean(n, 0.0);
        double gmean = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < n; ++j) rmean[i] += g[i * n + j];
            rmean[i] /= static_cast<double>(n);
            gmean += rmean[i];
        }
        gmean /= static_cast<double>(n);
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
                g[i * n + j] += gmean - rmean[i] - rmean[j];  // Gram is symmetric
            }
        }
        return g;
    };
    const std::vector<double> ga = gram(a), gb = gram(b);
    double num = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < ga.size(); ++i) {
        num += ga[i] * gb[i];
        na += ga[i] * ga[i];
        nb += gb[i] * gb[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw NumericError("linear_cka: degenerate (constant) representation");
    }
    return num / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<MetricRow> evaluate_forecast(const Tensor& pred, const Tensor& target,
                                         const Tensor& climatology, double dynamic_range) {
    require_same_shape(pred, target, "evaluate_forecast");
    if (pred.ndim() != 6) throw ShapeError("evaluate_forecast: expects [S,T',N,C,H,W]");
    const std::int64_t S = pred.dim(0), T = pred.dim(1), N = pred.dim(2), C = pred.dim(3),
                       H = pred.dim(4), W = pred.dim(5);
    if (climatology.shape() != Shape{N, C, H, W}) {
        throw ShapeError("evaluate_forecast: climatology " + shape_str(climatology.shape()) +
                         " does not match [N,C,H,W]");
    }

    const std::int64_t chw = C * H * W;
    auto frame_of = [&](const Tensor& src, std::int64_t s, std::int64_t t, std::int64_t n) {
        Tensor f({C, H, W}, Dtype::F64);
        const std::int64_t base = ((s * T + t) * N + n) * chw;
        for (std::int64_t i = 0; i < chw; ++i) f.set(i, src.at(base + i));
        return f;
    };
    auto clim_of = [&](std::int64_t n) {
        Tensor f({C, H, W}, Dtype::F64);
        for (std::int64_t i = 0; i < chw; ++i) f.set(i, climatology.at(n * chw + i));
        return f;
    };
    auto channel_of = [&](const Tensor& f, std::int64_t c) {
        Tensor out({H, W}, Dtype::F64);
        for (std::int64_t i = 0; i < H * W; ++i) out.set(i, f.at(c * H * W + i));
        return out;
    };

    std::vector<MetricRow> rows;
    rows.reserve(static_cast<std::size_t>(N * T) * 8);
    for (std::int64_t n = 0; n < N; ++n) {
        const Tensor clim = clim_of(n);
        for (std::int64_t t = 0; t < T; ++t) {
            // Pooled error statistics over every sample of this cell.
            double se = 0.0, ae = 0.0, tsum = 0.0;
            for (std::int64_t s = 0; s < S; ++s) {
                const std::int64_t base = ((s * T + t) * N + n) * chw;
                for (std::int64_t i = 0; i < chw; ++i) {
                    const double d = pred.at(base + i) - target.at(base + i);
                    se += d * d;
                    ae += std::abs(d);
                    tsum += target.at(base + i);
                }
            }
            const double count = static_cast<double>(S * chw);
            const double mse_v = se / count, mae_v = ae / count;
            const double tmean = tsum / count;
            double sst = 0.0;
            for (std::int64_t s = 0; s < S; ++s) {
                const std::int64_t base = ((s * T + t) * N + n) * chw;
                for (std::int64_t i = 0; i < chw; ++i) {
                    const double d = target.at(base + i) - tmean;
                    sst += d * d;
                }
            }

            double ssim_sum = 0.0;
            std::int64_t ssim_count = 0;
            double pcc_sum = 0.0, acc_sum = 0.0;
            std::int64_t pcc_count = 0, acc_count = 0;
            const char* pending = nullptr;
            for (std::int64_t s = 0; s < S; ++s) {
                const Tensor pf = frame_of(pred, s, t, n);
                const Tensor tf = frame_of(target, s, t, n);
                for (std::int64_t c = 0; c < C; ++c) {
                    ssim_sum += ssim(channel_of(pf, c), channel_of(tf, c), dynamic_range);
                    ++ssim_count;
                }
                try {
                    pcc_sum += pcc(pf, tf);
                    ++pcc_count;
                } catch (const NumericError&) {
                    pending = "pcc";
                }
                try {
                    acc_sum += acc(pf, tf, clim);
                    ++acc_count;
                } catch (const NumericError&) {
                    pending = "acc";
                }
            }
            if (pcc_count == 0 || acc_count == 0) {
                throw NumericError(std::string("evaluate_forecast: every frame of variable ") +
                                   std::to_string(n) + ", leadtime " + std::to_string(t) +
                                   " has undefined " + (pending ? pending : "correlation"));
            }
            if (sst == 0.0) {
                throw NumericError("evaluate_forecast: zero-variance target in variable " +
                                   std::to_string(n) + ", leadtime " + std::to_string(t));
            }

            const int vn = static_cast<int>(n), lt = static_cast<int>(t);
            rows.push_back({vn, lt, "mse", mse_v});
            rows.push_back({vn, lt, "mae", mae_v});
            rows.push_back({vn, lt, "rmse", std::sqrt(mse_v)});
            rows.push_back({vn, lt, "ssim", ssim_sum / static_cast<double>(ssim_count)});
            rows.push_back({vn, lt, "psnr",
                            mse_v < 1e-10
                                ? 100.0
                                : 10.0 * std::log10(dynamic_range * dynamic_range / mse_v)});
            rows.push_back({vn, lt, "pcc", pcc_sum / static_cast<double>(pcc_count)});
            rows.push_back({vn, lt, "r2", 1.0 - se / sst});
            rows.push_back({vn, lt, "acc", acc_sum / static_cast<double>(acc_count)});
        }
    }
    return rows;
}

}  // namespace met2net::metrics
