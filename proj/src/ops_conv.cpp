#include <cmath>
#include <cstring>
#include <vector>

#include "eigen_gemm.hpp"
#include "met2net/ops.hpp"
#include "met2net/threading.hpp"

namespace met2net::ops {

using detail::gemm;

namespace {

struct ConvGeom {
    std::int64_t B, Cin, H, W, Cout, KH, KW, OH, OW;
    std::int64_t cin_g, cout_g, R, P;  // per-group channels, patch rows, pixels
    int stride, padding, dilation, groups;
    bool onebyone;  // 1x1/stride1/pad0: im2col would be the identity
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
                       int padding, int dilation, int groups) {
    if (x.ndim() != 4) throw ShapeError("conv2d: input must be [B,C,H,W], got " + shape_str(x.shape()));
    if (weight.ndim() != 4) {
        throw ShapeError("conv2d: weight must be [Cout,Cin/groups,KH,KW], got " +
                         shape_str(weight.shape()));
    }
    if (bias.defined() && bias.ndim() != 1) {
        throw ShapeError("conv2d: bias must be [Cout], got " + shape_str(bias.shape()));
    }
    if (stride < 1 || dilation < 1 || groups < 1 || padding < 0) {
        throw ShapeError("conv2d: invalid stride/padding/dilation/groups");
    }
    ConvGeom cg;
    cg.B = x.dim(0);
    cg.Cin = x.dim(1);
    cg.H = x.dim(2);
    cg.W = x.dim(3);
    cg.Cout = weight.dim(0);
    cg.KH = weight.dim(2);
    cg.KW = weight.dim(3);
    cg.stride = stride;
    cg.padding = padding;
    cg.dilation = dilation;
    cg.groups = groups;
    if (cg.Cin % groups != 0 || cg.Cout % groups != 0) {
        throw ShapeError("conv2d: channels not divisible by groups=" + std::to_string(groups));
    }
    if (weight.dim(1) * groups != cg.Cin) {
        throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " does not match input " +
                         shape_str(x.shape()) + " with groups=" + std::to_string(groups));
    }
    if (bias.defined() && bias.dim(0) != cg.Cout) {
        throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match Cout=" +
                         std::to_string(cg.Cout));
    }
    cg.OH = (cg.H + 2 * padding - dilation * (cg.KH - 1) - 1) / stride + 1;
    cg.OW = (cg.W + 2 * padding - dilation * (cg.KW - 1) - 1) / stride + 1;
    if (cg.H + 2 * padding < dilation * (cg.KH - 1) + 1 || cg.W + 2 * padding < dilation * (cg.KW - 1) + 1) {
        throw ShapeError("conv2d: kernel does not fit input " + shape_str(x.shape()) +
                         " (k=" + std::to_string(cg.KH) + ", pad=" + std::to_string(padding) +
                         ", dilation=" + std::to_string(dilation) + ")");
    }
    cg.cin_g = cg.Cin / groups;
    cg.cout_g = cg.Cout / groups;
    cg.R = cg.cin_g * cg.KH * cg.KW;
    cg.P = cg.OH * cg.OW;
    cg.onebyone = (cg.KH == 1 && cg.KW == 1 && stride == 1 && padding == 0);
    return cg;
}

// img: one group's channel slab [cin_g, H, W] -> cols [R, P].
template <class T>
void im2col(const T* img, const ConvGeom& cg, T* cols) {
    for (std::int64_t c = 0; c < cg.cin_g; ++c) {
        for (std::int64_t kh = 0; kh < cg.KH; ++kh) {
            for (std::int64_t kw = 0; kw < cg.KW; ++kw) {
                T* row = cols + ((c * cg.KH + kh) * cg.KW + kw) * cg.P;
                for (std::int64_t oh = 0; oh < cg.OH; ++oh) {
                    const std::int64_t ih = oh * cg.stride - cg.padding + kh * cg.dilation;
                    if (ih < 0 || ih >= cg.H) {
                        std::memset(row + oh * cg.OW, 0, sizeof(T) * cg.OW);
                        continue;
                    }
                    const T* src_row = img + c * cg.H * cg.W + ih * cg.W;
                    for (std::int64_t ow = 0; ow < cg.OW; ++ow) {
                        const std::int64_t iw = ow * cg.stride - cg.padding + kw * cg.dilation;
                        row[oh * cg.OW + ow] = (iw >= 0 && iw < cg.W) ? src_row[iw] : T(0);
                    }
                }
            }
        }
    }
}

// Transpose of im2col: scatter-adds cols [R, P] back into the slab [cin_g, H, W].
template <class T>
void col2im_add(const T* cols, const ConvGeom& cg, T* img) {
    for (std::int64_t c = 0; c < cg.cin_g; ++c) {
        for (std::int64_t kh = 0; kh < cg.KH; ++kh) {
            for (std::int64_t kw = 0; kw < cg.KW; ++kw) {
                const T* row = cols + ((c * cg.KH + kh) * cg.KW + kw) * cg.P;
                for (std::int64_t oh = 0; oh < cg.OH; ++oh) {
                    const std::int64_t ih = oh * cg.stride - cg.padding + kh * cg.dilation;
                    if (ih < 0 || ih >= cg.H) continue;
                    T* dst_row = img + c * cg.H * cg.W + ih * cg.W;
                    for (std::int64_t ow = 0; ow < cg.OW; ++ow) {
                        const std::int64_t iw = ow * cg.stride - cg.padding + kw * cg.dilation;
                        if (iw >= 0 && iw < cg.W) dst_row[iw] += row[oh * cg.OW + ow];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding,
              int dilation, int groups) {
    if (x.dtype() != weight.dtype() || (bias.defined() && x.dtype() != bias.dtype())) {
        throw ShapeError("conv2d: dtype mismatch between input, weight and bias");
    }
    const ConvGeom cg = conv_geometry(x, weight, bias, stride, padding, dilation, groups);
    Tensor out({cg.B, cg.Cout, cg.OH, cg.OW}, x.dtype());

    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = x.data<T>().data();
        const T* pw = weight.data<T>().data();
        const T* pb = bias.defined() ? bias.data<T>().data() : nullptr;
        T* po = out.data<T>().data();
        parallel_for(cg.B * cg.groups, 1, [&](std::int64_t lo, std::int64_t hi) {
            std::vector<T> cols(cg.onebyone ? 0 : cg.R * cg.P);
            for (std::int64_t i = lo; i < hi; ++i) {
                const std::int64_t b = i / cg.groups, g = i % cg.groups;
                const T* src = px + (b * cg.Cin + g * cg.cin_g) * cg.H * cg.W;
                const T* wg = pw + g * cg.cout_g * cg.R;
                T* dst = po + (b * cg.Cout + g * cg.cout_g) * cg.P;
                if (cg.onebyone) {
                    gemm<T>(wg, src, dst, cg.cout_g, cg.R, cg.P);
                } else {
                    im2col<T>(src, cg, cols.data());
                    gemm<T>(wg, cols.data(), dst, cg.cout_g, cg.R, cg.P);
                }
                if (pb) {
                    for (std::int64_t c = 0; c < cg.cout_g; ++c) {
                        const T bv = pb[g * cg.cout_g + c];
                        for (std::int64_t p = 0; p < cg.P; ++p) dst[c * cg.P + p] += bv;
                    }
                }
            }
        });
    });

    const bool need_dx = x.tracked();
    const bool need_dw = weight.tracked();
    const bool need_db = bias.tracked();
    autodiff::record(out, "conv2d", {x, weight, bias},
                     [x, weight, cg, need_dx, need_dw, need_db](const Tensor& gout,
                                                                const autodiff::GradSink& sink) {
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* px = x.data<T>().data();
            const T* pw = weight.data<T>().data();
            const T* pg = gout.data<T>().data();

            Tensor dx, dw;
            T* pdx = nullptr;
            const std::int64_t wnumel = cg.Cout * cg.R;
            // Per-sample weight-grad slabs; reduced serially afterwards so the
            // accumulation order never depends on the thread count.
            std::vector<T> wpart;
            if (need_dx) {
                dx = Tensor::zeros(x.shape(), x.dtype());
                pdx = dx.data<T>().data();
            }
            if (need_dw) wpart.assign(cg.B * wnumel, T(0));

            if (need_dx || need_dw) {
                parallel_for(cg.B * cg.groups, 1, [&](std::int64_t lo, std::int64_t hi) {
                    std::vector<T> cols((need_dw && !cg.onebyone) ? cg.R * cg.P : 0);
                    std::vector<T> colgrad((need_dx && !cg.onebyone) ? cg.R * cg.P : 0);
                    for (std::int64_t i = lo; i < hi; ++i) {
                        const std::int64_t b = i / cg.groups, g = i % cg.groups;
                        const T* src = px + (b * cg.Cin + g * cg.cin_g) * cg.H * cg.W;
                        const T* wg = pw + g * cg.cout_g * cg.R;
                        const T* gslab = pg + (b * cg.Cout + g * cg.cout_g) * cg.P;
                        if (need_dw) {
                            T* wp = wpart.data() + b * wnumel + g * cg.cout_g * cg.R;
                            if (cg.onebyone) {
                                gemm<T>(gslab, src, wp, cg.cout_g, cg.P, cg.R, false, true);
                            } else {
                                im2col<T>(src, cg, cols.data());
                                gemm<T>(gslab, cols.data(), wp, cg.cout_g, cg.P, cg.R, false,
                                        true);
                            }
                        }
                        if (need_dx) {
                            T* dxslab = pdx + (b * cg.Cin + g * cg.cin_g) * cg.H * cg.W;
                            if (cg.onebyone) {
                                gemm<T>(wg, gslab, dxslab, cg.R, cg.cout_g, cg.P, true, false);
                            } else {
                                gemm<T>(wg, gslab, colgrad.data(), cg.R, cg.cout_g, cg.P, true,
                                        false);
                                col2im_add<T>(colgrad.data(), cg, dxslab);
                            }
                        }
                    }
                });
            }

            if (need_dx) sink(0, dx);
            if (need_dw) {
                dw = Tensor::zeros(weight.shape(), x.dtype());
                T* pdw = dw.data<T>().data();
                for (std::int64_t b = 0; b < cg.B; ++b) {
                    const T* wp = wpart.data() + b * wnumel;
                    for (std::int64_t j = 0; j < wnumel; ++j) pdw[j] += wp[j];
                }
                sink(1, dw);
            }
            if (need_db) {
                Tensor db = Tensor::zeros({cg.Cout}, x.dtype());
                T* pdb = db.data<T>().data();
                std::vector<double> acc(cg.Cout, 0.0);
                for (std::int64_t b = 0; b < cg.B; ++b) {
                    for (std::int64_t c = 0; c < cg.Cout; ++c) {
                        const T* row = pg + (b * cg.Cout + c) * cg.P;
                        double s = 0.0;
                        for (std::int64_t p = 0; p < cg.P; ++p) s += static_cast<double>(row[p]);
                        acc[c] += s;
                    }
                }
                for (std::int64_t c = 0; c < cg.Cout; ++c) pdb[c] = static_cast<T>(acc[c]);
                sink(2, db);
            }
        });
    });
    return out;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
    if (x.ndim() != 4) {
        throw ShapeError("upsample_nearest: input must be [B,C,H,W], got " + shape_str(x.shape()));
    }
    if (factor < 1) throw ShapeError("upsample_nearest: factor must be >= 1");
    const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t f = factor, OH = H * f, OW = W * f;
    Tensor out({B, C, OH, OW}, x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* src = x.data<T>().data();
        T* dst = out.data<T>().data();
        parallel_for(B * C, 1, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) {
                const T* s = src + i * H * W;
                T* d = dst + i * OH * OW;
                for (std::int64_t oh = 0; oh < OH; ++oh) {
                    const T* srow = s + (oh / f) * W;
                    T* drow = d + oh * OW;
                    for (std::int64_t ow = 0; ow < OW; ++ow) drow[ow] = srow[ow / f];
                }
            }
        });
    });
    autodiff::record(out, "upsample_nearest", {x},
                     [x, B, C, H, W, f](const Tensor& g, const autodiff::GradSink& sink) {
        Tensor dx = Tensor::zeros(x.shape(), x.dtype());
        const std::int64_t OH = H * f, OW = W * f;
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* pg = g.data<T>().data();
            T* pd = dx.data<T>().data();
            for (std::int64_t i = 0; i < B * C; ++i) {
                const T* gs = pg + i * OH * OW;
                T* ds = pd + i * H * W;
                for (std::int64_t oh = 0; oh < OH; ++oh) {
                    const std::int64_t ih = oh / f;
                    for (std::int64_t ow = 0; ow < OW; ++ow) ds[ih * W + ow / f] += gs[oh * OW + ow];
                }
            }
        });
        sink(0, dx);
    });
    return out;
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  double eps) {
    if (x.ndim() != 4) throw ShapeError("group_norm: input must be [B,C,H,W], got " + shape_str(x.shape()));
    const std::int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (groups < 1 || C % groups != 0) {
        throw ShapeError("group_norm: groups=" + std::to_string(groups) +
                         " must divide channels C=" + std::to_string(C));
    }
    if (gamma.ndim() != 1 || gamma.dim(0) != C || beta.ndim() != 1 || beta.dim(0) != C) {
        throw ShapeError("group_norm: gamma/beta must be [C]=" + std::to_string(C) + ", got " +
                         shape_str(gamma.shape()) + " / " + shape_str(beta.shape()));
    }
    if (x.dtype() != gamma.dtype() || x.dtype() != beta.dtype()) {
        throw ShapeError("group_norm: dtype mismatch");
    }
    const std::int64_t G = groups, cgch = C / G, m = cgch * HW;

    Tensor out(x.shape(), x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = x.data<T>().data();
        const T* pgm = gamma.data<T>().data();
        const T* pbt = beta.data<T>().data();
        T* po = out.data<T>().data();
        parallel_for(B * G, 1, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) {
                const std::int64_t b = i / G, g = i % G;
                const T* slab = px + (b * C + g * cgch) * HW;
                double sum = 0.0;
                for (std::int64_t j = 0; j < m; ++j) sum += static_cast<double>(slab[j]);
                const double mu = sum / static_cast<double>(m);
                double var = 0.0;
                for (std::int64_t j = 0; j < m; ++j) {
                    const double d = static_cast<double>(slab[j]) - mu;
                    var += d * d;
                }
                var /= static_cast<double>(m);
                const double inv = 1.0 / std::sqrt(var + eps);
                T* oslab = po + (b * C + g * cgch) * HW;
                for (std::int64_t c = 0; c < cgch; ++c) {
                    const double gm = static_cast<double>(pgm[g * cgch + c]);
                    const double bt = static_cast<double>(pbt[g * cgch + c]);
                    for (std::int64_t p = 0; p < HW; ++p) {
                        const double xhat = (static_cast<double>(slab[c * HW + p]) - mu) * inv;
                        oslab[c * HW + p] = static_cast<T>(gm * xhat + bt);
                    }
                }
            }
        });
    });

    const bool need_dx = x.tracked();
    const bool need_dgamma = gamma.tracked();
    const bool need_dbeta = beta.tracked();
    autodiff::record(out, "group_norm", {x, gamma, beta},
                     [x, gamma, eps, B, C, HW, G, cgch, m, need_dx, need_dgamma,
                      need_dbeta](const Tensor& gout, const autodiff::GradSink& sink) {
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* px = x.data<T>().data();
            const T* pgm = gamma.data<T>().data();
            const T* pg = gout.data<T>().data();

            Tensor dx;
            T* pdx = nullptr;
            if (need_dx) {
                dx = Tensor(x.shape(), x.dtype());
                pdx = dx.data<T>().data();
            }
            // Per-sample gamma/beta partials, reduced in fixed batch order.
            std::vector<double> gpart((need_dgamma || need_dbeta) ? B * C * 2 : 0, 0.0);

            parallel_for(B * G, 1, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t i = lo; i < hi; ++i) {
                    const std::int64_t b = i / G, g = i % G;
                    const T* slab = px + (b * C + g * cgch) * HW;
                    const T* gslab = pg + (b * C + g * cgch) * HW;
                    double sum = 0.0;
                    for (std::int64_t j = 0; j < m; ++j) sum += static_cast<double>(slab[j]);
                    const double mu = sum / static_cast<double>(m);
                    double var = 0.0;
                    for (std::int64_t j = 0; j < m; ++j) {
                        const double d = static_cast<double>(slab[j]) - mu;
                        var += d * d;
                    }
                    var /= static_cast<double>(m);
                    const double inv = 1.0 / std::sqrt(var + eps);

                    // dxhat = g * gamma; need slab means of dxhat and dxhat*xhat.
                    double s1 = 0.0, s2 = 0.0;
                    for (std::int64_t c = 0; c < cgch; ++c) {
                        const double gm = static_cast<double>(pgm[g * cgch + c]);
                        for (std::int64_t p = 0; p < HW; ++p) {
                            const double xhat = (static_cast<double>(slab[c * HW + p]) - mu) * inv;
                            const double dxh = static_cast<double>(gslab[c * HW + p]) * gm;
                            s1 += dxh;
                            s2 += dxh * xhat;
                        }
                    }
                    s1 /= static_cast<double>(m);
                    s2 /= static_cast<double>(m);

                    for (std::int64_t c = 0; c < cgch; ++c) {
                        const std::int64_t ch = g * cgch + c;
                        const double gm = static_cast<double>(pgm[ch]);
                        double dgm = 0.0, dbt = 0.0;
                        for (std::int64_t p = 0; p < HW; ++p) {
                            const double xhat = (static_cast<double>(slab[c * HW + p]) - mu) * inv;
                            const double gv = static_cast<double>(gslab[c * HW + p]);
                            if (need_dx) {
                                pdx[(b * C + ch) * HW + p] =
                                    static_cast<T>(inv * (gv * gm - s1 - xhat * s2));
                            }
                            dgm += gv * xhat;
                            dbt += gv;
                        }
                        if (!gpart.empty()) {
                            gpart[(b * C + ch) * 2] = dgm;
                            gpart[(b * C + ch) * 2 + 1] = dbt;
                        }
                    }
                }
            });

            if (need_dx) sink(0, dx);
            if (need_dgamma || need_dbeta) {
                std::vector<double> dgm(C, 0.0), dbt(C, 0.0);
                for (std::int64_t b = 0; b < B; ++b) {
                    for (std::int64_t c = 0; c < C; ++c) {
                        dgm[c] += gpart[(b * C + c) * 2];
                        dbt[c] += gpart[(b * C + c) * 2 + 1];
                    }
                }
                if (need_dgamma) {
                    Tensor t({C}, x.dtype());
                    auto p = t.data<T>();
                    for (std::int64_t c = 0; c < C; ++c) p[c] = static_cast<T>(dgm[c]);
                    sink(1, t);
                }
                if (need_dbeta) {
                    Tensor t({C}, x.dtype());
                    auto p = t.data<T>();
                    for (std::int64_t c = 0; c < C; ++c) p[c] = static_cast<T>(dbt[c]);
                    sink(2, t);
                }
            }
        });
    });
    return out;
}

}  // namespace met2net::ops
