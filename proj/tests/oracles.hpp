#pragma once

// Reference implementations used as oracles. Everything here is written the
// dumb, obviously-correct way (plain loops, generic element access, double
// accumulation) and shares no code with the library kernels it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "met2net/autodiff.hpp"
#include "met2net/param.hpp"
#include "met2net/tensor.hpp"

namespace oracle {

using met2net::Shape;
using met2net::Tensor;

/// Direct seven-loop convolution, same parameterization as ops::conv2d.
inline Tensor conv2d_ref(const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1,
                         int padding = 0, int dilation = 1, int groups = 1) {
    const std::int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t Cout = w.dim(0), KH = w.dim(2), KW = w.dim(3);
    const std::int64_t cin_g = Cin / groups, cout_g = Cout / groups;
    const std::int64_t OH = (H + 2 * padding - dilation * (KH - 1) - 1) / stride + 1;
    const std::int64_t OW = (W + 2 * padding - dilation * (KW - 1) - 1) / stride + 1;
    Tensor out({B, Cout, OH, OW}, x.dtype());
    for (std::int64_t bi = 0; bi < B; ++bi) {
        for (std::int64_t oc = 0; oc < Cout; ++oc) {
            const std::int64_t g = oc / cout_g;
            for (std::int64_t oh = 0; oh < OH; ++oh) {
                for (std::int64_t ow = 0; ow < OW; ++ow) {
                    double acc = b.defined() ? b.at(oc) : 0.0;
                    for (std::int64_t ic = 0; ic < cin_g; ++ic) {
                        for (std::int64_t kh = 0; kh < KH; ++kh) {
                            for (std::int64_t kw = 0; kw < KW; ++kw) {
                                const std::int64_t ih = oh * stride - padding + kh * dilation;
                                const std::int64_t iw = ow * stride - padding + kw * dilation;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += x.at(((bi * Cin + g * cin_g + ic) * H + ih) * W + iw) *
                                       w.at(((oc * cin_g + ic) * KH + kh) * KW + kw);
                            }
                        }
                    }
                    out.set(((bi * Cout + oc) * OH + oh) * OW + ow, acc);
                }
            }
        }
    }
    return out;
}

struct GradCheck {
    double max_abs = 0.0;
    double max_rel = 0.0;
};

/// Central-difference check of reverse-mode gradients. `loss_fn` must rebuild
/// the whole forward pass from the parameters' current values and return a
/// scalar. Use f64 parameters; h=1e-5 puts the truncation error near 1e-10.
inline GradCheck gradcheck(const std::function<Tensor()>& loss_fn,
                           const std::vector<met2net::Parameter*>& params, double h = 1e-5) {
    for (auto* p : params) p->zero_grad();
    Tensor loss = loss_fn();
    met2net::autodiff::backward(loss);

    GradCheck r;
    for (auto* p : params) {
        Tensor analytic = p->grad.clone();
        for (std::int64_t i = 0; i < p->value.numel(); ++i) {
            const double orig = p->value.at(i);
            double lp, lm;
            {
                met2net::autodiff::NoGradGuard ng;
                p->value.set(i, orig + h);
                lp = loss_fn().item();
                p->value.set(i, orig - h);
                lm = loss_fn().item();
                p->value.set(i, orig);
            }
            const double fd = (lp - lm) / (2.0 * h);
            const double an = analytic.at(i);
            const double abs_err = std::abs(fd - an);
            const double rel = abs_err / std::max(1e-8, std::abs(fd) + std::abs(an));
            r.max_abs = std::max(r.max_abs, abs_err);
            r.max_rel = std::max(r.max_rel, rel);
        }
    }
    return r;
}

/// Deterministic pseudo-random fill in [-1, 1], decoupled from std::mt19937 so
/// test inputs never depend on library RNG choices.
inline void fill_uniform(Tensor& t, std::uint64_t seed) {
    std::uint64_t s = seed * 0x9E3779B97F4A7C15ull + 1;
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        s ^= s >> 12;
        s ^= s << 25;
        s ^= s >> 27;
        const std::uint64_t m = s * 0x2545F4914F6CDD1Dull;
        t.set(i, static_cast<double>(m >> 11) / 4503599627370496.0 - 1.0);
    }
}

}  // namespace oracle
