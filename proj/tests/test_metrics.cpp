// Metrics tests: closed-form and naive-loop oracles for the pixel metrics,
// SSIM, PSNR, correlation scores, and linear CKA, plus the per-variable,
// per-leadtime forecast evaluator.

#include <cmath>
#include <vector>

#include "doctest.h"
#include "met2net/metrics.hpp"
#include "oracles.hpp"

using namespace met2net;
namespace M = met2net::metrics;

namespace {

Tensor rnd(Shape shape, std::uint64_t seed) {
    Tensor t(std::move(shape), Dtype::F64);
    oracle::fill_uniform(t, seed);
    return t;
}

Tensor constant(Shape shape, double v) { return Tensor::full(std::move(shape), v, Dtype::F64); }

}  // namespace

TEST_SUITE("metrics.pixel") {
    TEST_CASE("identical inputs give zero error") {
        Tensor a = rnd({4, 16}, 1);
        auto r = M::pixel_metrics(a, a);
        CHECK(r.mse == 0.0);
        CHECK(r.mae == 0.0);
        CHECK(r.rmse == 0.0);
    }

    TEST_CASE("a constant offset of 2 gives (4, 2, 2)") {
        Tensor t = rnd({3, 5}, 2);
        Tensor p = t.clone();
        for (std::int64_t i = 0; i < p.numel(); ++i) p.set(i, p.at(i) + 2.0);
        auto r = M::pixel_metrics(p, t);
        CHECK(r.mse == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(r.mae == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(r.rmse == doctest::Approx(2.0).epsilon(1e-12));
    }

    TEST_CASE("random pair matches a reverse-order loop oracle") {
        Tensor p = rnd({16, 16}, 3), t = rnd({16, 16}, 4);
        auto r = M::pixel_metrics(p, t);
        double se = 0.0, ae = 0.0;
        for (std::int64_t i = p.numel() - 1; i >= 0; --i) {
            const double d = p.at(i) - t.at(i);
            se += d * d;
            ae += std::abs(d);
        }
        CHECK(r.mse == doctest::Approx(se / 256.0).epsilon(1e-12));
        CHECK(r.mae == doctest::Approx(ae / 256.0).epsilon(1e-12));
        CHECK(r.rmse * r.rmse == doctest::Approx(r.mse).epsilon(1e-9));
    }

    TEST_CASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(M::pixel_metrics(rnd({4}, 1), rnd({5}, 1)), ShapeError);
    }
}

TEST_SUITE("metrics.ssim") {
    TEST_CASE("identical images score exactly 1") {
        Tensor a = rnd({16, 16}, 5);
        CHECK(M::ssim(a, a, 1.0) == 1.0);
    }

    TEST_CASE("constant images follow the luminance closed form") {
        const double m1 = 0.25, m2 = 0.75, L = 1.0;
        Tensor a = constant({16, 16}, m1), b = constant({16, 16}, m2);
        const double c1 = 0.01 * L * 0.01 * L;
        const double expect = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        CHECK(M::ssim(a, b, L) == doctest::Approx(expect).epsilon(1e-12));
    }

    TEST_CASE("an image and its negative are structurally dissimilar") {
        Tensor a({16, 16}, Dtype::F64);
        for (std::int64_t i = 0; i < a.numel(); ++i) a.set(i, (i / 16 + i % 16) % 2 ? 0.9 : 0.1);
        Tensor b = a.clone();
        for (std::int64_t i = 0; i < b.numel(); ++i) b.set(i, 1.0 - b.at(i));
        const double s = M::ssim(a, b, 1.0);
        CHECK(s < 0.5);
        CHECK(s >= -1.0);
    }

    TEST_CASE("random fields match an independently-written window oracle") {
        Tensor a = rnd({16, 16}, 6), b = rnd({16, 16}, 7);
        // Two-pass weighted statistics (explicit centered sums) instead of
        // the E[x^2]-mu^2 form used by the implementation.
        const double L = 1.0, c1 = 1e-4, c2 = 9e-4;
        double wsum[11][11], norm = 0.0;
        for (int i = 0; i < 11; ++i) {
            for (int j = 0; j < 11; ++j) {
                wsum[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / 4.5);
                norm += wsum[i][j];
            }
        }
        double total = 0.0;
        int count = 0;
        for (int oy = 0; oy + 11 <= 16; ++oy) {
            for (int ox = 0; ox + 11 <= 16; ++ox) {
                double mx = 0.0, my = 0.0;
                for (int i = 0; i < 11; ++i) {
                    for (int j = 0; j < 11; ++j) {
                        const double w = wsum[i][j] / norm;
                        mx += w * a.at((oy + i) * 16 + ox + j);
                        my += w * b.at((oy + i) * 16 + ox + j);
                    }
                }
                double sxx = 0.0, syy = 0.0, sxy = 0.0;
                for (int i = 0; i < 11; ++i) {
                    for (int j = 0; j < 11; ++j) {
                        const double w = wsum[i][j] / norm;
                        const double dx = a.at((oy + i) * 16 + ox + j) - mx;
                        const double dy = b.at((oy + i) * 16 + ox + j) - my;
                        sxx += w * dx * dx;
                        syy += w * dy * dy;
                        sxy += w * dx * dy;
                    }
                }
                total += ((2 * mx * my + c1) * (2 * sxy + c2)) /
                         ((mx * mx + my * my + c1) * (sxx + syy + c2));
                ++count;
            }
        }
        CHECK(M::ssim(a, b, L) == doctest::Approx(total / count).epsilon(1e-6));
    }

    TEST_CASE("fields smaller than the window are rejected") {
        CHECK_THROWS_AS(M::ssim(rnd({10, 16}, 1), rnd({10, 16}, 2), 1.0), ShapeError);
        CHECK_THROWS_AS(M::ssim(rnd({16}, 1), rnd({16}, 2), 1.0), ShapeError);
        CHECK_THROWS_AS(M::ssim(rnd({16, 16}, 1), rnd({16, 16}, 2), 0.0), ConfigError);
    }
}

TEST_SUITE("metrics.psnr") {
    TEST_CASE("identical images hit the 100 dB cap") {
        Tensor a = rnd({8, 8}, 8);
        CHECK(M::psnr(a, a, 255.0) == 100.0);
    }

    TEST_CASE("mse 4 at L=255 gives the textbook value") {
        Tensor t = rnd({8, 8}, 9);
        Tensor p = t.clone();
        for (std::int64_t i = 0; i < p.numel(); ++i) p.set(i, p.at(i) + 2.0);
        CHECK(M::psnr(p, t, 255.0) ==
              doctest::Approx(10.0 * std::log10(255.0 * 255.0 / 4.0)).epsilon(1e-10));
    }

    TEST_CASE("psnr decreases as mse grows") {
        Tensor t = constant({8, 8}, 0.0);
        Tensor p1 = constant({8, 8}, 1.0), p2 = constant({8, 8}, 2.0);
        CHECK(M::psnr(p1, t, 255.0) > M::psnr(p2, t, 255.0));
    }
}

TEST_SUITE("metrics.correlation") {
    TEST_CASE("self, negated, and affine relations") {
        Tensor x = rnd({64}, 10);
        CHECK(M::pcc(x, x) == doctest::Approx(1.0).epsilon(1e-12));
        Tensor nx = x.clone(), ax = x.clone();
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            nx.set(i, -x.at(i));
            ax.set(i, 2.0 * x.at(i) + 3.0);
        }
        CHECK(M::pcc(x, nx) == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(M::pcc(x, ax) == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("random pair matches the product-moment identity") {
        Tensor x = rnd({16, 16}, 11), y = rnd({16, 16}, 12);
        const double n = 256.0;
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (std::int64_t i = 0; i < 256; ++i) {
            sx += x.at(i);
            sy += y.at(i);
            sxx += x.at(i) * x.at(i);
            syy += y.at(i) * y.at(i);
            sxy += x.at(i) * y.at(i);
        }
        const double expect = (n * sxy - sx * sy) /
                              std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
        CHECK(M::pcc(x, y) == doctest::Approx(expect).epsilon(1e-10));
    }

    TEST_CASE("zero variance raises instead of returning NaN") {
        Tensor c = constant({16}, 0.5), x = rnd({16}, 13);
        CHECK_THROWS_AS(M::pcc(c, x), NumericError);
        CHECK_THROWS_AS(M::pcc(x, c), NumericError);
    }

    TEST_CASE("r2 fundamentals") {
        Tensor t = rnd({64}, 14);
        CHECK(M::r2(t, t) == 1.0);

        double mean = 0.0;
        for (std::int64_t i = 0; i < t.numel(); ++i) mean += t.at(i);
        mean /= static_cast<double>(t.numel());
        CHECK(M::r2(constant({64}, mean), t) == 0.0);

        Tensor far = constant({64}, mean + 10.0);
        CHECK(M::r2(far, t) < 0.0);
        CHECK_THROWS_AS(M::r2(rnd({8}, 1), constant({8}, 1.0)), NumericError);
    }

    TEST_CASE("acc is the correlation of anomalies") {
        Tensor clim = rnd({16, 16}, 15);
        Tensor p = rnd({16, 16}, 16), t = rnd({16, 16}, 17);
        Tensor pa = p.clone(), ta = t.clone();
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            pa.set(i, p.at(i) - clim.at(i));
            ta.set(i, t.at(i) - clim.at(i));
        }
        CHECK(M::acc(p, t, clim) == doctest::Approx(M::pcc(pa, ta)).epsilon(1e-12));
        CHECK(M::acc(t, t, clim) == doctest::Approx(1.0).epsilon(1e-12));
        // Target equal to climatology -> zero anomaly variance.
        CHECK_THROWS_AS(M::acc(p, clim, clim), NumericError);
    }
}

TEST_SUITE("metrics.cka") {
    static Tensor matmul_plain(const Tensor& a, const Tensor& b) {
        Tensor c({a.dim(0), b.dim(1)}, Dtype::F64);
        for (std::int64_t i = 0; i < a.dim(0); ++i) {
            for (std::int64_t j = 0; j < b.dim(1); ++j) {
                double acc = 0.0;
                for (std::int64_t k = 0; k < a.dim(1); ++k) {
                    acc += a.at(i * a.dim(1) + k) * b.at(k * b.dim(1) + j);
                }
                c.set(i * b.dim(1) + j, acc);
            }
        }
        return c;
    }

    TEST_CASE("self-similarity is 1") {
        Tensor x = rnd({6, 4}, 18);
        CHECK(M::linear_cka(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("invariant to orthogonal maps and isotropic scaling") {
        Tensor x = rnd({6, 4}, 19);
        // Householder reflection Q = I - 2 vv^T / |v|^2 is orthogonal.
        Tensor v = rnd({4}, 20);
        double vv = 0.0;
        for (int i = 0; i < 4; ++i) vv += v.at(i) * v.at(i);
        Tensor q({4, 4}, Dtype::F64);
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                q.set(i * 4 + j, (i == j ? 1.0 : 0.0) - 2.0 * v.at(i) * v.at(j) / vv);
            }
        }
        CHECK(M::linear_cka(x, matmul_plain(x, q)) == doctest::Approx(1.0).epsilon(1e-6));

        Tensor y = rnd({6, 5}, 21);
        Tensor ys = y.clone();
        for (std::int64_t i = 0; i < y.numel(); ++i) ys.set(i, 3.7 * y.at(i));
        CHECK(M::linear_cka(x, ys) == doctest::Approx(M::linear_cka(x, y)).epsilon(1e-9));
        const double v1 = M::linear_cka(x, y);
        CHECK(v1 >= 0.0);
        CHECK(v1 <= 1.0);
    }

    TEST_CASE("hand matrices match a direct HSIC-ratio oracle") {
        Tensor x({3, 2}, Dtype::F64), y({3, 2}, Dtype::F64);
        const double xv[] = {1, 2, 3, 4, 5, 7}, yv[] = {2, 0, 1, 1, 0, 3};
        for (int i = 0; i < 6; ++i) {
            x.set(i, xv[i]);
            y.set(i, yv[i]);
        }
        // HSIC(K, L) = tr(K H L H) / (n-1)^2 with H = I - 11^T/n on raw Grams.
        const int n = 3;
        auto gram = [&](const Tensor& m) {
            Tensor g({n, n}, Dtype::F64);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (int k = 0; k < 2; ++k) acc += m.at(i * 2 + k) * m.at(j * 2 + k);
                    g.set(i * n + j, acc);
                }
            }
            return g;
        };
        Tensor h({n, n}, Dtype::F64);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) h.set(i * n + j, (i == j ? 1.0 : 0.0) - 1.0 / n);
        }
        auto hsic = [&](const Tensor& k, const Tensor& l) {
            Tensor m = matmul_plain(matmul_plain(k, h), matmul_plain(l, h));
            double tr = 0.0;
            for (int i = 0; i < n; ++i) tr += m.at(i * n + i);
            return tr / ((n - 1.0) * (n - 1.0));
        };
        const Tensor kx = gram(x), ky = gram(y);
        const double expect = hsic(kx, ky) / std::sqrt(hsic(kx, kx) * hsic(ky, ky));
        CHECK(M::linear_cka(x, y) == doctest::Approx(expect).epsilon(1e-10));
    }

    TEST_CASE("degenerate and mis-shaped inputs are rejected") {
        CHECK_THROWS_AS(M::linear_cka(rnd({6, 4}, 1), rnd({5, 4}, 2)), ShapeError);
        CHECK_THROWS_AS(M::linear_cka(rnd({1, 4}, 1), rnd({1, 4}, 2)), ShapeError);
        CHECK_THROWS_AS(M::linear_cka(rnd({6}, 1), rnd({6}, 2)), ShapeError);
        CHECK_THROWS_AS(M::linear_cka(constant({4, 3}, 2.5), rnd({4, 3}, 3)), NumericError);
    }
}

TEST_SUITE("metrics.evaluate") {
    TEST_CASE("row inventory and spot-checked cells") {
        const std::int64_t S = 3, T = 2, N = 2, C = 1, H = 16, W = 16;
        Tensor target = rnd({S, T, N, C, H, W}, 22);
        Tensor pred = target.clone();
        for (std::int64_t i = 0; i < pred.numel(); ++i) {
            pred.set(i, pred.at(i) + 0.05 * ((i * 2654435761u % 97) / 97.0 - 0.5));
        }
        Tensor clim = rnd({N, C, H, W}, 23);
        auto rows = M::evaluate_forecast(pred, target, clim, 1.0);
        REQUIRE(rows.size() == static_cast<std::size_t>(N * T * 8));

        // Every (variable, leadtime, metric) appears exactly once and is finite.
        for (const auto& r : rows) CHECK(std::isfinite(r.value));

        // Spot-check the mse cell of (variable 1, leadtime 0) with a direct loop.
        double se = 0.0;
        for (std::int64_t s = 0; s < S; ++s) {
            for (std::int64_t i = 0; i < C * H * W; ++i) {
                const std::int64_t base = ((s * T + 0) * N + 1) * C * H * W + i;
                const double d = pred.at(base) - target.at(base);
                se += d * d;
            }
        }
        const double want_mse = se / static_cast<double>(S * C * H * W);
        bool found = false;
        for (const auto& r : rows) {
            if (r.variable == 1 && r.leadtime == 0 && r.metric == "mse") {
                CHECK(r.value == doctest::Approx(want_mse).epsilon(1e-12));
                found = true;
            }
            if (r.metric == "rmse") {
                for (const auto& q : rows) {
                    if (q.variable == r.variable && q.leadtime == r.leadtime &&
                        q.metric == "mse") {
                        CHECK(r.value == doctest::Approx(std::sqrt(q.value)).epsilon(1e-9));
                    }
                }
            }
        }
        CHECK(found);
    }

    TEST_CASE("perfect forecast saturates every score") {
        const std::int64_t S = 2, T = 1, N = 1, C = 1, H = 16, W = 16;
        Tensor target = rnd({S, T, N, C, H, W}, 24);
        Tensor clim = constant({N, C, H, W}, 0.0);
        auto rows = M::evaluate_forecast(target, target, clim, 1.0);
        for (const auto& r : rows) {
            if (r.metric == "mse" || r.metric == "mae" || r.metric == "rmse") {
                CHECK(r.value == 0.0);
            } else if (r.metric == "psnr") {
                CHECK(r.value == 100.0);
            } else {
                CHECK(r.value == doctest::Approx(1.0).epsilon(1e-9));
            }
        }
    }

    TEST_CASE("climatology shape is validated") {
        Tensor t = rnd({2, 1, 1, 1, 16, 16}, 25);
        CHECK_THROWS_AS(M::evaluate_forecast(t, t, rnd({2, 1, 16, 16}, 26), 1.0), ShapeError);
    }
}
