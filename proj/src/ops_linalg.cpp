#include "met2net/ops.hpp"
#include "eigen_gemm.hpp"

namespace met2net::ops {

using detail::gemm;

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.dtype() != b.dtype()) throw ShapeError("matmul: dtype mismatch");
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n}, a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        gemm<T>(a.data<T>().data(), b.data<T>().data(), out.data<T>().data(), m, k, n);
    });
    autodiff::record(out, "matmul", {a, b},
                     [a, b, m, k, n](const Tensor& g, const autodiff::GradSink& sink) {
        dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            Tensor da({m, k}, a.dtype());
            Tensor db({k, n}, a.dtype());
            // dA = G * B^T ; dB = A^T * G
            gemm<T>(g.data<T>().data(), b.data<T>().data(), da.data<T>().data(), m, n, k, false,
                    true);
            gemm<T>(a.data<T>().data(), g.data<T>().data(), db.data<T>().data(), k, m, n, true,
                    false);
            sink(0, da);
            sink(1, db);
        });
    });
    return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    if (a.dtype() != b.dtype()) throw ShapeError("bmm: dtype mismatch");
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
        throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const std::int64_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    Tensor out({bs, m, n}, a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>().data();
        auto pb = b.data<T>().data();
        auto po = out.data<T>().data();
        for (std::int64_t i = 0; i < bs; ++i) {
            gemm<T>(pa + i * m * k, pb + i * k * n, po + i * m * n, m, k, n);
        }
    });
    autodiff::record(out, "bmm", {a, b},
                     [a, b, bs, m, k, n](const Tensor& g, const autodiff::GradSink& sink) {
        dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            Tensor da(a.shape(), a.dtype());
            Tensor db(b.shape(), a.dtype());
            auto pa = a.data<T>().data();
            auto pb = b.data<T>().data();
            auto pg = g.data<T>().data();
            auto pda = da.data<T>().data();
            auto pdb = db.data<T>().data();
            for (std::int64_t i = 0; i < bs; ++i) {
                gemm<T>(pg + i * m * n, pb + i * k * n, pda + i * m * k, m, n, k, false, true);
                gemm<T>(pa + i * m * k, pg + i * m * n, pdb + i * k * n, k, m, n, true, false);
            }
            sink(0, da);
            sink(1, db);
        });
    });
    return out;
}

}  // namespace met2net::ops
