#pragma once

// Internal helper: row-major GEMM on raw pointers via Eigen. Eigen's own
// threading stays off; all parallelism goes through met2net::parallel_for so
// results are reproducible for any thread count.
#ifndef EIGEN_DONT_PARALLELIZE
#define EIGEN_DONT_PARALLELIZE
#endif
#include <Eigen/Dense>

#include <cstdint>

namespace met2net::detail {

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// C[m,n] = op(A) * op(B). trans_a means A is stored as [k,m], trans_b means
/// B is stored as [n,k].
template <class T>
void gemm(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
          bool trans_a = false, bool trans_b = false) {
    MatMap<T> C(c, m, n);
    if (!trans_a && !trans_b) {
        C.noalias() = ConstMatMap<T>(a, m, k) * ConstMatMap<T>(b, k, n);
    } else if (trans_a && !trans_b) {
        C.noalias() = ConstMatMap<T>(a, k, m).transpose() * ConstMatMap<T>(b, k, n);
    } else if (!trans_a && trans_b) {
        C.noalias() = ConstMatMap<T>(a, m, k) * ConstMatMap<T>(b, n, k).transpose();
    } else {
        C.noalias() = ConstMatMap<T>(a, k, m).transpose() * ConstMatMap<T>(b, n, k).transpose();
    }
}

}  // namespace met2net::detail
