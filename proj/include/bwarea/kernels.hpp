// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include <Eigen/Core>

// Dense row-major GEMM on raw buffers, backed by Eigen's blocked kernels.
// Eigen runs single-threaded here (no OpenMP), so results are bitwise
// reproducible for a given build.
namespace bwarea::kernels {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using ConstView = Eigen::Map<const RowMajor<T>>;

template <typename T>
using View = Eigen::Map<RowMajor<T>>;

// C[m,n] (+)= A[m,k] * B[k,n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
    const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
    View<T> C(c, M, N);
    if (accumulate) C.noalias() += ConstView<T>(a, M, K) * ConstView<T>(b, K, N);
    else C.noalias() = ConstView<T>(a, M, K) * ConstView<T>(b, K, N);
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
    const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
    View<T> C(c, M, N);
    if (accumulate) C.noalias() += ConstView<T>(a, M, K) * ConstView<T>(b, N, K).transpose();
    else C.noalias() = ConstView<T>(a, M, K) * ConstView<T>(b, N, K).transpose();
}

// C[m,n] (+)= A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
    const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
    View<T> C(c, M, N);
    if (accumulate) C.noalias() += ConstView<T>(a, K, M).transpose() * ConstView<T>(b, K, N);
    else C.noalias() = ConstView<T>(a, K, M).transpose() * ConstView<T>(b, K, N);
}

}  // namespace bwarea::kernels
