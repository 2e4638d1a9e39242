#pragma once

// Thin wrappers around Eigen for the three GEMM forms the tape needs.
// Eigen runs single-threaded here (EIGEN_DONT_PARALLELIZE is set project-wide);
// parallelism lives at the batch level where reductions stay deterministic.

#include <Eigen/Core>

namespace fewfont {

template <typename T>
using EigenMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<EigenMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const EigenMat<T>>;

// c[m,n] = a[m,k] * b[k,n]  (+= when accumulate)
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate = false) {
    ConstMatMap<T> A(a, m, k), B(b, k, n);
    MatMap<T> C(c, m, n);
    if (accumulate)
        C.noalias() += A * B;
    else
        C.noalias() = A * B;
}

// c[m,n] = a^T * b with a stored [k,m]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate = false) {
    ConstMatMap<T> A(a, k, m), B(b, k, n);
    MatMap<T> C(c, m, n);
    if (accumulate)
        C.noalias() += A.transpose() * B;
    else
        C.noalias() = A.transpose() * B;
}

// c[m,n] = a * b^T with b stored [n,k]
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate = false) {
    ConstMatMap<T> A(a, m, k), B(b, n, k);
    MatMap<T> C(c, m, n);
    if (accumulate)
        C.noalias() += A * B.transpose();
    else
        C.noalias() = A * B.transpose();
}

}  // namespace fewfont
