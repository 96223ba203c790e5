#pragma once

#include <Eigen/Core>
#include <cstdint>

// Row-major GEMM helpers over raw buffers. Eigen supplies the kernels; all
// call sites stay in terms of plain pointers so the dependency is contained
// here.

namespace mctnet::detail {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// c[m,n] (+)= a[m,k] * b[k,n]
inline void gemm_nn(const double* a, const double* b, double* c, int64_t m,
                    int64_t k, int64_t n, bool accumulate) {
  CMapMat A(a, m, k), B(b, k, n);
  MapMat C(c, m, n);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

// c[m,n] (+)= a[m,k] * b[n,k]^T
inline void gemm_nt(const double* a, const double* b, double* c, int64_t m,
                    int64_t k, int64_t n, bool accumulate) {
  CMapMat A(a, m, k), B(b, n, k);
  MapMat C(c, m, n);
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

// c[m,n] (+)= a[k,m]^T * b[k,n]
inline void gemm_tn(const double* a, const double* b, double* c, int64_t m,
                    int64_t k, int64_t n, bool accumulate) {
  CMapMat A(a, k, m), B(b, k, n);
  MapMat C(c, m, n);
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

}  // namespace mctnet::detail
