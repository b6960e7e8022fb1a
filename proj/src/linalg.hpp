#pragma once

// Dense kernels behind the convolution and fully connected ops. Row-major
// GEMM is delegated to Eigen (single-threaded, fixed reduction order).

#include <cstddef>

namespace cfpn::linalg {

/// C[m,n] (+)= A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);
/// C[m,n] (+)= A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);
/// C[m,n] (+)= A[k,m]^T * B[k,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernel, stride, padding;
  std::size_t out_height, out_width;

  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return out_height * out_width; }
  bool is_pointwise() const { return kernel == 1 && stride == 1 && padding == 0; }
};

/// Unfolds x [C,H,W] into cols [C*k*k, Ho*Wo].
void im2col(const double* x, const ConvGeometry& g, double* cols);
/// Adjoint of im2col: accumulates cols back into dx [C,H,W].
void col2im_add(const double* cols, const ConvGeometry& g, double* dx);

}  // namespace cfpn::linalg
