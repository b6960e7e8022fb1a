#include "linalg.hpp"

#include <Eigen/Core>

namespace cfpn::linalg {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

}  // namespace

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  ConstMap A(a, idx(m), idx(k));
  ConstMap B(b, idx(k), idx(n));
  MutMap C(c, idx(m), idx(n));
  if (accumulate) {
    C.noalias() += A * B;
  } else {
    C.noalias() = A * B;
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  ConstMap A(a, idx(m), idx(k));
  ConstMap B(b, idx(n), idx(k));
  MutMap C(c, idx(m), idx(n));
  if (accumulate) {
    C.noalias() += A * B.transpose();
  } else {
    C.noalias() = A * B.transpose();
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  ConstMap A(a, idx(k), idx(m));
  ConstMap B(b, idx(k), idx(n));
  MutMap C(c, idx(m), idx(n));
  if (accumulate) {
    C.noalias() += A.transpose() * B;
  } else {
    C.noalias() = A.transpose() * B;
  }
}

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t hw_out = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * hw_out;
        for (std::size_t oh = 0; oh < g.out_height; ++oh) {
          // signed arithmetic for the padded border
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.padding);
          double* out = row + oh * g.out_width;
          if (ih < 0 || ih >= static_cast<long>(g.height)) {
            for (std::size_t ow = 0; ow < g.out_width; ++ow) out[ow] = 0.0;
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(ih) * g.width;
          for (std::size_t ow = 0; ow < g.out_width; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.padding);
            out[ow] = (iw < 0 || iw >= static_cast<long>(g.width)) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* dx) {
  const std::size_t hw_out = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = dx + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * hw_out;
        for (std::size_t oh = 0; oh < g.out_height; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.padding);
          if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
          double* dst = plane + static_cast<std::size_t>(ih) * g.width;
          const double* in = row + oh * g.out_width;
          for (std::size_t ow = 0; ow < g.out_width; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.padding);
            if (iw >= 0 && iw < static_cast<long>(g.width)) dst[iw] += in[ow];
          }
        }
      }
    }
  }
}

}  // namespace cfpn::linalg
