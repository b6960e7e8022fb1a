#include <algorithm>
#include <cmath>
#include <memory>

#include "cfpn/autodiff.hpp"
#include "cfpn/error.hpp"
#include "linalg.hpp"

namespace cfpn {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         to_string(t.shape()));
  }
}

Tape& same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw Error("operands live on different tapes");
  return a.tape();
}

// Per-axis interpolation table for half-pixel-centre resizing.
struct AxisTable {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

AxisTable make_axis_table(std::size_t in, std::size_t out) {
  AxisTable t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  const double max_src = static_cast<double>(in - 1);
  for (std::size_t d = 0; d < out; ++d) {
    double s = (static_cast<double>(d) + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, max_src);
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    t.lo[d] = i0;
    t.hi[d] = std::min(i0 + 1, in - 1);
    t.frac[d] = s - static_cast<double>(i0);
  }
  return t;
}

// Largest im2col buffer (in doubles) kept alive between forward and backward.
constexpr std::size_t kMaxSavedColumns = std::size_t{8} << 20;

}  // namespace

Var conv2d(const Var& x, const Var& weight, const std::optional<Var>& bias, std::size_t stride,
           std::size_t padding) {
  Tape& tape = same_tape(x, weight);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank(xv, 3, "conv2d input");
  require_rank(wv, 4, "conv2d weight");
  if (wv.dim(1) != xv.dim(0)) {
    throw DimensionError("conv2d: input " + to_string(xv.shape()) + " has " + std::to_string(xv.dim(0)) +
                         " channels but weight " + to_string(wv.shape()) + " expects " +
                         std::to_string(wv.dim(1)));
  }
  if (wv.dim(2) != wv.dim(3)) throw DimensionError("conv2d: non-square kernel " + to_string(wv.shape()));
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t k = wv.dim(2);
  if (xv.dim(1) + 2 * padding < k || xv.dim(2) + 2 * padding < k) {
    throw DimensionError("conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                         to_string(xv.shape()));
  }
  if (bias) {
    same_tape(x, *bias);
    if (bias->value().shape() != Shape{wv.dim(0)}) {
      throw DimensionError("conv2d: bias " + to_string(bias->value().shape()) + " does not match weight " +
                           to_string(wv.shape()));
    }
  }

  linalg::ConvGeometry g{xv.dim(0), xv.dim(1), xv.dim(2), k, stride, padding, 0, 0};
  g.out_height = (g.height + 2 * padding - k) / stride + 1;
  g.out_width = (g.width + 2 * padding - k) / stride + 1;
  const std::size_t out_c = wv.dim(0);
  const std::size_t spatial = g.col_cols();

  Tensor out({out_c, g.out_height, g.out_width});
  // The column buffer is kept for the weight gradient unless it is large.
  std::shared_ptr<std::vector<double>> saved_cols;
  if (g.is_pointwise()) {
    linalg::gemm_nn(wv.data(), xv.data(), out.data(), out_c, g.col_rows(), spatial, false);
  } else {
    auto cols = std::make_shared<std::vector<double>>(g.col_rows() * spatial);
    linalg::im2col(xv.data(), g, cols->data());
    linalg::gemm_nn(wv.data(), cols->data(), out.data(), out_c, g.col_rows(), spatial, false);
    if (tape.requires_grad(weight) && cols->size() <= kMaxSavedColumns) saved_cols = std::move(cols);
  }
  if (bias) {
    const Tensor& bv = bias->value();
    for (std::size_t o = 0; o < out_c; ++o) {
      double* row = out.data() + o * spatial;
      for (std::size_t i = 0; i < spatial; ++i) row[i] += bv[o];
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  const std::optional<Var> b = bias;
  return tape.record(OpKind::kConv2d, std::move(out), std::move(inputs),
                     [x, weight, b, g, out_c, spatial, saved_cols](Tape& t, const Tensor& dy) {
                       const Tensor& xv = x.value();
                       const Tensor& wv = weight.value();
                       std::vector<double> scratch;
                       std::vector<double>& cols = saved_cols ? *saved_cols : scratch;
                       const double* colp = xv.data();
                       if (!g.is_pointwise()) {
                         if (!saved_cols) {
                           cols.resize(g.col_rows() * spatial);
                           if (t.requires_grad(weight)) linalg::im2col(xv.data(), g, cols.data());
                         }
                         colp = cols.data();
                       }
                       if (t.requires_grad(weight)) {
                         linalg::gemm_nt(dy.data(), colp, t.grad_buffer(weight).data(), out_c, spatial,
                                         g.col_rows(), true);
                       }
                       if (b && t.requires_grad(*b)) {
                         Tensor& db = t.grad_buffer(*b);
                         for (std::size_t o = 0; o < out_c; ++o) {
                           const double* row = dy.data() + o * spatial;
                           double s = 0.0;
                           for (std::size_t i = 0; i < spatial; ++i) s += row[i];
                           db[o] += s;
                         }
                       }
                       if (t.requires_grad(x)) {
                         Tensor& dx = t.grad_buffer(x);
                         if (g.is_pointwise()) {
                           linalg::gemm_tn(wv.data(), dy.data(), dx.data(), g.col_rows(), out_c, spatial,
                                           true);
                         } else {
                           linalg::gemm_tn(wv.data(), dy.data(), cols.data(), g.col_rows(), out_c, spatial,
                                           false);
                           linalg::col2im_add(cols.data(), g, dx.data());
                         }
                       }
                     });
}

Var relu(const Var& x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  // NaN passes through so numeric failures surface in the loss.
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] < 0.0 ? 0.0 : xv[i] + 0.0;
  return x.tape().record(OpKind::kRelu, std::move(out), {x}, [x](Tape& t, const Tensor& dy) {
    const Tensor& xv = x.value();
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < xv.numel(); ++i) {
      if (xv[i] > 0.0) dx[i] += dy[i];
    }
  });
}

Var sigmoid(const Var& x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    const double v = xv[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  Tape& tape = x.tape();
  auto y = std::make_shared<Tensor>(out);
  return tape.record(OpKind::kSigmoid, std::move(out), {x}, [x, y](Tape& t, const Tensor& dy) {
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < y->numel(); ++i) dx[i] += dy[i] * (*y)[i] * (1.0 - (*y)[i]);
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BnRunningStats stats, BnMode mode,
               bool update_stats) {
  Tape& tape = same_tape(x, gamma);
  same_tape(x, beta);
  const Tensor& xv = x.value();
  require_rank(xv, 3, "batch_norm input");
  const std::size_t channels = xv.dim(0);
  const std::size_t plane = xv.dim(1) * xv.dim(2);
  if (gamma.value().shape() != Shape{channels} || beta.value().shape() != Shape{channels}) {
    throw DimensionError("batch_norm: input " + to_string(xv.shape()) + " vs gamma " +
                         to_string(gamma.value().shape()) + " / beta " + to_string(beta.value().shape()));
  }
  if (!stats.mean || !stats.var || stats.mean->shape() != Shape{channels} ||
      stats.var->shape() != Shape{channels}) {
    throw DimensionError("batch_norm: running statistics missing or mis-shaped for " +
                         std::to_string(channels) + " channels");
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();

  // Normalised activations and per-channel inverse std are kept for backward.
  auto xhat = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(channels);
  Tensor out(xv.shape());
  const double n = static_cast<double>(plane);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = xv.data() + c * plane;
    double mu;
    double var;
    if (mode == BnMode::kTrain) {
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += src[i];
      mu = s / n;
      double ss = 0.0;
      for (std::size_t i = 0; i < plane; ++i) ss += (src[i] - mu) * (src[i] - mu);
      var = ss / n;
      if (update_stats) {
        (*stats.mean)[c] = (1.0 - kBnMomentum) * (*stats.mean)[c] + kBnMomentum * mu;
        (*stats.var)[c] = (1.0 - kBnMomentum) * (*stats.var)[c] + kBnMomentum * var;
      }
    } else {
      mu = (*stats.mean)[c];
      var = (*stats.var)[c];
    }
    const double is = 1.0 / std::sqrt(var + kBnEpsilon);
    (*inv_std)[c] = is;
    double* xh = xhat->data() + c * plane;
    double* dst = out.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      xh[i] = (src[i] - mu) * is;
      dst[i] = gv[c] * xh[i] + bv[c];
    }
  }

  return tape.record(
      OpKind::kBatchNorm, std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, mode, channels, plane](Tape& t, const Tensor& dy) {
        const Tensor& gv = gamma.value();
        const double n = static_cast<double>(plane);
        for (std::size_t c = 0; c < channels; ++c) {
          const double* g = dy.data() + c * plane;
          const double* xh = xhat->data() + c * plane;
          double sum_dy = 0.0;
          double sum_dy_xh = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            sum_dy += g[i];
            sum_dy_xh += g[i] * xh[i];
          }
          if (t.requires_grad(gamma)) t.grad_buffer(gamma)[c] += sum_dy_xh;
          if (t.requires_grad(beta)) t.grad_buffer(beta)[c] += sum_dy;
          if (t.requires_grad(x)) {
            double* dx = t.grad_buffer(x).data() + c * plane;
            const double scale = gv[c] * (*inv_std)[c];
            if (mode == BnMode::kTrain) {
              const double mean_dy = sum_dy / n;
              const double mean_dy_xh = sum_dy_xh / n;
              for (std::size_t i = 0; i < plane; ++i) dx[i] += scale * (g[i] - mean_dy - xh[i] * mean_dy_xh);
            } else {
              for (std::size_t i = 0; i < plane; ++i) dx[i] += scale * g[i];
            }
          }
        }
      });
}

Var avg_pool2d(const Var& x, std::size_t rate) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "avg_pool2d");
  if (rate == 0 || xv.dim(1) % rate != 0 || xv.dim(2) % rate != 0) {
    throw DivisibilityError("avg_pool2d: rate " + std::to_string(rate) + " does not divide spatial size " +
                            std::to_string(xv.dim(1)) + "x" + std::to_string(xv.dim(2)));
  }
  const std::size_t c_n = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const std::size_t oh = h / rate, ow = w / rate;
  const double inv = 1.0 / static_cast<double>(rate * rate);
  Tensor out({c_n, oh, ow});
  if (rate == 1) {
    out = xv;
  } else {
    for (std::size_t c = 0; c < c_n; ++c) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          double s = 0.0;
          for (std::size_t di = 0; di < rate; ++di) {
            for (std::size_t dj = 0; dj < rate; ++dj) s += xv.at(c, i * rate + di, j * rate + dj);
          }
          out.at(c, i, j) = s * inv;
        }
      }
    }
  }
  return x.tape().record(OpKind::kAvgPool, std::move(out), {x},
                         [x, rate, inv, c_n, oh, ow](Tape& t, const Tensor& dy) {
                           Tensor& dx = t.grad_buffer(x);
                           if (rate == 1) {
                             dx.add_inplace(dy);
                             return;
                           }
                           for (std::size_t c = 0; c < c_n; ++c) {
                             for (std::size_t i = 0; i < oh; ++i) {
                               for (std::size_t j = 0; j < ow; ++j) {
                                 const double g = dy.at(c, i, j) * inv;
                                 for (std::size_t di = 0; di < rate; ++di) {
                                   for (std::size_t dj = 0; dj < rate; ++dj) dx.at(c, i * rate + di, j * rate + dj) += g;
                                 }
                               }
                             }
                           }
                         });
}

Var global_avg_pool(const Var& x) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "global_avg_pool");
  const std::size_t c_n = xv.dim(0);
  const std::size_t plane = xv.dim(1) * xv.dim(2);
  const double inv = 1.0 / static_cast<double>(plane);
  Tensor out({c_n});
  for (std::size_t c = 0; c < c_n; ++c) {
    const double* src = xv.data() + c * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += src[i];
    out[c] = s * inv;
  }
  return x.tape().record(OpKind::kGlobalAvgPool, std::move(out), {x},
                         [x, c_n, plane, inv](Tape& t, const Tensor& dy) {
                           Tensor& dx = t.grad_buffer(x);
                           for (std::size_t c = 0; c < c_n; ++c) {
                             double* dst = dx.data() + c * plane;
                             const double g = dy[c] * inv;
                             for (std::size_t i = 0; i < plane; ++i) dst[i] += g;
                           }
                         });
}

Var bilinear_upsample(const Var& x, std::size_t out_h, std::size_t out_w) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "bilinear_upsample");
  const std::size_t c_n = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  if (out_h < h || out_w < w) {
    throw DimensionError("bilinear_upsample: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                         " is smaller than input " + to_string(xv.shape()));
  }
  auto rows = std::make_shared<AxisTable>(make_axis_table(h, out_h));
  auto cols = std::make_shared<AxisTable>(make_axis_table(w, out_w));
  Tensor out({c_n, out_h, out_w});
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t i = 0; i < out_h; ++i) {
      const std::size_t r0 = rows->lo[i], r1 = rows->hi[i];
      const double fy = rows->frac[i];
      for (std::size_t j = 0; j < out_w; ++j) {
        const std::size_t c0 = cols->lo[j], c1 = cols->hi[j];
        const double fx = cols->frac[j];
        // lerp form keeps constant inputs exact
        const double top = xv.at(c, r0, c0) + fx * (xv.at(c, r0, c1) - xv.at(c, r0, c0));
        const double bot = xv.at(c, r1, c0) + fx * (xv.at(c, r1, c1) - xv.at(c, r1, c0));
        out.at(c, i, j) = top + fy * (bot - top);
      }
    }
  }
  return x.tape().record(OpKind::kUpsample, std::move(out), {x},
                         [x, rows, cols, c_n, out_h, out_w](Tape& t, const Tensor& dy) {
                           Tensor& dx = t.grad_buffer(x);
                           for (std::size_t c = 0; c < c_n; ++c) {
                             for (std::size_t i = 0; i < out_h; ++i) {
                               const std::size_t r0 = rows->lo[i], r1 = rows->hi[i];
                               const double fy = rows->frac[i];
                               for (std::size_t j = 0; j < out_w; ++j) {
                                 const std::size_t c0 = cols->lo[j], c1 = cols->hi[j];
                                 const double fx = cols->frac[j];
                                 const double g = dy.at(c, i, j);
                                 dx.at(c, r0, c0) += g * (1.0 - fy) * (1.0 - fx);
                                 dx.at(c, r0, c1) += g * (1.0 - fy) * fx;
                                 dx.at(c, r1, c0) += g * fy * (1.0 - fx);
                                 dx.at(c, r1, c1) += g * fy * fx;
                               }
                             }
                           }
                         });
}

Var concat_channels(std::span<const Var> xs) {
  if (xs.empty()) throw DimensionError("concat_channels: no inputs");
  Tape& tape = xs.front().tape();
  const Shape& first = xs.front().value().shape();
  Shape trailing(first.begin() + 1, first.end());
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    same_tape(xs.front(), xs[i]);
    const Shape& s = xs[i].value().shape();
    if (s.empty() || Shape(s.begin() + 1, s.end()) != trailing) {
      throw DimensionError("concat_channels: input " + std::to_string(i) + " has shape " + to_string(s) +
                           ", expected trailing dims of " + to_string(first));
    }
    offsets.push_back(total);
    total += s[0];
  }
  const std::size_t inner = shape_numel(trailing);
  Shape out_shape = first;
  out_shape[0] = total;
  Tensor out(out_shape);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Tensor& v = xs[i].value();
    std::copy(v.data(), v.data() + v.numel(), out.data() + offsets[i] * inner);
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return tape.record(OpKind::kConcat, std::move(out), inputs,
                     [inputs, offsets, inner](Tape& t, const Tensor& dy) {
                       for (std::size_t i = 0; i < inputs.size(); ++i) {
                         if (!t.requires_grad(inputs[i])) continue;
                         Tensor& dx = t.grad_buffer(inputs[i]);
                         const double* src = dy.data() + offsets[i] * inner;
                         for (std::size_t k = 0; k < dx.numel(); ++k) dx[k] += src[k];
                       }
                     });
}

Var slice_channels(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0 || begin >= end || end > xv.dim(0)) {
    throw DimensionError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for shape " + to_string(xv.shape()));
  }
  const std::size_t inner = xv.numel() / xv.dim(0);
  Shape s = xv.shape();
  s[0] = end - begin;
  Tensor out(s, std::vector<double>(xv.data() + begin * inner, xv.data() + end * inner));
  return x.tape().record(OpKind::kSlice, std::move(out), {x}, [x, begin, inner](Tape& t, const Tensor& dy) {
    double* dst = t.grad_buffer(x).data() + begin * inner;
    for (std::size_t k = 0; k < dy.numel(); ++k) dst[k] += dy[k];
  });
}

Var stack_rows(std::span<const Var> xs) {
  if (xs.empty()) throw DimensionError("stack_rows: no inputs");
  Tape& tape = xs.front().tape();
  const Shape& first = xs.front().value().shape();
  require_rank(xs.front().value(), 3, "stack_rows input");
  const std::size_t channels = first[0], width = first[2];
  std::vector<std::size_t> row_offsets;
  std::size_t rows = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    same_tape(xs.front(), xs[i]);
    const Shape& s = xs[i].value().shape();
    if (s.size() != 3 || s[0] != channels || s[2] != width) {
      throw DimensionError("stack_rows: input " + std::to_string(i) + " has shape " + to_string(s) +
                           ", expected channels and width of " + to_string(first));
    }
    row_offsets.push_back(rows);
    rows += s[1];
  }
  Tensor out({channels, rows, width});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Tensor& v = xs[i].value();
    const std::size_t plane = v.dim(1) * width;
    for (std::size_t c = 0; c < channels; ++c) {
      std::copy(v.data() + c * plane, v.data() + (c + 1) * plane, out.data() + (c * rows + row_offsets[i]) * width);
    }
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return tape.record(OpKind::kConcat, std::move(out), inputs,
                     [inputs, row_offsets, channels, rows, width](Tape& t, const Tensor& dy) {
                       for (std::size_t i = 0; i < inputs.size(); ++i) {
                         if (!t.requires_grad(inputs[i])) continue;
                         Tensor& dx = t.grad_buffer(inputs[i]);
                         const std::size_t plane = dx.dim(1) * width;
                         for (std::size_t c = 0; c < channels; ++c) {
                           const double* src = dy.data() + (c * rows + row_offsets[i]) * width;
                           double* dst = dx.data() + c * plane;
                           for (std::size_t k = 0; k < plane; ++k) dst[k] += src[k];
                         }
                       }
                     });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "slice_rows input");
  if (begin >= end || end > xv.dim(1)) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for shape " + to_string(xv.shape()));
  }
  const std::size_t channels = xv.dim(0), rows = xv.dim(1), width = xv.dim(2);
  const std::size_t plane = (end - begin) * width;
  Tensor out({channels, end - begin, width});
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = xv.data() + (c * rows + begin) * width;
    std::copy(src, src + plane, out.data() + c * plane);
  }
  return x.tape().record(OpKind::kSlice, std::move(out), {x},
                         [x, begin, channels, rows, width, plane](Tape& t, const Tensor& dy) {
                           Tensor& dx = t.grad_buffer(x);
                           for (std::size_t c = 0; c < channels; ++c) {
                             double* dst = dx.data() + (c * rows + begin) * width;
                             const double* src = dy.data() + c * plane;
                             for (std::size_t k = 0; k < plane; ++k) dst[k] += src[k];
                           }
                         });
}

Var fully_connected(const Var& x, const Var& weight, const Var& bias) {
  Tape& tape = same_tape(x, weight);
  same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  require_rank(xv, 1, "fully_connected input");
  require_rank(wv, 2, "fully_connected weight");
  const std::size_t din = wv.dim(0), dout = wv.dim(1);
  if (xv.dim(0) != din || bv.shape() != Shape{dout}) {
    throw DimensionError("fully_connected: input " + to_string(xv.shape()) + ", weight " + to_string(wv.shape()) +
                         ", bias " + to_string(bv.shape()) + " disagree");
  }
  Tensor out = bv;
  for (std::size_t i = 0; i < din; ++i) {
    const double xi = xv[i];
    const double* row = wv.data() + i * dout;
    for (std::size_t j = 0; j < dout; ++j) out[j] += xi * row[j];
  }
  return tape.record(OpKind::kFullyConnected, std::move(out), {x, weight, bias},
                     [x, weight, bias, din, dout](Tape& t, const Tensor& dy) {
                       const Tensor& xv = x.value();
                       const Tensor& wv = weight.value();
                       if (t.requires_grad(bias)) t.grad_buffer(bias).add_inplace(dy);
                       if (t.requires_grad(weight)) {
                         Tensor& dw = t.grad_buffer(weight);
                         for (std::size_t i = 0; i < din; ++i) {
                           double* row = dw.data() + i * dout;
                           for (std::size_t j = 0; j < dout; ++j) row[j] += xv[i] * dy[j];
                         }
                       }
                       if (t.requires_grad(x)) {
                         Tensor& dx = t.grad_buffer(x);
                         for (std::size_t i = 0; i < din; ++i) {
                           const double* row = wv.data() + i * dout;
                           double s = 0.0;
                           for (std::size_t j = 0; j < dout; ++j) s += row[j] * dy[j];
                           dx[i] += s;
                         }
                       }
                     });
}

Var pick(const Var& x, std::size_t index) {
  const Tensor& xv = x.value();
  if (index >= xv.numel()) {
    throw DimensionError("pick: index " + std::to_string(index) + " out of range for " + to_string(xv.shape()));
  }
  return x.tape().record(OpKind::kPick, Tensor::scalar(xv[index]), {x},
                         [x, index](Tape& t, const Tensor& dy) { t.grad_buffer(x)[index] += dy[0]; });
}

Var scale_by_scalar(const Var& x, const Var& s) {
  Tape& tape = same_tape(x, s);
  if (s.value().numel() != 1) {
    throw DimensionError("scale_by_scalar: scale must hold one element, got " + to_string(s.value().shape()));
  }
  const Tensor& xv = x.value();
  const double sv = s.value()[0];
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] * sv;
  return tape.record(OpKind::kScale, std::move(out), {x, s}, [x, s](Tape& t, const Tensor& dy) {
    const Tensor& xv = x.value();
    if (t.requires_grad(s)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < xv.numel(); ++i) acc += xv[i] * dy[i];
      t.grad_buffer(s)[0] += acc;
    }
    if (t.requires_grad(x)) {
      const double sv = s.value()[0];
      Tensor& dx = t.grad_buffer(x);
      for (std::size_t i = 0; i < xv.numel(); ++i) dx[i] += sv * dy[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  out.scale_inplace(factor);
  return x.tape().record(OpKind::kScaleConst, std::move(out), {x}, [x, factor](Tape& t, const Tensor& dy) {
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] += factor * dy[i];
  });
}

Var add(const Var& x, const Var& y) {
  Tape& tape = same_tape(x, y);
  require_same_shape(x.value().shape(), y.value().shape(), "add");
  Tensor out = x.value();
  out.add_inplace(y.value());
  return tape.record(OpKind::kAdd, std::move(out), {x, y}, [x, y](Tape& t, const Tensor& dy) {
    if (t.requires_grad(x)) t.grad_buffer(x).add_inplace(dy);
    if (t.requires_grad(y)) t.grad_buffer(y).add_inplace(dy);
  });
}

Var mul(const Var& x, const Var& y) {
  Tape& tape = same_tape(x, y);
  require_same_shape(x.value().shape(), y.value().shape(), "mul");
  const Tensor& xv = x.value();
  const Tensor& yv = y.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] * yv[i];
  return tape.record(OpKind::kMul, std::move(out), {x, y}, [x, y](Tape& t, const Tensor& dy) {
    const Tensor& xv = x.value();
    const Tensor& yv = y.value();
    if (t.requires_grad(x)) {
      Tensor& dx = t.grad_buffer(x);
      for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] += yv[i] * dy[i];
    }
    if (t.requires_grad(y)) {
      Tensor& dyv = t.grad_buffer(y);
      for (std::size_t i = 0; i < dy.numel(); ++i) dyv[i] += xv[i] * dy[i];
    }
  });
}

Var sum(const Var& x) {
  return x.tape().record(OpKind::kSum, Tensor::scalar(x.value().sum()), {x}, [x](Tape& t, const Tensor& dy) {
    Tensor& dx = t.grad_buffer(x);
    for (auto& v : dx.values()) v += dy[0];
  });
}

Var mean(const Var& x) {
  const double inv = 1.0 / static_cast<double>(x.value().numel());
  return x.tape().record(OpKind::kMean, Tensor::scalar(x.value().sum() * inv), {x},
                         [x, inv](Tape& t, const Tensor& dy) {
                           Tensor& dx = t.grad_buffer(x);
                           for (auto& v : dx.values()) v += dy[0] * inv;
                         });
}

}  // namespace cfpn
