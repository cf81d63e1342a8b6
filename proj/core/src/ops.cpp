#include "clci/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "clci/error.hpp"
#include "gemm.hpp"

namespace clci {

namespace {

template <typename T>
using Node = detail::Node<T>;

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (!(a == b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) +
                     " vs " + to_string(b));
  }
}

template <typename T>
void accumulate(Node<T>& parent, std::size_t i, T g) {
  parent.grad[i] += g;
}

// Column layout: row r = (ci * kh + ki) * kw + kj, column p = oy * ow + ox.
struct ConvGeometry {
  int c_in, h, w;
  int kh, kw;
  Pair stride, dilation, padding;
  int oh, ow;

  std::size_t rows() const { return static_cast<std::size_t>(c_in) * kh * kw; }
  std::size_t cols() const { return static_cast<std::size_t>(oh) * ow; }
  bool is_pointwise() const {
    return kh == 1 && kw == 1 && stride == Pair{1, 1} && padding == Pair{0, 0};
  }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  for (int ci = 0; ci < g.c_in; ++ci) {
    const T* plane = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        T* row = cols + ((static_cast<std::size_t>(ci) * g.kh + ki) * g.kw +
                         kj) * g.cols();
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride.h - g.padding.h + ki * g.dilation.h;
          T* out = row + static_cast<std::size_t>(oy) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + g.ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride.w - g.padding.w + kj * g.dilation.w;
            out[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_accumulate(const ConvGeometry& g, const T* cols, T* dx) {
  for (int ci = 0; ci < g.c_in; ++ci) {
    T* plane = dx + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + ((static_cast<std::size_t>(ci) * g.kh + ki) *
                                   g.kw + kj) * g.cols();
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride.h - g.padding.h + ki * g.dilation.h;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * g.ow;
          T* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride.w - g.padding.w + kj * g.dilation.w;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

struct AxisWeights {
  std::vector<int> lo, hi;
  std::vector<double> w_lo, w_hi;
};

AxisWeights bilinear_axis(int in, int factor) {
  const int out = in * factor;
  AxisWeights a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.w_lo.resize(out);
  a.w_hi.resize(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) / factor - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in - 1);
    const double frac = src - lo;
    a.lo[o] = lo;
    a.hi[o] = hi;
    a.w_lo[o] = 1.0 - frac;
    a.w_hi[o] = frac;
  }
  return a;
}

}  // namespace

int conv_output_size(int in, int kernel, int stride, int dilation, int pad) {
  const int span = in + 2 * pad - dilation * (kernel - 1) - 1;
  if (span < 0) return 0;
  return span / stride + 1;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const ConvParams<T>& p) {
  const Shape& xs = input.shape();
  const Shape& ks = p.kernel.shape();
  if (p.stride.h < 1 || p.stride.w < 1 || p.dilation.h < 1 ||
      p.dilation.w < 1 || p.padding.h < 0 || p.padding.w < 0) {
    throw ConfigError("conv2d: stride and dilation must be >= 1 and padding "
                      ">= 0");
  }
  if (xs.c != ks.c) {
    throw ShapeError("conv2d: input " + to_string(xs) +
                     " has a channel count that does not match kernel " +
                     to_string(ks));
  }
  if (p.bias && p.bias->numel() != static_cast<std::size_t>(ks.n)) {
    throw ShapeError("conv2d: bias " + to_string(p.bias->shape()) +
                     " does not match kernel " + to_string(ks));
  }
  ConvGeometry g{xs.c,      xs.h,       xs.w,      ks.h, ks.w,
                 p.stride,  p.dilation, p.padding, 0,    0};
  g.oh = conv_output_size(xs.h, ks.h, p.stride.h, p.dilation.h, p.padding.h);
  g.ow = conv_output_size(xs.w, ks.w, p.stride.w, p.dilation.w, p.padding.w);
  if (g.oh < 1 || g.ow < 1) {
    throw ShapeError("conv2d: input " + to_string(xs) + " with kernel " +
                     to_string(ks) + " produces an empty output");
  }

  const int c_out = ks.n;
  const Shape out_shape{xs.n, c_out, g.oh, g.ow};
  const std::size_t rows = g.rows();
  const std::size_t cols = g.cols();
  const std::size_t in_stride = static_cast<std::size_t>(xs.c) * xs.h * xs.w;
  const std::size_t out_stride = static_cast<std::size_t>(c_out) * cols;
  const bool pointwise = g.is_pointwise();

  std::vector<T> out(out_shape.numel(), T(0));
  std::vector<T> col_buf(pointwise ? 0 : rows * cols);
  const T* kernel = p.kernel.data().data();
  for (int b = 0; b < xs.n; ++b) {
    const T* x = input.data().data() + b * in_stride;
    const T* col = x;
    if (!pointwise) {
      im2col(g, x, col_buf.data());
      col = col_buf.data();
    }
    T* y = out.data() + b * out_stride;
    detail::gemm_accumulate<T>(c_out, cols, rows, kernel, col, y);
    if (p.bias) {
      const auto bias = p.bias->data();
      for (int co = 0; co < c_out; ++co) {
        T* yc = y + static_cast<std::size_t>(co) * cols;
        for (std::size_t i = 0; i < cols; ++i) yc[i] += bias[co];
      }
    }
  }

  std::vector<BasicTensor<T>> parents{input, p.kernel};
  if (p.bias) parents.push_back(*p.bias);
  const bool has_bias = p.bias.has_value();

  return BasicTensor<T>::make_result(
      out_shape, std::move(out), std::move(parents),
      [g, pointwise, has_bias, rows, cols, in_stride, out_stride,
       c_out](Node<T>& self) {
        Node<T>& x = *self.parents[0];
        Node<T>& k = *self.parents[1];
        const int batch = self.shape.n;
        std::vector<T> col_buf(pointwise ? 0 : rows * cols);
        std::vector<T> col_t;
        std::vector<T> kernel_t;
        std::vector<T> dcol;
        if (k.requires_grad) col_t.resize(rows * cols);
        if (x.requires_grad) {
          kernel_t.resize(rows * c_out);
          detail::transpose<T>(c_out, rows, k.data.data(), kernel_t.data());
          dcol.resize(rows * cols);
        }
        for (int b = 0; b < batch; ++b) {
          const T* dy = self.grad.data() + b * out_stride;
          if (k.requires_grad) {
            const T* xb = x.data.data() + b * in_stride;
            const T* col = xb;
            if (!pointwise) {
              im2col(g, xb, col_buf.data());
              col = col_buf.data();
            }
            detail::transpose<T>(rows, cols, col, col_t.data());
            detail::gemm_accumulate<T>(c_out, rows, cols, dy, col_t.data(),
                                       k.grad.data());
          }
          if (x.requires_grad) {
            T* dx = x.grad.data() + b * in_stride;
            if (pointwise) {
              detail::gemm_accumulate<T>(rows, cols, c_out, kernel_t.data(),
                                         dy, dx);
            } else {
              std::fill(dcol.begin(), dcol.end(), T(0));
              detail::gemm_accumulate<T>(rows, cols, c_out, kernel_t.data(),
                                         dy, dcol.data());
              col2im_accumulate(g, dcol.data(), dx);
            }
          }
        }
        if (has_bias && self.parents[2]->requires_grad) {
          Node<T>& bias = *self.parents[2];
          for (int co = 0; co < c_out; ++co) {
            T acc = T(0);
            for (int b = 0; b < batch; ++b) {
              const T* dy = self.grad.data() + b * out_stride +
                            static_cast<std::size_t>(co) * cols;
              for (std::size_t i = 0; i < cols; ++i) acc += dy[i];
            }
            bias.grad[co] += acc;
          }
        }
      },
      "conv2d");
}

template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input,
                          const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, RunningStats<T>& stats,
                          Mode mode, T momentum, T epsilon) {
  const Shape& s = input.shape();
  const std::size_t c = static_cast<std::size_t>(s.c);
  if (gamma.numel() != c || beta.numel() != c || stats.mean.size() != c ||
      stats.var.size() != c) {
    throw ShapeError("batch_norm: input " + to_string(s) + " has " +
                     std::to_string(c) + " channels but gamma/beta/stats have " +
                     std::to_string(gamma.numel()) + "/" +
                     std::to_string(beta.numel()) + "/" +
                     std::to_string(stats.mean.size()));
  }
  const std::size_t plane = s.plane();
  const std::size_t count = static_cast<std::size_t>(s.n) * plane;
  const auto x = input.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();

  std::vector<T> inv_std(c);
  std::vector<T> xhat(s.numel());
  for (std::size_t ch = 0; ch < c; ++ch) {
    T mean, var;
    if (mode == Mode::kTrain) {
      T acc = T(0);
      for (int b = 0; b < s.n; ++b) {
        const T* src = x.data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += src[i];
      }
      mean = acc / static_cast<T>(count);
      T sq = T(0);
      for (int b = 0; b < s.n; ++b) {
        const T* src = x.data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const T d = src[i] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<T>(count);
      stats.mean[ch] = (T(1) - momentum) * stats.mean[ch] + momentum * mean;
      stats.var[ch] = (T(1) - momentum) * stats.var[ch] + momentum * var;
    } else {
      mean = stats.mean[ch];
      var = stats.var[ch];
    }
    inv_std[ch] = T(1) / std::sqrt(var + epsilon);
    for (int b = 0; b < s.n; ++b) {
      const std::size_t off = (b * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xhat[off + i] = (x[off + i] - mean) * inv_std[ch];
      }
    }
  }

  std::vector<T> out(s.numel());
  for (int b = 0; b < s.n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        out[off + i] = gm[ch] * xhat[off + i] + bt[ch];
      }
    }
  }

  const bool train = mode == Mode::kTrain;
  return BasicTensor<T>::make_result(
      s, std::move(out), {input, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), train, c, plane,
       count](Node<T>& self) {
        Node<T>& x = *self.parents[0];
        Node<T>& gamma = *self.parents[1];
        Node<T>& beta = *self.parents[2];
        const int batch = self.shape.n;
        const T* dy = self.grad.data();
        for (std::size_t ch = 0; ch < c; ++ch) {
          T sum_dy = T(0);
          T sum_dy_xhat = T(0);
          for (int b = 0; b < batch; ++b) {
            const std::size_t off = (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy += dy[off + i];
              sum_dy_xhat += dy[off + i] * xhat[off + i];
            }
          }
          if (gamma.requires_grad) gamma.grad[ch] += sum_dy_xhat;
          if (beta.requires_grad) beta.grad[ch] += sum_dy;
          if (!x.requires_grad) continue;
          const T g = gamma.data[ch];
          if (train) {
            const T m = static_cast<T>(count);
            const T scale = g * inv_std[ch] / m;
            for (int b = 0; b < batch; ++b) {
              const std::size_t off = (b * c + ch) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                x.grad[off + i] += scale * (m * dy[off + i] - sum_dy -
                                            xhat[off + i] * sum_dy_xhat);
              }
            }
          } else {
            const T scale = g * inv_std[ch];
            for (int b = 0; b < batch; ++b) {
              const std::size_t off = (b * c + ch) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                x.grad[off + i] += scale * dy[off + i];
              }
            }
          }
        }
      },
      "batch_norm");
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = in[i] > T(0) ? in[i] : T(0);
  }
  return BasicTensor<T>::make_result(
      x.shape(), std::move(out), {x},
      [](Node<T>& self) {
        Node<T>& x = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (x.data[i] > T(0)) x.grad[i] += self.grad[i];
        }
      },
      "relu");
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  // Clamped so saturated outputs stay strictly inside (0, 1).
  const T lo = std::numeric_limits<T>::min();
  const T hi = std::nextafter(T(1), T(0));
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const T v = in[i];
    T y;
    if (v >= T(0)) {
      y = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      y = e / (T(1) + e);
    }
    out[i] = std::clamp(y, lo, hi);
  }
  return BasicTensor<T>::make_result(
      x.shape(), std::move(out), {x},
      [](Node<T>& self) {
        Node<T>& x = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const T y = self.data[i];
          x.grad[i] += self.grad[i] * y * (T(1) - y);
        }
      },
      "sigmoid");
}

template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
  return BasicTensor<T>::make_result(
      x.shape(), std::move(out), {x},
      [](Node<T>& self) {
        Node<T>& x = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const T y = self.data[i];
          x.grad[i] += self.grad[i] * (T(1) - y * y);
        }
      },
      "tanh");
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& first = inputs[0].shape();
  Shape out_shape{first.n, 0, first.h, first.w};
  std::vector<int> offsets;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Shape& s = inputs[i].shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: input " + std::to_string(i) +
                       " has shape " + to_string(s) +
                       ", expected batch/spatial of " + to_string(first));
    }
    offsets.push_back(out_shape.c);
    out_shape.c += s.c;
  }
  const std::size_t plane = first.plane();
  std::vector<T> out(out_shape.numel());
  for (int b = 0; b < first.n; ++b) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const std::size_t len = inputs[i].shape().c * plane;
      const T* src = inputs[i].data().data() + b * len;
      T* dst = out.data() + (b * static_cast<std::size_t>(out_shape.c) +
                             offsets[i]) * plane;
      std::copy(src, src + len, dst);
    }
  }
  std::vector<BasicTensor<T>> parents(inputs.begin(), inputs.end());
  return BasicTensor<T>::make_result(
      out_shape, std::move(out), std::move(parents),
      [offsets, plane](Node<T>& self) {
        const int total_c = self.shape.c;
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
          Node<T>& p = *self.parents[i];
          if (!p.requires_grad) continue;
          const std::size_t len = p.shape.c * plane;
          for (int b = 0; b < self.shape.n; ++b) {
            const T* src = self.grad.data() +
                           (b * static_cast<std::size_t>(total_c) +
                            offsets[i]) * plane;
            T* dst = p.grad.data() + b * len;
            for (std::size_t j = 0; j < len; ++j) dst[j] += src[j];
          }
        }
      },
      "concat_channels");
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, int begin, int count) {
  const Shape& s = x.shape();
  if (begin < 0 || count < 1 || begin + count > s.c) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " +
                     to_string(s));
  }
  const Shape out_shape{s.n, count, s.h, s.w};
  const std::size_t plane = s.plane();
  const std::size_t len = static_cast<std::size_t>(count) * plane;
  std::vector<T> out(out_shape.numel());
  for (int b = 0; b < s.n; ++b) {
    const T* src = x.data().data() +
                   (b * static_cast<std::size_t>(s.c) + begin) * plane;
    std::copy(src, src + len, out.data() + b * len);
  }
  return BasicTensor<T>::make_result(
      out_shape, std::move(out), {x},
      [begin, plane, len](Node<T>& self) {
        Node<T>& x = *self.parents[0];
        for (int b = 0; b < self.shape.n; ++b) {
          T* dst = x.grad.data() +
                   (b * static_cast<std::size_t>(x.shape.c) + begin) * plane;
          const T* src = self.grad.data() + b * len;
          for (std::size_t j = 0; j < len; ++j) dst[j] += src[j];
        }
      },
      "slice_channels");
}

template <typename T>
BasicTensor<T> upsample_bilinear(const BasicTensor<T>& x, int factor) {
  if (factor < 1) {
    throw ConfigError("upsample_bilinear: factor must be >= 1, got " +
                      std::to_string(factor));
  }
  const Shape& s = x.shape();
  const Shape out_shape{s.n, s.c, s.h * factor, s.w * factor};
  const AxisWeights ay = bilinear_axis(s.h, factor);
  const AxisWeights ax = bilinear_axis(s.w, factor);
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  const std::size_t in_plane = s.plane();
  const std::size_t out_plane = out_shape.plane();

  std::vector<T> out(out_shape.numel());
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* src = x.data().data() + pl * in_plane;
    T* dst = out.data() + pl * out_plane;
    for (int oy = 0; oy < out_shape.h; ++oy) {
      const T* r0 = src + static_cast<std::size_t>(ay.lo[oy]) * s.w;
      const T* r1 = src + static_cast<std::size_t>(ay.hi[oy]) * s.w;
      const T wy0 = static_cast<T>(ay.w_lo[oy]);
      const T wy1 = static_cast<T>(ay.w_hi[oy]);
      for (int ox = 0; ox < out_shape.w; ++ox) {
        const T wx0 = static_cast<T>(ax.w_lo[ox]);
        const T wx1 = static_cast<T>(ax.w_hi[ox]);
        const int x0 = ax.lo[ox];
        const int x1 = ax.hi[ox];
        dst[static_cast<std::size_t>(oy) * out_shape.w + ox] =
            wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) +
            wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
      }
    }
  }
  return BasicTensor<T>::make_result(
      out_shape, std::move(out), {x},
      [ay, ax, planes, in_plane, out_plane](Node<T>& self) {
        Node<T>& x = *self.parents[0];
        const int in_w = x.shape.w;
        const int out_h = self.shape.h;
        const int out_w = self.shape.w;
        for (std::size_t pl = 0; pl < planes; ++pl) {
          const T* dy = self.grad.data() + pl * out_plane;
          T* dx = x.grad.data() + pl * in_plane;
          for (int oy = 0; oy < out_h; ++oy) {
            T* r0 = dx + static_cast<std::size_t>(ay.lo[oy]) * in_w;
            T* r1 = dx + static_cast<std::size_t>(ay.hi[oy]) * in_w;
            const T wy0 = static_cast<T>(ay.w_lo[oy]);
            const T wy1 = static_cast<T>(ay.w_hi[oy]);
            for (int ox = 0; ox < out_w; ++ox) {
              const T g = dy[static_cast<std::size_t>(oy) * out_w + ox];
              const T wx0 = static_cast<T>(ax.w_lo[ox]);
              const T wx1 = static_cast<T>(ax.w_hi[ox]);
              r0[ax.lo[ox]] += g * wy0 * wx0;
              r0[ax.hi[ox]] += g * wy0 * wx1;
              r1[ax.lo[ox]] += g * wy1 * wx0;
              r1[ax.hi[ox]] += g * wy1 * wx1;
            }
          }
        }
      },
      "upsample_bilinear");
}

template <typename T>
BasicTensor<T> broadcast_spatial(const BasicTensor<T>& x, int h, int w) {
  const Shape& s = x.shape();
  if (s.h != 1 || s.w != 1) {
    throw ShapeError("broadcast_spatial: expected spatial 1x1, got " +
                     to_string(s));
  }
  const Shape out_shape{s.n, s.c, h, w};
  validate_shape(out_shape);
  const std::size_t plane = out_shape.plane();
  std::vector<T> out(out_shape.numel());
  for (std::size_t pl = 0; pl < x.numel(); ++pl) {
    std::fill(out.begin() + pl * plane, out.begin() + (pl + 1) * plane,
              x.data()[pl]);
  }
  return BasicTensor<T>::make_result(
      out_shape, std::move(out), {x},
      [plane](Node<T>& self) {
        Node<T>& x = *self.parents[0];
        for (std::size_t pl = 0; pl < x.grad.size(); ++pl) {
          T acc = T(0);
          const T* g = self.grad.data() + pl * plane;
          for (std::size_t i = 0; i < plane; ++i) acc += g[i];
          x.grad[pl] += acc;
        }
      },
      "broadcast_spatial");
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  const Shape& s = x.shape();
  const Shape out_shape{s.n, s.c, 1, 1};
  const std::size_t plane = s.plane();
  std::vector<T> out(out_shape.numel());
  for (std::size_t pl = 0; pl < out.size(); ++pl) {
    T acc = T(0);
    const T* src = x.data().data() + pl * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += src[i];
    out[pl] = acc / static_cast<T>(plane);
  }
  return BasicTensor<T>::make_result(
      out_shape, std::move(out), {x},
      [plane](Node<T>& self) {
        Node<T>& x = *self.parents[0];
        const T scale = T(1) / static_cast<T>(plane);
        for (std::size_t pl = 0; pl < self.grad.size(); ++pl) {
          const T g = self.grad[pl] * scale;
          T* dst = x.grad.data() + pl * plane;
          for (std::size_t i = 0; i < plane; ++i) dst[i] += g;
        }
      },
      "global_avg_pool");
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape("add", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return BasicTensor<T>::make_result(
      a.shape(), std::move(out), {a, b},
      [](Node<T>& self) {
        for (int k = 0; k < 2; ++k) {
          Node<T>& p = *self.parents[k];
          if (!p.requires_grad) continue;
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            accumulate(p, i, self.grad[i]);
          }
        }
      },
      "add");
}

template <typename T>
BasicTensor<T> multiply(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape("multiply", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return BasicTensor<T>::make_result(
      a.shape(), std::move(out), {a, b},
      [](Node<T>& self) {
        Node<T>& a = *self.parents[0];
        Node<T>& b = *self.parents[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (a.requires_grad) a.grad[i] += self.grad[i] * b.data[i];
          if (b.requires_grad) b.grad[i] += self.grad[i] * a.data[i];
        }
      },
      "multiply");
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T acc = T(0);
  for (const T v : x.data()) acc += v;
  return BasicTensor<T>::make_result(
      Shape{1, 1, 1, 1}, {acc}, {x},
      [](Node<T>& self) {
        Node<T>& x = *self.parents[0];
        const T g = self.grad[0];
        for (T& d : x.grad) d += g;
      },
      "sum");
}

#define CLCI_INSTANTIATE_OPS(T)                                              \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const ConvParams<T>&); \
  template BasicTensor<T> batch_norm(const BasicTensor<T>&,                  \
                                     const BasicTensor<T>&,                  \
                                     const BasicTensor<T>&, RunningStats<T>&, \
                                     Mode, T, T);                            \
  template BasicTensor<T> relu(const BasicTensor<T>&);                       \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                    \
  template BasicTensor<T> tanh(const BasicTensor<T>&);                       \
  template BasicTensor<T> concat_channels(std::span<const BasicTensor<T>>);  \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, int, int);   \
  template BasicTensor<T> upsample_bilinear(const BasicTensor<T>&, int);     \
  template BasicTensor<T> broadcast_spatial(const BasicTensor<T>&, int, int); \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);            \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> multiply(const BasicTensor<T>&,                    \
                                   const BasicTensor<T>&);                   \
  template BasicTensor<T> sum(const BasicTensor<T>&);

CLCI_INSTANTIATE_OPS(float)
CLCI_INSTANTIATE_OPS(double)

#undef CLCI_INSTANTIATE_OPS

}  // namespace clci
