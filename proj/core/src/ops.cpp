#include "msdc/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "msdc/parallel.hpp"

namespace msdc {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

/// Geometry of a convolution from a "large" grid to a "small" grid. Rank-2
/// problems use a unit depth axis so one set of loops serves both ranks.
struct ConvGeometry {
  std::int64_t channels = 0;
  std::int64_t in[3] = {1, 1, 1};
  std::int64_t k[3] = {1, 1, 1};
  std::int64_t stride[3] = {1, 1, 1};
  std::int64_t pad[3] = {0, 0, 0};
  std::int64_t out[3] = {1, 1, 1};

  std::int64_t in_volume() const { return in[0] * in[1] * in[2]; }
  std::int64_t out_volume() const { return out[0] * out[1] * out[2]; }
  std::int64_t kernel_volume() const { return k[0] * k[1] * k[2]; }
  std::int64_t col_rows() const { return channels * kernel_volume(); }
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

/// Fills geometry from a (N, C, spatial...) shape and a kernel's spatial extents.
ConvGeometry make_geometry(const Shape& input, const Shape& kernel, int rank, int stride, int pad) {
  require(rank == 2 || rank == 3, "spatial rank must be 2 or 3, got " + std::to_string(rank));
  require(stride >= 1, "stride must be positive");
  require(pad >= 0, "padding must be non-negative");
  require(input.size() == static_cast<std::size_t>(rank + 2),
          "input " + shape_str(input) + " is not (batch, channels, " + std::to_string(rank) + " spatial axes)");
  require(kernel.size() == static_cast<std::size_t>(rank + 2),
          "kernel " + shape_str(kernel) + " does not have rank " + std::to_string(rank + 2));
  ConvGeometry g;
  g.channels = input[1];
  const int offset = 3 - rank;
  for (int a = 0; a < rank; ++a) {
    g.in[offset + a] = input[2 + a];
    g.k[offset + a] = kernel[2 + a];
    g.stride[offset + a] = stride;
    g.pad[offset + a] = pad;
  }
  for (int a = 0; a < 3; ++a) {
    const std::int64_t span = g.in[a] + 2 * g.pad[a] - g.k[a];
    g.out[a] = span < 0 ? 0 : span / g.stride[a] + 1;
    require(g.out[a] >= 1, "convolution of input " + shape_str(input) + " with kernel " + shape_str(kernel) +
                               " yields a non-positive output extent");
  }
  return g;
}

template <typename T>
void im2col(const T* img, T* col, const ConvGeometry& g) {
  const std::int64_t P = g.out_volume();
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t kz = 0; kz < g.k[0]; ++kz) {
      for (std::int64_t ky = 0; ky < g.k[1]; ++ky) {
        for (std::int64_t kx = 0; kx < g.k[2]; ++kx, ++row) {
          T* dst = col + row * P;
          for (std::int64_t oz = 0; oz < g.out[0]; ++oz) {
            const std::int64_t iz = oz * g.stride[0] - g.pad[0] + kz;
            if (iz < 0 || iz >= g.in[0]) {
              std::fill(dst, dst + g.out[1] * g.out[2], T(0));
              dst += g.out[1] * g.out[2];
              continue;
            }
            for (std::int64_t oy = 0; oy < g.out[1]; ++oy, dst += g.out[2]) {
              const std::int64_t iy = oy * g.stride[1] - g.pad[1] + ky;
              if (iy < 0 || iy >= g.in[1]) {
                std::fill(dst, dst + g.out[2], T(0));
                continue;
              }
              const T* src = img + ((c * g.in[0] + iz) * g.in[1] + iy) * g.in[2];
              for (std::int64_t ox = 0; ox < g.out[2]; ++ox) {
                const std::int64_t ix = ox * g.stride[2] - g.pad[2] + kx;
                dst[ox] = (ix >= 0 && ix < g.in[2]) ? src[ix] : T(0);
              }
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-and-adds columns back into the image grid.
template <typename T>
void col2im(const T* col, T* img, const ConvGeometry& g) {
  const std::int64_t P = g.out_volume();
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t kz = 0; kz < g.k[0]; ++kz) {
      for (std::int64_t ky = 0; ky < g.k[1]; ++ky) {
        for (std::int64_t kx = 0; kx < g.k[2]; ++kx, ++row) {
          const T* src = col + row * P;
          for (std::int64_t oz = 0; oz < g.out[0]; ++oz) {
            const std::int64_t iz = oz * g.stride[0] - g.pad[0] + kz;
            if (iz < 0 || iz >= g.in[0]) {
              src += g.out[1] * g.out[2];
              continue;
            }
            for (std::int64_t oy = 0; oy < g.out[1]; ++oy, src += g.out[2]) {
              const std::int64_t iy = oy * g.stride[1] - g.pad[1] + ky;
              if (iy < 0 || iy >= g.in[1]) continue;
              T* dst = img + ((c * g.in[0] + iz) * g.in[1] + iy) * g.in[2];
              for (std::int64_t ox = 0; ox < g.out[2]; ++ox) {
                const std::int64_t ix = ox * g.stride[2] - g.pad[2] + kx;
                if (ix >= 0 && ix < g.in[2]) dst[ix] += src[ox];
              }
            }
          }
        }
      }
    }
  }
}

/// Adds per-batch partial weight gradients in batch order, independent of
/// how the partials were scheduled.
template <typename T>
void reduce_partials(const std::vector<std::vector<T>>& partials, Tensor<T>& into) {
  for (const auto& part : partials) {
    if (part.empty()) continue;
    for (std::int64_t i = 0; i < into.size(); ++i) into[i] += part[static_cast<std::size_t>(i)];
  }
}

struct AxisSplit {
  std::int64_t outer = 1, length = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
  require(axis >= 0 && axis < static_cast<int>(shape.size()),
          "axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  AxisSplit s;
  for (int a = 0; a < axis; ++a) s.outer *= shape[a];
  s.length = shape[axis];
  for (std::size_t a = axis + 1; a < shape.size(); ++a) s.inner *= shape[a];
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Convolution

template <typename T>
Var<T> convolve(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, int spatial_rank, int stride,
                int zero_pad) {
  const Shape& xs = input.shape();
  const Shape& ws = kernel.shape();
  const ConvGeometry g = make_geometry(xs, ws, spatial_rank, stride, zero_pad);
  require(ws[1] == xs[1], "kernel " + shape_str(ws) + " does not match input channels of " + shape_str(xs));
  const std::int64_t N = xs[0], Cout = ws[0], K = g.col_rows(), P = g.out_volume();
  if (bias.defined()) {
    require(bias.shape() == Shape{Cout}, "bias " + shape_str(bias.shape()) + " does not match kernel " + shape_str(ws));
  }

  Shape out_shape{N, Cout};
  for (int a = 3 - spatial_rank; a < 3; ++a) out_shape.push_back(g.out[a]);
  Tensor<T> out(out_shape);

  const T* x = input.value().data();
  const T* w = kernel.value().data();
  const T* b = bias.defined() ? bias.value().data() : nullptr;
  const std::int64_t x_stride = g.channels * g.in_volume();
  parallel_for(N, [&](std::int64_t n) {
    std::vector<T> col(static_cast<std::size_t>(K * P));
    im2col(x + n * x_stride, col.data(), g);
    MapMat<T> y(out.data() + n * Cout * P, Cout, P);
    y.noalias() = ConstMapMat<T>(w, Cout, K) * ConstMapMat<T>(col.data(), K, P);
    if (b) {
      for (std::int64_t c = 0; c < Cout; ++c) y.row(c).array() += b[c];
    }
  });

  return Var<T>::from_op(std::move(out), {input, kernel, bias}, [g, N, Cout, K, P, x_stride](Node<T>& self) {
    const T* dy = self.grad.data();
    const T* x = self.parent_value(0).data();
    const T* w = self.parent_value(1).data();
    Tensor<T>* dx = self.parent_grad(0);
    Tensor<T>* dw = self.parent_grad(1);
    Tensor<T>* db = self.parents.size() > 2 ? self.parent_grad(2) : nullptr;

    std::vector<std::vector<T>> partials(static_cast<std::size_t>(N));
    parallel_for(N, [&](std::int64_t n) {
      ConstMapMat<T> dy_n(dy + n * Cout * P, Cout, P);
      std::vector<T> col(static_cast<std::size_t>(K * P));
      if (dx) {
        MapMat<T> dcol(col.data(), K, P);
        dcol.noalias() = ConstMapMat<T>(w, Cout, K).transpose() * dy_n;
        col2im(col.data(), dx->data() + n * x_stride, g);
      }
      if (dw) {
        im2col(x + n * x_stride, col.data(), g);
        auto& part = partials[static_cast<std::size_t>(n)];
        part.resize(static_cast<std::size_t>(Cout * K));
        MapMat<T>(part.data(), Cout, K).noalias() = dy_n * ConstMapMat<T>(col.data(), K, P).transpose();
      }
    });
    if (dw) reduce_partials(partials, *dw);
    if (db) {
      for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < Cout; ++c) {
          const T* row = dy + (n * Cout + c) * P;
          T acc = 0;
          for (std::int64_t p = 0; p < P; ++p) acc += row[p];
          (*db)[c] += acc;
        }
      }
    }
  });
}

template <typename T>
Var<T> transposed_convolve(const Var<T>& input, const Var<T>& kernel, int spatial_rank, int stride, int zero_pad,
                           int output_pad) {
  const Shape& xs = input.shape();
  const Shape& ws = kernel.shape();
  require(xs.size() == static_cast<std::size_t>(spatial_rank + 2) && ws.size() == xs.size(),
          "transposed convolution: input " + shape_str(xs) + " / kernel " + shape_str(ws) + " rank mismatch");
  require(ws[0] == xs[1], "kernel " + shape_str(ws) + " does not match input channels of " + shape_str(xs));

  Shape large{xs[0], ws[1]};
  for (int a = 0; a < spatial_rank; ++a) {
    const std::int64_t n = xs[2 + a];
    const std::int64_t k = ws[2 + a];
    const std::int64_t extent = (n - 1) * stride - 2 * zero_pad + k + output_pad;
    require(extent == 2 * n, "transposed convolution (k=" + std::to_string(k) + ", s=" + std::to_string(stride) +
                                 ", p=" + std::to_string(zero_pad) + ", op=" + std::to_string(output_pad) +
                                 ") does not double extent " + std::to_string(n));
    large.push_back(extent);
  }
  const ConvGeometry g = make_geometry(large, ws, spatial_rank, stride, zero_pad);
  for (int a = 0; a < spatial_rank; ++a) {
    require(g.out[3 - spatial_rank + a] == xs[2 + a], "transposed convolution is not the adjoint of a matching convolution");
  }

  const std::int64_t N = xs[0], Cin = xs[1], K = g.col_rows(), P = g.out_volume();
  const std::int64_t y_stride = g.channels * g.in_volume();
  Tensor<T> out(large);
  const T* x = input.value().data();
  const T* w = kernel.value().data();
  parallel_for(N, [&](std::int64_t n) {
    std::vector<T> col(static_cast<std::size_t>(K * P));
    MapMat<T>(col.data(), K, P).noalias() =
        ConstMapMat<T>(w, Cin, K).transpose() * ConstMapMat<T>(x + n * Cin * P, Cin, P);
    col2im(col.data(), out.data() + n * y_stride, g);
  });

  return Var<T>::from_op(std::move(out), {input, kernel}, [g, N, Cin, K, P, y_stride](Node<T>& self) {
    const T* dy = self.grad.data();
    const T* x = self.parent_value(0).data();
    const T* w = self.parent_value(1).data();
    Tensor<T>* dx = self.parent_grad(0);
    Tensor<T>* dw = self.parent_grad(1);
    std::vector<std::vector<T>> partials(static_cast<std::size_t>(N));
    parallel_for(N, [&](std::int64_t n) {
      std::vector<T> col(static_cast<std::size_t>(K * P));
      im2col(dy + n * y_stride, col.data(), g);
      ConstMapMat<T> cm(col.data(), K, P);
      if (dx) {
        MapMat<T>(dx->data() + n * Cin * P, Cin, P).noalias() += ConstMapMat<T>(w, Cin, K) * cm;
      }
      if (dw) {
        auto& part = partials[static_cast<std::size_t>(n)];
        part.resize(static_cast<std::size_t>(Cin * K));
        MapMat<T>(part.data(), Cin, K).noalias() = ConstMapMat<T>(x + n * Cin * P, Cin, P) * cm.transpose();
      }
    });
    if (dw) reduce_partials(partials, *dw);
  });
}

// ---------------------------------------------------------------------------
// Normalization and pointwise

template <typename T>
Var<T> batch_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, const BatchNormOptions& options) {
  const Shape& xs = input.shape();
  require(xs.size() >= 2, "batch_norm expects (batch, channels, ...), got " + shape_str(xs));
  require(xs[0] >= 1, "batch_norm needs a non-empty batch");
  const std::int64_t N = xs[0], C = xs[1];
  const std::int64_t S = input.value().size() / (N * C);
  require(gamma.shape() == Shape{C} && beta.shape() == Shape{C},
          "batch_norm affine parameters must have shape (" + std::to_string(C) + ")");
  require(running_mean.shape() == Shape{C} && running_var.shape() == Shape{C},
          "batch_norm running statistics must have shape (" + std::to_string(C) + ")");
  const double M = static_cast<double>(N * S);
  const T* x = input.value().data();
  const T* ga = gamma.value().data();
  const T* be = beta.value().data();

  Tensor<T> out(xs);
  Tensor<T> xhat(xs);
  std::vector<T> inv_std(static_cast<std::size_t>(C));
  const bool train = options.mode == NormMode::train;

  for (std::int64_t c = 0; c < C; ++c) {
    double mu, var;
    if (train) {
      double sum = 0;
      for (std::int64_t n = 0; n < N; ++n) {
        const T* p = x + (n * C + c) * S;
        for (std::int64_t s = 0; s < S; ++s) sum += p[s];
      }
      mu = sum / M;
      double sq = 0;
      for (std::int64_t n = 0; n < N; ++n) {
        const T* p = x + (n * C + c) * S;
        for (std::int64_t s = 0; s < S; ++s) {
          const double d = p[s] - mu;
          sq += d * d;
        }
      }
      var = sq / M;
      running_mean[c] = static_cast<T>((1.0 - options.momentum) * running_mean[c] + options.momentum * mu);
      running_var[c] = static_cast<T>((1.0 - options.momentum) * running_var[c] + options.momentum * var);
    } else {
      mu = running_mean[c];
      var = running_var[c];
    }
    const T is = static_cast<T>(1.0 / std::sqrt(var + options.eps));
    const T m = static_cast<T>(mu);
    inv_std[static_cast<std::size_t>(c)] = is;
    for (std::int64_t n = 0; n < N; ++n) {
      const std::int64_t base = (n * C + c) * S;
      for (std::int64_t s = 0; s < S; ++s) {
        const T h = (x[base + s] - m) * is;
        xhat[base + s] = h;
        out[base + s] = ga[c] * h + be[c];
      }
    }
  }

  return Var<T>::from_op(std::move(out), {input, gamma, beta},
                         [xhat = std::move(xhat), inv_std = std::move(inv_std), N, C, S, M, train](Node<T>& self) {
                           const T* dy = self.grad.data();
                           const T* ga = self.parent_value(1).data();
                           Tensor<T>* dx = self.parent_grad(0);
                           Tensor<T>* dg = self.parent_grad(1);
                           Tensor<T>* db = self.parent_grad(2);
                           for (std::int64_t c = 0; c < C; ++c) {
                             double sum_dy = 0, sum_dy_xhat = 0;
                             for (std::int64_t n = 0; n < N; ++n) {
                               const std::int64_t base = (n * C + c) * S;
                               for (std::int64_t s = 0; s < S; ++s) {
                                 sum_dy += dy[base + s];
                                 sum_dy_xhat += dy[base + s] * xhat[base + s];
                               }
                             }
                             if (dg) (*dg)[c] += static_cast<T>(sum_dy_xhat);
                             if (db) (*db)[c] += static_cast<T>(sum_dy);
                             if (!dx) continue;
                             const T is = inv_std[static_cast<std::size_t>(c)];
                             if (train) {
                               const T k = ga[c] * is / static_cast<T>(M);
                               const T mean_dy = static_cast<T>(sum_dy);
                               const T mean_dyx = static_cast<T>(sum_dy_xhat);
                               for (std::int64_t n = 0; n < N; ++n) {
                                 const std::int64_t base = (n * C + c) * S;
                                 for (std::int64_t s = 0; s < S; ++s) {
                                   (*dx)[base + s] +=
                                       k * (static_cast<T>(M) * dy[base + s] - mean_dy - xhat[base + s] * mean_dyx);
                                 }
                               }
                             } else {
                               const T k = ga[c] * is;
                               for (std::int64_t n = 0; n < N; ++n) {
                                 const std::int64_t base = (n * C + c) * S;
                                 for (std::int64_t s = 0; s < S; ++s) (*dx)[base + s] += k * dy[base + s];
                               }
                             }
                           }
                         });
}

template <typename T>
Var<T> relu(const Var<T>& input) {
  Tensor<T> out(input.shape());
  const T* x = input.value().data();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return Var<T>::from_op(std::move(out), {input}, [](Node<T>& self) {
    Tensor<T>* dx = self.parent_grad(0);
    if (!dx) return;
    const T* y = self.value.data();
    const T* dy = self.grad.data();
    for (std::int64_t i = 0; i < dx->size(); ++i) {
      if (y[i] > T(0)) (*dx)[i] += dy[i];
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "add: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return Var<T>::from_op(std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (Tensor<T>* d = self.parent_grad(p)) {
        for (std::int64_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& input, T factor) {
  Tensor<T> out(input.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = factor * input.value()[i];
  return Var<T>::from_op(std::move(out), {input}, [factor](Node<T>& self) {
    if (Tensor<T>* d = self.parent_grad(0)) {
      for (std::int64_t i = 0; i < d->size(); ++i) (*d)[i] += factor * self.grad[i];
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& input, Shape shape) {
  Tensor<T> out = input.value().reshaped(std::move(shape));
  return Var<T>::from_op(std::move(out), {input}, [](Node<T>& self) {
    if (Tensor<T>* d = self.parent_grad(0)) {
      for (std::int64_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> softmax_along(const Var<T>& input, int axis) {
  const AxisSplit s = split_at(input.shape(), axis);
  Tensor<T> out(input.shape());
  const T* x = input.value().data();
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t i = 0; i < s.inner; ++i) {
      const std::int64_t base = o * s.length * s.inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::int64_t d = 0; d < s.length; ++d) mx = std::max(mx, x[base + d * s.inner]);
      T sum = 0;
      for (std::int64_t d = 0; d < s.length; ++d) {
        const T e = std::exp(x[base + d * s.inner] - mx);
        out[base + d * s.inner] = e;
        sum += e;
      }
      const T inv = T(1) / sum;
      for (std::int64_t d = 0; d < s.length; ++d) out[base + d * s.inner] *= inv;
    }
  }
  return Var<T>::from_op(std::move(out), {input}, [s](Node<T>& self) {
    Tensor<T>* dx = self.parent_grad(0);
    if (!dx) return;
    const T* y = self.value.data();
    const T* dy = self.grad.data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t i = 0; i < s.inner; ++i) {
        const std::int64_t base = o * s.length * s.inner + i;
        T dot = 0;
        for (std::int64_t d = 0; d < s.length; ++d) dot += y[base + d * s.inner] * dy[base + d * s.inner];
        for (std::int64_t d = 0; d < s.length; ++d) {
          const std::int64_t k = base + d * s.inner;
          (*dx)[k] += y[k] * (dy[k] - dot);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Structural

template <typename T>
Var<T> concat(const std::vector<Var<T>>& inputs, int axis) {
  require(!inputs.empty(), "concat of an empty list");
  const Shape& first = inputs.front().shape();
  Shape out_shape = first;
  require(axis >= 0 && axis < static_cast<int>(first.size()), "concat axis out of range for " + shape_str(first));
  out_shape[axis] = 0;
  std::vector<std::int64_t> lengths;
  for (const auto& v : inputs) {
    const Shape& sh = v.shape();
    bool ok = sh.size() == first.size();
    for (std::size_t a = 0; ok && a < sh.size(); ++a) ok = static_cast<int>(a) == axis || sh[a] == first[a];
    require(ok, "concat: shape " + shape_str(sh) + " incompatible with " + shape_str(first) + " on axis " +
                    std::to_string(axis));
    lengths.push_back(sh[axis]);
    out_shape[axis] += sh[axis];
  }
  const AxisSplit s = split_at(out_shape, axis);
  Tensor<T> out(out_shape);
  std::int64_t at = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const T* src = inputs[k].value().data();
    const std::int64_t chunk = lengths[k] * s.inner;
    for (std::int64_t o = 0; o < s.outer; ++o) {
      std::copy(src + o * chunk, src + (o + 1) * chunk, out.data() + o * s.length * s.inner + at * s.inner);
    }
    at += lengths[k];
  }
  return Var<T>::from_op(std::move(out), inputs, [s, lengths](Node<T>& self) {
    std::int64_t at = 0;
    for (std::size_t k = 0; k < lengths.size(); ++k) {
      const std::int64_t chunk = lengths[k] * s.inner;
      if (Tensor<T>* d = self.parent_grad(k)) {
        for (std::int64_t o = 0; o < s.outer; ++o) {
          const T* src = self.grad.data() + o * s.length * s.inner + at * s.inner;
          T* dst = d->data() + o * chunk;
          for (std::int64_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      at += lengths[k];
    }
  });
}

template <typename T>
Var<T> slice(const Var<T>& input, int axis, std::int64_t begin, std::int64_t length) {
  const AxisSplit s = split_at(input.shape(), axis);
  require(begin >= 0 && length >= 1 && begin + length <= s.length,
          "slice [" + std::to_string(begin) + ", " + std::to_string(begin + length) + ") out of range for " +
              shape_str(input.shape()));
  Shape out_shape = input.shape();
  out_shape[axis] = length;
  Tensor<T> out(out_shape);
  const T* src = input.value().data();
  const std::int64_t chunk = length * s.inner;
  for (std::int64_t o = 0; o < s.outer; ++o) {
    const T* from = src + o * s.length * s.inner + begin * s.inner;
    std::copy(from, from + chunk, out.data() + o * chunk);
  }
  return Var<T>::from_op(std::move(out), {input}, [s, begin, chunk](Node<T>& self) {
    Tensor<T>* d = self.parent_grad(0);
    if (!d) return;
    for (std::int64_t o = 0; o < s.outer; ++o) {
      T* dst = d->data() + o * s.length * s.inner + begin * s.inner;
      const T* g = self.grad.data() + o * chunk;
      for (std::int64_t i = 0; i < chunk; ++i) dst[i] += g[i];
    }
  });
}

template <typename T>
std::vector<Var<T>> split(const Var<T>& input, int axis, const std::vector<std::int64_t>& sizes) {
  std::int64_t total = 0;
  for (auto n : sizes) total += n;
  require(axis >= 0 && axis < static_cast<int>(input.shape().size()) && total == input.shape()[axis],
          "split sizes do not cover axis of " + shape_str(input.shape()));
  std::vector<Var<T>> parts;
  std::int64_t at = 0;
  for (auto n : sizes) {
    parts.push_back(slice(input, axis, at, n));
    at += n;
  }
  return parts;
}

namespace {

struct ResizeTap {
  std::int64_t lo, hi;
  double frac;
};

std::vector<ResizeTap> resize_taps(std::int64_t in, std::int64_t out) {
  std::vector<ResizeTap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::int64_t>(std::floor(src));
    const std::int64_t hi = std::min(lo + 1, in - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> resize_bilinear(const Var<T>& input, std::int64_t out_h, std::int64_t out_w) {
  const Shape& xs = input.shape();
  require(xs.size() == 4, "resize_bilinear expects (N, C, H, W), got " + shape_str(xs));
  require(out_h >= 1 && out_w >= 1, "resize_bilinear target must be positive");
  const std::int64_t planes = xs[0] * xs[1], H = xs[2], W = xs[3];
  const auto ty = resize_taps(H, out_h);
  const auto tx = resize_taps(W, out_w);
  Tensor<T> out({xs[0], xs[1], out_h, out_w});
  const T* x = input.value().data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = x + p * H * W;
    T* dst = out.data() + p * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      const T fy = static_cast<T>(a.frac);
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        const T fx = static_cast<T>(b.frac);
        const T top = (T(1) - fx) * src[a.lo * W + b.lo] + fx * src[a.lo * W + b.hi];
        const T bot = (T(1) - fx) * src[a.hi * W + b.lo] + fx * src[a.hi * W + b.hi];
        dst[oy * out_w + ox] = (T(1) - fy) * top + fy * bot;
      }
    }
  }
  return Var<T>::from_op(std::move(out), {input}, [ty, tx, planes, H, W, out_h, out_w](Node<T>& self) {
    Tensor<T>* d = self.parent_grad(0);
    if (!d) return;
    for (std::int64_t p = 0; p < planes; ++p) {
      T* dst = d->data() + p * H * W;
      const T* g = self.grad.data() + p * out_h * out_w;
      for (std::int64_t oy = 0; oy < out_h; ++oy) {
        const auto& a = ty[static_cast<std::size_t>(oy)];
        const T fy = static_cast<T>(a.frac);
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
          const auto& b = tx[static_cast<std::size_t>(ox)];
          const T fx = static_cast<T>(b.frac);
          const T v = g[oy * out_w + ox];
          dst[a.lo * W + b.lo] += (T(1) - fy) * (T(1) - fx) * v;
          dst[a.lo * W + b.hi] += (T(1) - fy) * fx * v;
          dst[a.hi * W + b.lo] += fy * (T(1) - fx) * v;
          dst[a.hi * W + b.hi] += fy * fx * v;
        }
      }
    }
  });
}

template <typename T>
Var<T> shift_concat_volume(const Var<T>& left, const Var<T>& right, std::int64_t levels) {
  const Shape& ls = left.shape();
  require(ls.size() == 4, "cost volume features must be (N, F, H, W), got " + shape_str(ls));
  require(ls == right.shape(), "left features " + shape_str(ls) + " and right features " +
                                   shape_str(right.shape()) + " differ");
  require(levels >= 1, "cost volume needs at least one disparity level");
  const std::int64_t N = ls[0], F = ls[1], H = ls[2], W = ls[3];
  Tensor<T> out({N, 2 * F, levels, H, W});
  const T* l = left.value().data();
  const T* r = right.value().data();
  const std::int64_t plane = H * W;
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t c = 0; c < F; ++c) {
      const T* lp = l + (n * F + c) * plane;
      const T* rp = r + (n * F + c) * plane;
      for (std::int64_t d = 0; d < levels; ++d) {
        T* lo = out.data() + (((n * 2 * F + c) * levels + d) * plane);
        T* ro = out.data() + (((n * 2 * F + F + c) * levels + d) * plane);
        std::copy(lp, lp + plane, lo);
        for (std::int64_t y = 0; y < H; ++y) {
          for (std::int64_t x = d; x < W; ++x) ro[y * W + x] = rp[y * W + x - d];
        }
      }
    }
  }
  return Var<T>::from_op(std::move(out), {left, right}, [N, F, H, W, levels, plane](Node<T>& self) {
    Tensor<T>* dl = self.parent_grad(0);
    Tensor<T>* dr = self.parent_grad(1);
    const T* g = self.grad.data();
    for (std::int64_t n = 0; n < N; ++n) {
      for (std::int64_t c = 0; c < F; ++c) {
        for (std::int64_t d = 0; d < levels; ++d) {
          const T* gl = g + (((n * 2 * F + c) * levels + d) * plane);
          const T* gr = g + (((n * 2 * F + F + c) * levels + d) * plane);
          if (dl) {
            T* dst = dl->data() + (n * F + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) dst[i] += gl[i];
          }
          if (dr) {
            T* dst = dr->data() + (n * F + c) * plane;
            for (std::int64_t y = 0; y < H; ++y) {
              for (std::int64_t x = d; x < W; ++x) dst[y * W + x - d] += gr[y * W + x];
            }
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> disparity_expectation(const Var<T>& prob) {
  const Shape& ps = prob.shape();
  require(ps.size() == 4, "disparity expectation expects (N, D, H, W), got " + shape_str(ps));
  const std::int64_t N = ps[0], D = ps[1], plane = ps[2] * ps[3];
  Tensor<T> out({N, ps[2], ps[3]});
  const T* p = prob.value().data();
  for (std::int64_t n = 0; n < N; ++n) {
    T* dst = out.data() + n * plane;
    for (std::int64_t d = 0; d < D; ++d) {
      const T* src = p + (n * D + d) * plane;
      const T w = static_cast<T>(d);
      for (std::int64_t i = 0; i < plane; ++i) dst[i] += w * src[i];
    }
  }
  return Var<T>::from_op(std::move(out), {prob}, [N, D, plane](Node<T>& self) {
    Tensor<T>* dp = self.parent_grad(0);
    if (!dp) return;
    for (std::int64_t n = 0; n < N; ++n) {
      const T* g = self.grad.data() + n * plane;
      for (std::int64_t d = 0; d < D; ++d) {
        T* dst = dp->data() + (n * D + d) * plane;
        const T w = static_cast<T>(d);
        for (std::int64_t i = 0; i < plane; ++i) dst[i] += w * g[i];
      }
    }
  });
}

template <typename T>
Var<T> weighted_sum(const Var<T>& input, const Tensor<T>& weights) {
  require(weights.shape() == input.shape(), "weighted_sum weights " + shape_str(weights.shape()) +
                                                " do not match " + shape_str(input.shape()));
  T acc = 0;
  for (std::int64_t i = 0; i < weights.size(); ++i) acc += weights[i] * input.value()[i];
  return Var<T>::from_op(Tensor<T>(Shape{}, acc), {input}, [weights](Node<T>& self) {
    if (Tensor<T>* d = self.parent_grad(0)) {
      const T g = self.grad[0];
      for (std::int64_t i = 0; i < d->size(); ++i) (*d)[i] += g * weights[i];
    }
  });
}

template <typename T>
Var<T> mean(const Var<T>& input) {
  const T inv = T(1) / static_cast<T>(input.value().size());
  T acc = 0;
  for (T v : input.value().values()) acc += v;
  return Var<T>::from_op(Tensor<T>(Shape{}, acc * inv), {input}, [inv](Node<T>& self) {
    if (Tensor<T>* d = self.parent_grad(0)) {
      const T g = self.grad[0] * inv;
      for (std::int64_t i = 0; i < d->size(); ++i) (*d)[i] += g;
    }
  });
}

#define MSDC_INSTANTIATE_OPS(T)                                                                                    \
  template Var<T> convolve(const Var<T>&, const Var<T>&, const Var<T>&, int, int, int);                          \
  template Var<T> transposed_convolve(const Var<T>&, const Var<T>&, int, int, int, int);                         \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&,                \
                             const BatchNormOptions&);                                                             \
  template Var<T> relu(const Var<T>&);                                                                             \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                               \
  template Var<T> scale(const Var<T>&, T);                                                                         \
  template Var<T> reshape(const Var<T>&, Shape);                                                                   \
  template Var<T> softmax_along(const Var<T>&, int);                                                               \
  template Var<T> concat(const std::vector<Var<T>>&, int);                                                         \
  template Var<T> slice(const Var<T>&, int, std::int64_t, std::int64_t);                                           \
  template std::vector<Var<T>> split(const Var<T>&, int, const std::vector<std::int64_t>&);                        \
  template Var<T> resize_bilinear(const Var<T>&, std::int64_t, std::int64_t);                                      \
  template Var<T> shift_concat_volume(const Var<T>&, const Var<T>&, std::int64_t);                                 \
  template Var<T> disparity_expectation(const Var<T>&);                                                            \
  template Var<T> weighted_sum(const Var<T>&, const Tensor<T>&);                                                   \
  template Var<T> mean(const Var<T>&);

MSDC_INSTANTIATE_OPS(float)
MSDC_INSTANTIATE_OPS(double)

}  // namespace msdc
