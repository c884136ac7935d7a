#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <type_traits>

#include "voi/nn/tape.hpp"

namespace voi::nn {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_shape(b.value(), a.shape(), "add");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const auto& gy = t.grad(self);
    for (auto in : {a, b}) {
      if (!t.requires_grad(in)) continue;
      auto& gx = t.grad(in);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_shape(b.value(), a.shape(), "sub");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const auto& gy = t.grad(self);
    if (t.requires_grad(a)) {
      auto& g = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
    if (t.requires_grad(b)) {
      auto& g = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gy[i];
    }
  });
}

/// y = s * x + c
template <typename T>
Var<T> affine(Var<T> x, T s, T c = T(0)) {
  Tensor<T> y = x.value();
  for (auto& v : y.data) v = s * v + c;
  return x.tape->record(std::move(y), {x}, [x, s](Tape<T>& t, std::size_t self) {
    const auto& gy = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += s * gy[i];
  });
}

template <typename T>
Var<T> scale(Var<T> x, T s) {
  return affine(x, s, T(0));
}

namespace detail {

template <typename T, typename F, typename D>
Var<T> unary(Var<T> x, F f, D dfdx_from_xy) {
  const auto& xv = x.value();
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return x.tape->record(std::move(y), {x}, [x, dfdx_from_xy](Tape<T>& t, std::size_t self) {
    const auto& gy = t.grad(self);
    const auto& xv = t.value(x);
    const auto& yv = t.value(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * dfdx_from_xy(xv[i], yv[i]);
  });
}

}  // namespace detail

template <typename T>
Var<T> relu(Var<T> x) {
  return detail::unary(x, [](T v) { return v > T(0) ? v : T(0); },
                       [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(Var<T> x, T slope = T(0.2)) {
  return detail::unary(x, [slope](T v) { return v > T(0) ? v : slope * v; },
                       [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return detail::unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return detail::unary(x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
                       [](T, T y) { return y * (T(1) - y); });
}

// ---------------------------------------------------------------------------
// Reductions and losses

/// Mean of all elements -> shape [1].
template <typename T>
Var<T> mean(Var<T> x) {
  const auto& xv = x.value();
  double s = 0;
  for (auto v : xv.data) s += v;
  Tensor<T> y({1}, static_cast<T>(s / static_cast<double>(xv.size())));
  return x.tape->record(std::move(y), {x}, [x](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0] / static_cast<T>(t.value(x).size());
    for (auto& v : t.grad(x).data) v += g;
  });
}

/// sum(x * w) for a fixed weight tensor -> shape [1].
template <typename T>
Var<T> weighted_sum(Var<T> x, const Tensor<T>& w) {
  require_shape(w, x.shape(), "weighted_sum");
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += double(x.value()[i]) * w[i];
  return x.tape->record(Tensor<T>({1}, static_cast<T>(s)), {x}, [x, w](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * w[i];
  });
}

/// mean((x - target)^2), the least-squares adversarial term.
template <typename T>
Var<T> mse_to(Var<T> x, T target) {
  const auto& xv = x.value();
  double s = 0;
  for (auto v : xv.data) s += double(v - target) * double(v - target);
  Tensor<T> y({1}, static_cast<T>(s / static_cast<double>(xv.size())));
  return x.tape->record(std::move(y), {x}, [x, target](Tape<T>& t, std::size_t self) {
    const auto& xv = t.value(x);
    const T g = T(2) * t.grad(self)[0] / static_cast<T>(xv.size());
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * (xv[i] - target);
  });
}

/// mean(|a - b|)
template <typename T>
Var<T> l1_loss(Var<T> a, Var<T> b) {
  require_shape(b.value(), a.shape(), "l1_loss");
  const auto& av = a.value();
  const auto& bv = b.value();
  double s = 0;
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(double(av[i]) - double(bv[i]));
  Tensor<T> y({1}, static_cast<T>(s / static_cast<double>(av.size())));
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    const T g = t.grad(self)[0] / static_cast<T>(av.size());
    auto sign = [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); };
    if (t.requires_grad(a)) {
      auto& ga = t.grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * sign(av[i] - bv[i]);
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g * sign(av[i] - bv[i]);
    }
  });
}

/// Row-wise softmax of [N, K] logits, max-subtracted.
template <typename T>
Tensor<T> softmax_values(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw Error("softmax expects [N, K] logits, got " + shape_str(logits.shape));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> p(logits.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.ptr() + i * k;
    T* out = p.ptr() + i * k;
    const T mx = *std::max_element(row, row + k);
    double z = 0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(double(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) out[j] = static_cast<T>(std::exp(double(row[j] - mx)) / z);
  }
  return p;
}

template <typename T>
Var<T> softmax(Var<T> x) {
  return x.tape->record(softmax_values(x.value()), {x}, [x](Tape<T>& t, std::size_t self) {
    const auto& p = t.value(self);
    const auto& gy = t.grad(self);
    auto& gx = t.grad(x);
    const std::size_t n = p.dim(0), k = p.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0;
      for (std::size_t j = 0; j < k; ++j) d += double(gy[i * k + j]) * p[i * k + j];
      for (std::size_t j = 0; j < k; ++j) gx[i * k + j] += p[i * k + j] * (gy[i * k + j] - static_cast<T>(d));
    }
  });
}

/// Mean sparse categorical cross-entropy over the batch.
template <typename T>
Var<T> softmax_xent(Var<T> logits, std::span<const int> labels) {
  const auto& lv = logits.value();
  if (lv.rank() != 2 || lv.dim(0) != labels.size())
    throw Error("softmax_xent: logits " + shape_str(lv.shape) + " do not match " +
                std::to_string(labels.size()) + " labels");
  const std::size_t n = lv.dim(0), k = lv.dim(1);
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= k)
      throw Error("softmax_xent: label " + std::to_string(l) + " out of range [0," + std::to_string(k) + ")");
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = lv.ptr() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(double(row[j]) - mx);
    loss += -(double(row[labels[i]]) - mx - std::log(z));
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return logits.tape->record(Tensor<T>({1}, static_cast<T>(loss / double(n))), {logits},
                             [logits, lab](Tape<T>& t, std::size_t self) {
                               const auto p = softmax_values(t.value(logits));
                               const std::size_t n = p.dim(0), k = p.dim(1);
                               const T g = t.grad(self)[0] / static_cast<T>(n);
                               auto& gx = t.grad(logits);
                               for (std::size_t i = 0; i < n; ++i)
                                 for (std::size_t j = 0; j < k; ++j)
                                   gx[i * k + j] += g * (p[i * k + j] - (int(j) == lab[i] ? T(1) : T(0)));
                             });
}

// ---------------------------------------------------------------------------
// Dense

/// x [N, F] · w[O, F]^T + b[O]
template <typename T>
Var<T> dense(Var<T> x, Var<T> w, std::optional<std::type_identity_t<Var<T>>> b = std::nullopt) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1))
    throw Error("dense: input " + shape_str(xv.shape) + " incompatible with weight " + shape_str(wv.shape));
  const std::size_t n = xv.dim(0), f = xv.dim(1), o = wv.dim(0);
  if (b) require_shape(b->value(), {o}, "dense bias");
  Tensor<T> y({n, o});
  MapR<T>(y.ptr(), n, o).noalias() = CMapR<T>(xv.ptr(), n, f) * CMapR<T>(wv.ptr(), o, f).transpose();
  if (b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < o; ++j) y[i * o + j] += b->value()[j];
  auto backward = [x, w, b, n, f, o](Tape<T>& t, std::size_t self) {
    CMapR<T> gy(t.grad(self).ptr(), n, o);
    if (t.requires_grad(x))
      MapR<T>(t.grad(x).ptr(), n, f).noalias() += gy * CMapR<T>(t.value(w).ptr(), o, f);
    if (t.requires_grad(w))
      MapR<T>(t.grad(w).ptr(), o, f).noalias() += gy.transpose() * CMapR<T>(t.value(x).ptr(), n, f);
    if (b && t.requires_grad(*b)) {
      auto& gb = t.grad(*b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < o; ++j) gb[j] += gy(i, j);
    }
  };
  if (b) return x.tape->record(std::move(y), {x, w, *b}, backward);
  return x.tape->record(std::move(y), {x, w}, backward);
}

// ---------------------------------------------------------------------------
// Convolution

struct Conv2dOptions {
  int stride = 1;
  int pad = 0;

  /// "same" padding for odd kernels: output = ceil(input / stride).
  static Conv2dOptions same(int kernel, int stride = 1) { return {stride, kernel / 2}; }
  static Conv2dOptions valid(int stride = 1) { return {stride, 0}; }
};

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, int stride, int pad) {
  const long v = (static_cast<long>(in) + 2 * pad - static_cast<long>(k));
  if (v < 0) throw Error("convolution kernel larger than padded input");
  return static_cast<std::size_t>(v / stride + 1);
}

namespace detail {

struct ConvGeom {
  std::size_t c, h, w, kh, kw, oh, ow;
  int stride, pad;
  std::size_t rows() const { return c * kh * kw; }
  std::size_t cols() const { return oh * ow; }
};

/// col[(c*kh + i)*kw + j][col_offset + oy*ow + ox] = src[c][oy*s - p + i][ox*s - p + j]
template <typename T>
void im2col(const T* src, const ConvGeom& g, T* col, std::size_t ld, std::size_t col_offset) {
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((c * g.kh + i) * g.kw + j) * ld + col_offset;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(i);
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* srow = src + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(j);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T(0) : srow[ix];
          }
        }
      }
}

/// Adjoint of im2col: scatters-adds columns back into dst.
template <typename T>
void col2im(const T* col, const ConvGeom& g, T* dst, std::size_t ld, std::size_t col_offset) {
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((c * g.kh + i) * g.kw + j) * ld + col_offset;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(i);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* drow = dst + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(j);
            if (ix >= 0 && ix < static_cast<long>(g.w)) drow[ix] += src[ox];
          }
        }
      }
}

}  // namespace detail

/// Cross-correlation of x [N, C, H, W] with w [O, C, kh, kw]; optional bias b [O].
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::optional<std::type_identity_t<Var<T>>> b, Conv2dOptions opt) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (xv.rank() != 4 || wv.rank() != 4 || xv.dim(1) != wv.dim(1))
    throw Error("conv2d: input " + shape_str(xv.shape) + " incompatible with kernel " + shape_str(wv.shape));
  if (opt.stride < 1 || opt.pad < 0) throw Error("conv2d: invalid stride/padding");
  const std::size_t n = xv.dim(0), o = wv.dim(0);
  detail::ConvGeom g{xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(2), wv.dim(3), 0, 0, opt.stride, opt.pad};
  g.oh = conv_out_dim(g.h, g.kh, opt.stride, opt.pad);
  g.ow = conv_out_dim(g.w, g.kw, opt.stride, opt.pad);
  if (b) require_shape(b->value(), {o}, "conv2d bias");
  const std::size_t K = g.rows(), P = g.cols(), NP = n * P, in_sz = g.c * g.h * g.w;

  std::vector<T> col(K * NP);
  for (std::size_t i = 0; i < n; ++i) detail::im2col(xv.ptr() + i * in_sz, g, col.data(), NP, i * P);
  MatR<T> out = CMapR<T>(wv.ptr(), o, K) * CMapR<T>(col.data(), K, NP);
  Tensor<T> y({n, o, g.oh, g.ow});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t oc = 0; oc < o; ++oc) {
      const T bias = b ? b->value()[oc] : T(0);
      const T* src = out.data() + oc * NP + i * P;
      T* dst = y.ptr() + (i * o + oc) * P;
      for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + bias;
    }

  auto backward = [x, w, b, g, n, o](Tape<T>& t, std::size_t self) {
    const std::size_t K = g.rows(), P = g.cols(), NP = n * P, in_sz = g.c * g.h * g.w;
    const auto& gy = t.grad(self);
    MatR<T> gmat(o, NP);  // [O, N*P]
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t oc = 0; oc < o; ++oc)
        std::copy_n(gy.ptr() + (i * o + oc) * P, P, gmat.data() + oc * NP + i * P);
    if (b && t.requires_grad(*b)) {
      auto& gb = t.grad(*b);
      for (std::size_t oc = 0; oc < o; ++oc) gb[oc] += gmat.row(static_cast<Eigen::Index>(oc)).sum();
    }
    const bool need_w = t.requires_grad(w), need_x = t.requires_grad(x);
    if (need_w) {
      std::vector<T> col(K * NP);
      const auto& xv = t.value(x);
      for (std::size_t i = 0; i < n; ++i) detail::im2col(xv.ptr() + i * in_sz, g, col.data(), NP, i * P);
      MapR<T>(t.grad(w).ptr(), o, K).noalias() += gmat * CMapR<T>(col.data(), K, NP).transpose();
    }
    if (need_x) {
      MatR<T> dcol = CMapR<T>(t.value(w).ptr(), o, K).transpose() * gmat;
      auto& gx = t.grad(x);
      for (std::size_t i = 0; i < n; ++i) detail::col2im(dcol.data(), g, gx.ptr() + i * in_sz, NP, i * P);
    }
  };
  if (b) return x.tape->record(std::move(y), {x, w, *b}, backward);
  return x.tape->record(std::move(y), {x, w}, backward);
}

/// Transposed convolution (adjoint of conv2d w.r.t. its input) of x [N, Cin, H, W] with
/// w [Cin, Cout, kh, kw]. Output side = (H - 1)·stride − 2·pad + k + output_padding.
template <typename T>
Var<T> conv_transpose2d(Var<T> x, Var<T> w, std::optional<std::type_identity_t<Var<T>>> b, Conv2dOptions opt,
                        int output_padding = 0) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (xv.rank() != 4 || wv.rank() != 4 || xv.dim(1) != wv.dim(0))
    throw Error("conv_transpose2d: input " + shape_str(xv.shape) + " incompatible with kernel " +
                shape_str(wv.shape));
  if (opt.stride < 1 || opt.pad < 0 || output_padding < 0 || output_padding >= opt.stride)
    throw Error("conv_transpose2d: invalid stride/padding");
  const std::size_t n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3), cout = wv.dim(1);
  const long oh = (long(h) - 1) * opt.stride - 2 * opt.pad + long(wv.dim(2)) + output_padding;
  const long ow = (long(wd) - 1) * opt.stride - 2 * opt.pad + long(wv.dim(3)) + output_padding;
  if (oh <= 0 || ow <= 0) throw Error("conv_transpose2d: empty output");
  // geometry of the forward conv that maps the output back onto the input grid
  detail::ConvGeom g{cout, std::size_t(oh), std::size_t(ow), wv.dim(2), wv.dim(3), h, wd, opt.stride, opt.pad};
  if (conv_out_dim(g.h, g.kh, opt.stride, opt.pad) != h || conv_out_dim(g.w, g.kw, opt.stride, opt.pad) != wd)
    throw Error("conv_transpose2d: inconsistent geometry");
  if (b) require_shape(b->value(), {cout}, "conv_transpose2d bias");
  const std::size_t K = g.rows(), P = g.cols(), out_sz = cout * g.h * g.w;

  Tensor<T> y({n, cout, g.h, g.w});
  MatR<T> col(K, P);
  for (std::size_t i = 0; i < n; ++i) {
    col.noalias() = CMapR<T>(wv.ptr(), cin, K).transpose() * CMapR<T>(xv.ptr() + i * cin * P, cin, P);
    detail::col2im(col.data(), g, y.ptr() + i * out_sz, P, 0);
  }
  if (b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < cout; ++c) {
        T* dst = y.ptr() + i * out_sz + c * g.h * g.w;
        for (std::size_t p = 0; p < g.h * g.w; ++p) dst[p] += b->value()[c];
      }

  auto backward = [x, w, b, g, n, cin](Tape<T>& t, std::size_t self) {
    const std::size_t K = g.rows(), P = g.cols(), cout = g.c, out_sz = cout * g.h * g.w;
    const auto& gy = t.grad(self);
    if (b && t.requires_grad(*b)) {
      auto& gb = t.grad(*b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cout; ++c) {
          const T* src = gy.ptr() + i * out_sz + c * g.h * g.w;
          double s = 0;
          for (std::size_t p = 0; p < g.h * g.w; ++p) s += src[p];
          gb[c] += static_cast<T>(s);
        }
    }
    const bool need_w = t.requires_grad(w), need_x = t.requires_grad(x);
    if (!need_w && !need_x) return;
    MatR<T> col(K, P);
    for (std::size_t i = 0; i < n; ++i) {
      detail::im2col(gy.ptr() + i * out_sz, g, col.data(), P, 0);
      if (need_x)
        MapR<T>(t.grad(x).ptr() + i * cin * P, cin, P).noalias() += CMapR<T>(t.value(w).ptr(), cin, K) * col;
      if (need_w)
        MapR<T>(t.grad(w).ptr(), cin, K).noalias() +=
            CMapR<T>(t.value(x).ptr() + i * cin * P, cin, P) * col.transpose();
    }
  };
  if (b) return x.tape->record(std::move(y), {x, w, *b}, backward);
  return x.tape->record(std::move(y), {x, w}, backward);
}

// ---------------------------------------------------------------------------
// Normalization

struct BatchNormOptions {
  double momentum = 0.99;
  double eps = 1e-5;
  bool training = true;
};

namespace detail {

/// Normalizes groups of `len` contiguous values; group g uses affine channel g % channels.
template <typename T>
Var<T> group_norm_core(Var<T> x, Var<T> gamma, Var<T> beta, std::size_t groups, std::size_t len,
                       std::size_t channels, std::size_t n, double eps,
                       std::vector<double>* batch_mean, std::vector<double>* batch_var,
                       bool per_channel_over_batch) {
  // Two layouts: per_channel_over_batch (batch norm) groups channel c across all samples;
  // otherwise (instance norm) every (n, c) plane is its own group.
  const auto& xv = x.value();
  const std::size_t hw = len;
  std::vector<double> mean(groups, 0.0), invstd(groups, 0.0);
  auto for_group = [&](std::size_t gidx, auto&& fn) {
    if (per_channel_over_batch) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = (i * channels + gidx) * hw;
        for (std::size_t p = 0; p < hw; ++p) fn(base + p);
      }
    } else {
      const std::size_t base = gidx * hw;
      for (std::size_t p = 0; p < hw; ++p) fn(base + p);
    }
  };
  const double count = per_channel_over_batch ? double(n * hw) : double(hw);
  std::vector<double> var(groups, 0.0);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    double s = 0;
    for_group(gi, [&](std::size_t k) { s += xv[k]; });
    const double m = s / count;
    double v = 0;
    for_group(gi, [&](std::size_t k) { v += (xv[k] - m) * (xv[k] - m); });
    v /= count;
    mean[gi] = m;
    var[gi] = v;
    invstd[gi] = 1.0 / std::sqrt(v + eps);
  }
  if (batch_mean) *batch_mean = mean;
  if (batch_var) *batch_var = var;
  Tensor<T> y(xv.shape);
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t c = gi % channels;
    for_group(gi, [&](std::size_t k) {
      y[k] = static_cast<T>((xv[k] - mean[gi]) * invstd[gi] * gv[c] + bv[c]);
    });
  }
  return x.tape->record(std::move(y), {x, gamma, beta},
                        [=](Tape<T>& t, std::size_t self) {
    const auto& xv = t.value(x);
    const auto& gy = t.grad(self);
    const auto& gv = t.value(gamma);
    auto for_group = [&](std::size_t gidx, auto&& fn) {
      if (per_channel_over_batch) {
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t base = (i * channels + gidx) * hw;
          for (std::size_t p = 0; p < hw; ++p) fn(base + p);
        }
      } else {
        const std::size_t base = gidx * hw;
        for (std::size_t p = 0; p < hw; ++p) fn(base + p);
      }
    };
    const bool need_x = t.requires_grad(x), need_g = t.requires_grad(gamma), need_b = t.requires_grad(beta);
    Tensor<T>* gx = need_x ? &t.grad(x) : nullptr;
    Tensor<T>* gg = need_g ? &t.grad(gamma) : nullptr;
    Tensor<T>* gb = need_b ? &t.grad(beta) : nullptr;
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t c = gi % channels;
      double sum_dy = 0, sum_dy_xhat = 0;
      for_group(gi, [&](std::size_t k) {
        const double xhat = (xv[k] - mean[gi]) * invstd[gi];
        sum_dy += gy[k];
        sum_dy_xhat += gy[k] * xhat;
      });
      if (gg) (*gg)[c] += static_cast<T>(sum_dy_xhat);
      if (gb) (*gb)[c] += static_cast<T>(sum_dy);
      if (gx) {
        const double gam = gv[c];
        for_group(gi, [&](std::size_t k) {
          const double xhat = (xv[k] - mean[gi]) * invstd[gi];
          (*gx)[k] += static_cast<T>(gam * invstd[gi] / count *
                                     (count * gy[k] - sum_dy - xhat * sum_dy_xhat));
        });
      }
    }
  });
}

}  // namespace detail

/// Batch normalization over (N, H, W) per channel for [N, C, H, W] or over N for [N, C].
/// Training mode normalizes with batch statistics and updates the running estimates.
template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, Tensor<T>& running_mean, Tensor<T>& running_var,
                  const BatchNormOptions& opt) {
  const auto& xv = x.value();
  if (xv.rank() != 4 && xv.rank() != 2) throw Error("batch_norm expects rank 2 or 4 input");
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.rank() == 4 ? xv.dim(2) * xv.dim(3) : 1;
  require_shape(gamma.value(), {c}, "batch_norm gamma");
  require_shape(beta.value(), {c}, "batch_norm beta");
  require_shape(running_mean, {c}, "batch_norm running mean");
  require_shape(running_var, {c}, "batch_norm running var");
  if (opt.training) {
    std::vector<double> m, v;
    auto y = detail::group_norm_core(x, gamma, beta, c, hw, c, n, opt.eps, &m, &v, true);
    for (std::size_t i = 0; i < c; ++i) {
      running_mean[i] = static_cast<T>(opt.momentum * running_mean[i] + (1 - opt.momentum) * m[i]);
      running_var[i] = static_cast<T>(opt.momentum * running_var[i] + (1 - opt.momentum) * v[i]);
    }
    return y;
  }
  // inference: fixed affine transform from running statistics
  Tensor<T> y(xv.shape);
  std::vector<T> a(c), s(c);
  for (std::size_t i = 0; i < c; ++i) {
    a[i] = static_cast<T>(gamma.value()[i] / std::sqrt(double(running_var[i]) + opt.eps));
    s[i] = static_cast<T>(beta.value()[i] - a[i] * running_mean[i]);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * hw;
      for (std::size_t p = 0; p < hw; ++p) y[base + p] = a[ch] * xv[base + p] + s[ch];
    }
  std::vector<T> rv(running_var.data), rm(running_mean.data);
  const double eps = opt.eps;
  return x.tape->record(std::move(y), {x, gamma, beta}, [x, gamma, beta, rv, rm, eps, n, c, hw](Tape<T>& t, std::size_t self) {
    const auto& gy = t.grad(self);
    const auto& xv = t.value(x);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double inv = 1.0 / std::sqrt(double(rv[ch]) + eps);
      double sdy = 0, sdyx = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = (i * c + ch) * hw;
        for (std::size_t p = 0; p < hw; ++p) {
          sdy += gy[base + p];
          sdyx += gy[base + p] * (xv[base + p] - rm[ch]) * inv;
        }
      }
      if (t.requires_grad(gamma)) t.grad(gamma)[ch] += static_cast<T>(sdyx);
      if (t.requires_grad(beta)) t.grad(beta)[ch] += static_cast<T>(sdy);
      if (t.requires_grad(x)) {
        auto& gx = t.grad(x);
        const T a = static_cast<T>(t.value(gamma)[ch] * inv);
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t base = (i * c + ch) * hw;
          for (std::size_t p = 0; p < hw; ++p) gx[base + p] += a * gy[base + p];
        }
      }
    }
  });
}

/// Instance normalization: every (sample, channel) plane normalized on its own, then a
/// per-channel affine transform.
template <typename T>
Var<T> instance_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps = 1e-5) {
  const auto& xv = x.value();
  if (xv.rank() != 4) throw Error("instance_norm expects [N, C, H, W]");
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  require_shape(gamma.value(), {c}, "instance_norm gamma");
  require_shape(beta.value(), {c}, "instance_norm beta");
  return detail::group_norm_core(x, gamma, beta, n * c, hw, c, n, eps, nullptr, nullptr, false);
}

// ---------------------------------------------------------------------------
// Pooling and resampling

template <typename T>
Var<T> max_pool2d(Var<T> x, int kernel, int stride, int pad = 0) {
  const auto& xv = x.value();
  if (xv.rank() != 4) throw Error("max_pool2d expects [N, C, H, W]");
  const std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t oh = conv_out_dim(h, kernel, stride, pad), ow = conv_out_dim(w, kernel, stride, pad);
  Tensor<T> y({n, c, oh, ow});
  std::vector<std::size_t> arg(y.size());
  for (std::size_t plane = 0; plane < n * c; ++plane)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_i = 0;
        for (int i = 0; i < kernel; ++i)
          for (int j = 0; j < kernel; ++j) {
            const long iy = long(oy) * stride - pad + i, ix = long(ox) * stride - pad + j;
            if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(w)) continue;
            const std::size_t k = (plane * h + std::size_t(iy)) * w + std::size_t(ix);
            if (xv[k] > best) {
              best = xv[k];
              best_i = k;
            }
          }
        const std::size_t o = (plane * oh + oy) * ow + ox;
        y[o] = best;
        arg[o] = best_i;
      }
  return x.tape->record(std::move(y), {x}, [x, arg](Tape<T>& t, std::size_t self) {
    const auto& gy = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t o = 0; o < gy.size(); ++o) gx[arg[o]] += gy[o];
  });
}

/// [N, C, H, W] -> [N, C]
template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  const auto& xv = x.value();
  if (xv.rank() != 4) throw Error("global_avg_pool expects [N, C, H, W]");
  const std::size_t nc = xv.dim(0) * xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor<T> y({xv.dim(0), xv.dim(1)});
  for (std::size_t i = 0; i < nc; ++i) {
    double s = 0;
    for (std::size_t p = 0; p < hw; ++p) s += xv[i * hw + p];
    y[i] = static_cast<T>(s / double(hw));
  }
  return x.tape->record(std::move(y), {x}, [x, nc, hw](Tape<T>& t, std::size_t self) {
    const auto& gy = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < nc; ++i) {
      const T g = gy[i] / static_cast<T>(hw);
      for (std::size_t p = 0; p < hw; ++p) gx[i * hw + p] += g;
    }
  });
}

template <typename T>
Var<T> upsample_nearest(Var<T> x, int factor) {
  const auto& xv = x.value();
  if (xv.rank() != 4) throw Error("upsample_nearest expects [N, C, H, W]");
  if (factor < 1) throw Error("upsample factor must be >= 1");
  const std::size_t nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t f = std::size_t(factor), oh = h * f, ow = w * f;
  Tensor<T> y({xv.dim(0), xv.dim(1), oh, ow});
  for (std::size_t pl = 0; pl < nc; ++pl)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) y[(pl * oh + oy) * ow + ox] = xv[(pl * h + oy / f) * w + ox / f];
  return x.tape->record(std::move(y), {x}, [x, nc, h, w, f](Tape<T>& t, std::size_t self) {
    const auto& gy = t.grad(self);
    auto& gx = t.grad(x);
    const std::size_t oh = h * f, ow = w * f;
    for (std::size_t pl = 0; pl < nc; ++pl)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) gx[(pl * h + oy / f) * w + ox / f] += gy[(pl * oh + oy) * ow + ox];
  });
}

/// Flattens [N, ...] to [N, rest] without copying semantics changes.
template <typename T>
Var<T> flatten(Var<T> x) {
  Tensor<T> y = x.value();
  const std::size_t n = y.dim(0);
  y.shape = {n, y.size() / n};
  return x.tape->record(std::move(y), {x}, [x](Tape<T>& t, std::size_t self) {
    const auto& gy = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
  });
}

}  // namespace voi::nn
