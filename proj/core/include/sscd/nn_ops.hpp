#pragma once

#include <Eigen/Dense>
#include <memory>

#include "sscd/autograd.hpp"

namespace sscd::ag {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRM = Eigen::Map<MatRM<T>>;
template <class T>
using CMapRM = Eigen::Map<const MatRM<T>>;

struct ConvGeom {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

inline int conv_out_extent(int in, int k, const ConvGeom& g) {
  return (in + 2 * g.pad - g.dilation * (k - 1) - 1) / g.stride + 1;
}

namespace detail {

template <class T>
void im2col(const T* x, int c, int h, int w, int kh, int kw, const ConvGeom& g,
            int oh, int ow, T* col) {
  // col layout: (c*kh*kw) x (oh*ow)
  const int plane = oh * ow;
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* dst = col + ((ch * kh + ki) * kw + kj) * plane;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ki * g.dilation;
          if (iy < 0 || iy >= h) {
            std::fill(dst + oy * ow, dst + (oy + 1) * ow, T{0});
            continue;
          }
          const T* src_row = x + (ch * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kj * g.dilation;
            dst[oy * ow + ox] = (ix < 0 || ix >= w) ? T{0} : src_row[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, int c, int h, int w, int kh, int kw,
                const ConvGeom& g, int oh, int ow, T* x) {
  const int plane = oh * ow;
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* src = col + ((ch * kh + ki) * kw + kj) * plane;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ki * g.dilation;
          if (iy < 0 || iy >= h) continue;
          T* dst_row = x + (ch * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kj * g.dilation;
            if (ix >= 0 && ix < w) dst_row[ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: (N,C,H,W), w: (O,C,kh,kw), b: (O) or empty Var. im2col + GEMM; the col
// buffer is cached for the weight/input backward.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b,
              const ConvGeom& g) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  if (xs.size() != 4 || ws.size() != 4)
    throw std::invalid_argument("conv2d: expects 4d tensors");
  if (xs[1] != ws[1])
    throw std::invalid_argument("conv2d: channel mismatch " +
                                x->value.shape_str() + " vs " + w->value.shape_str());
  const int n = xs[0], c = xs[1], h = xs[2], wd = xs[3];
  const int o = ws[0], kh = ws[2], kw = ws[3];
  const int oh = conv_out_extent(h, kh, g), ow = conv_out_extent(wd, kw, g);
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: empty output");
  const int ckk = c * kh * kw;
  const int plane = oh * ow;
  const bool has_bias = b && b->value.numel() > 0;

  auto cols = std::make_shared<Tensor<T>>(std::vector<int>{n, ckk, plane});
  Tensor<T> out({n, o, oh, ow});
  CMapRM<T> wmat(w->value.data(), o, ckk);
  for (int i = 0; i < n; ++i) {
    T* col = cols->data() + static_cast<std::int64_t>(i) * ckk * plane;
    detail::im2col(x->value.data() + static_cast<std::int64_t>(i) * c * h * wd,
                   c, h, wd, kh, kw, g, oh, ow, col);
    MapRM<T> y(out.data() + static_cast<std::int64_t>(i) * o * plane, o, plane);
    y.noalias() = wmat * CMapRM<T>(col, ckk, plane);
    if (has_bias)
      for (int oc = 0; oc < o; ++oc)
        y.row(oc).array() += b->value[oc];
  }

  std::vector<Var<T>> parents = has_bias ? std::vector<Var<T>>{x, w, b}
                                         : std::vector<Var<T>>{x, w};
  return make_op<T>(std::move(out), std::move(parents),
                    [x, w, b, g, cols, n, c, h, wd, o, kh, kw, oh, ow, ckk,
                     plane, has_bias](Node<T>& node) {
    for (int i = 0; i < n; ++i) {
      CMapRM<T> dy(node.grad.data() + static_cast<std::int64_t>(i) * o * plane,
                   o, plane);
      const T* col = cols->data() + static_cast<std::int64_t>(i) * ckk * plane;
      if (w->requires_grad) {
        MapRM<T> dw(w->ensure_grad().data(), o, ckk);
        dw.noalias() += dy * CMapRM<T>(col, ckk, plane).transpose();
      }
      if (has_bias && b->requires_grad) {
        auto& db = b->ensure_grad();
        for (int oc = 0; oc < o; ++oc) db[oc] += static_cast<T>(dy.row(oc).sum());
      }
      if (x->requires_grad) {
        MatRM<T> dcol(ckk, plane);
        dcol.noalias() = CMapRM<T>(w->value.data(), o, ckk).transpose() * dy;
        detail::col2im_add(dcol.data(), c, h, wd, kh, kw, g, oh, ow,
                           x->ensure_grad().data() +
                               static_cast<std::int64_t>(i) * c * h * wd);
      }
    }
  });
}

// Mutable per-layer normalization state (running stats live outside the tape).
template <class T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(int channels = 0, double momentum_ = 0.1,
                          double eps_ = 1e-5)
      : running_mean({channels}, T{0}),
        running_var({channels}, T{1}),
        momentum(momentum_),
        eps(eps_) {}
};

template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormState<T>& state, bool training) {
  const auto& xs = x->value.shape();
  const int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t m = static_cast<std::int64_t>(n) * plane;

  auto xhat = std::make_shared<Tensor<T>>(std::vector<int>{n, c, h, w});
  auto invstd = std::make_shared<Tensor<T>>(std::vector<int>{c});
  Tensor<T> out({n, c, h, w});

  for (int ch = 0; ch < c; ++ch) {
    double mean, var;
    if (training) {
      double acc = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = x->value.data() + (static_cast<std::int64_t>(b) * c + ch) * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
      }
      mean = acc / static_cast<double>(m);
      double vacc = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = x->value.data() + (static_cast<std::int64_t>(b) * c + ch) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const double d = p[i] - mean;
          vacc += d * d;
        }
      }
      var = vacc / static_cast<double>(m);
      const double unbiased = m > 1 ? vacc / static_cast<double>(m - 1) : var;
      state.running_mean[ch] = static_cast<T>(
          (1.0 - state.momentum) * state.running_mean[ch] + state.momentum * mean);
      state.running_var[ch] = static_cast<T>(
          (1.0 - state.momentum) * state.running_var[ch] + state.momentum * unbiased);
    } else {
      mean = state.running_mean[ch];
      var = state.running_var[ch];
    }
    const double istd = 1.0 / std::sqrt(var + state.eps);
    (*invstd)[ch] = static_cast<T>(istd);
    const T g = gamma->value[ch], bta = beta->value[ch];
    for (int b = 0; b < n; ++b) {
      const std::int64_t base = (static_cast<std::int64_t>(b) * c + ch) * plane;
      const T* px = x->value.data() + base;
      T* pxh = xhat->data() + base;
      T* po = out.data() + base;
      for (std::int64_t i = 0; i < plane; ++i) {
        const T xh = static_cast<T>((px[i] - mean) * istd);
        pxh[i] = xh;
        po[i] = g * xh + bta;
      }
    }
  }

  return make_op<T>(std::move(out), {x, gamma, beta},
                    [x, gamma, beta, xhat, invstd, n, c, plane, m,
                     training](Node<T>& node) {
    for (int ch = 0; ch < c; ++ch) {
      double dg = 0.0, db = 0.0;
      for (int b = 0; b < n; ++b) {
        const std::int64_t base = (static_cast<std::int64_t>(b) * c + ch) * plane;
        const T* gy = node.grad.data() + base;
        const T* xh = xhat->data() + base;
        for (std::int64_t i = 0; i < plane; ++i) {
          dg += static_cast<double>(gy[i]) * xh[i];
          db += gy[i];
        }
      }
      if (gamma->requires_grad) gamma->ensure_grad()[ch] += static_cast<T>(dg);
      if (beta->requires_grad) beta->ensure_grad()[ch] += static_cast<T>(db);
      if (!x->requires_grad) continue;
      const double g = gamma->value[ch];
      const double istd = (*invstd)[ch];
      auto& gx = x->ensure_grad();
      if (training) {
        const double inv_m = 1.0 / static_cast<double>(m);
        for (int b = 0; b < n; ++b) {
          const std::int64_t base = (static_cast<std::int64_t>(b) * c + ch) * plane;
          const T* gy = node.grad.data() + base;
          const T* xh = xhat->data() + base;
          T* px = gx.data() + base;
          for (std::int64_t i = 0; i < plane; ++i)
            px[i] += static_cast<T>(g * istd *
                                    (gy[i] - db * inv_m - xh[i] * dg * inv_m));
        }
      } else {
        for (int b = 0; b < n; ++b) {
          const std::int64_t base = (static_cast<std::int64_t>(b) * c + ch) * plane;
          const T* gy = node.grad.data() + base;
          T* px = gx.data() + base;
          for (std::int64_t i = 0; i < plane; ++i)
            px[i] += static_cast<T>(g * istd * gy[i]);
        }
      }
    }
  });
}

template <class T>
Var<T> max_pool(const Var<T>& x, int k, int stride, int pad) {
  const auto& xs = x->value.shape();
  const int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  ConvGeom g{stride, pad, 1};
  const int oh = conv_out_extent(h, k, g), ow = conv_out_extent(w, k, g);
  Tensor<T> out({n, c, oh, ow});
  auto argmax = std::make_shared<Tensor<std::int32_t>>(std::vector<int>{n, c, oh, ow});
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const T* src = x->value.data() + (static_cast<std::int64_t>(b) * c + ch) * h * w;
      const std::int64_t obase = (static_cast<std::int64_t>(b) * c + ch) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          T best{};
          int best_idx = -1;
          for (int ki = 0; ki < k; ++ki) {
            const int iy = oy * stride - pad + ki;
            if (iy < 0 || iy >= h) continue;
            for (int kj = 0; kj < k; ++kj) {
              const int ix = ox * stride - pad + kj;
              if (ix < 0 || ix >= w) continue;
              const T v = src[iy * w + ix];
              if (best_idx < 0 || v > best) {
                best = v;
                best_idx = iy * w + ix;
              }
            }
          }
          out[obase + oy * ow + ox] = best_idx < 0 ? T{0} : best;
          (*argmax)[obase + oy * ow + ox] = best_idx;
        }
      }
    }
  }
  return make_op<T>(std::move(out), {x},
                    [x, argmax, n, c, h, w, oh, ow](Node<T>& node) {
    auto& gx = x->ensure_grad();
    for (int b = 0; b < n; ++b) {
      for (int ch = 0; ch < c; ++ch) {
        T* dst = gx.data() + (static_cast<std::int64_t>(b) * c + ch) * h * w;
        const std::int64_t obase = (static_cast<std::int64_t>(b) * c + ch) * oh * ow;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(oh) * ow; ++i) {
          const int idx = (*argmax)[obase + i];
          if (idx >= 0) dst[idx] += node.grad[obase + i];
        }
      }
    }
  });
}

namespace detail {

struct LerpAxis {
  std::vector<int> i0, i1;
  std::vector<double> w1;  // weight of i1; weight of i0 is 1-w1
};

// align_corners=false sampling grid.
inline LerpAxis make_lerp_axis(int in, int out) {
  LerpAxis ax;
  ax.i0.resize(out);
  ax.i1.resize(out);
  ax.w1.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    if (s < 0) s = 0;
    if (s > in - 1) s = in - 1;
    const int i0 = static_cast<int>(s);
    ax.i0[o] = i0;
    ax.i1[o] = std::min(i0 + 1, in - 1);
    ax.w1[o] = s - i0;
  }
  return ax;
}

}  // namespace detail

template <class T>
Var<T> upsample_bilinear(const Var<T>& x, int oh, int ow) {
  const auto& xs = x->value.shape();
  const int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  auto ay = std::make_shared<detail::LerpAxis>(detail::make_lerp_axis(h, oh));
  auto axx = std::make_shared<detail::LerpAxis>(detail::make_lerp_axis(w, ow));
  Tensor<T> out({n, c, oh, ow});
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const T* src = x->value.data() + (static_cast<std::int64_t>(b) * c + ch) * h * w;
      T* dst = out.data() + (static_cast<std::int64_t>(b) * c + ch) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        const int y0 = ay->i0[oy], y1 = ay->i1[oy];
        const double wy = ay->w1[oy];
        for (int ox = 0; ox < ow; ++ox) {
          const int x0 = axx->i0[ox], x1 = axx->i1[ox];
          const double wx = axx->w1[ox];
          const double v = (1 - wy) * ((1 - wx) * src[y0 * w + x0] + wx * src[y0 * w + x1]) +
                           wy * ((1 - wx) * src[y1 * w + x0] + wx * src[y1 * w + x1]);
          dst[oy * ow + ox] = static_cast<T>(v);
        }
      }
    }
  }
  return make_op<T>(std::move(out), {x},
                    [x, ay, axx, n, c, h, w, oh, ow](Node<T>& node) {
    auto& gx = x->ensure_grad();
    for (int b = 0; b < n; ++b) {
      for (int ch = 0; ch < c; ++ch) {
        T* dst = gx.data() + (static_cast<std::int64_t>(b) * c + ch) * h * w;
        const T* gy = node.grad.data() + (static_cast<std::int64_t>(b) * c + ch) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int y0 = ay->i0[oy], y1 = ay->i1[oy];
          const double wy = ay->w1[oy];
          for (int ox = 0; ox < ow; ++ox) {
            const int x0 = axx->i0[ox], x1 = axx->i1[ox];
            const double wx = axx->w1[ox];
            const double g = gy[oy * ow + ox];
            dst[y0 * w + x0] += static_cast<T>((1 - wy) * (1 - wx) * g);
            dst[y0 * w + x1] += static_cast<T>((1 - wy) * wx * g);
            dst[y1 * w + x0] += static_cast<T>(wy * (1 - wx) * g);
            dst[y1 * w + x1] += static_cast<T>(wy * wx * g);
          }
        }
      }
    }
  });
}

template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
  const auto& xs = x->value.shape();
  const int n = xs[0], c = xs[1];
  const std::int64_t plane = static_cast<std::int64_t>(xs[2]) * xs[3];
  Tensor<T> out({n, c, 1, 1});
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const T* src = x->value.data() + (static_cast<std::int64_t>(b) * c + ch) * plane;
      double acc = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
      out.at(b, ch, 0, 0) = static_cast<T>(acc / static_cast<double>(plane));
    }
  }
  return make_op<T>(std::move(out), {x}, [x, n, c, plane](Node<T>& node) {
    auto& gx = x->ensure_grad();
    const double inv = 1.0 / static_cast<double>(plane);
    for (int b = 0; b < n; ++b) {
      for (int ch = 0; ch < c; ++ch) {
        T* dst = gx.data() + (static_cast<std::int64_t>(b) * c + ch) * plane;
        const T g = static_cast<T>(node.grad.at(b, ch, 0, 0) * inv);
        for (std::int64_t i = 0; i < plane; ++i) dst[i] += g;
      }
    }
  });
}

}  // namespace sscd::ag
