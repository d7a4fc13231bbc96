#pragma once

#include <cmath>
#include <vector>

#include "bifuser/core/ops.hpp"

namespace bifuser {

inline Index conv_out_size(Index in, Index k, Index stride, Index pad, Index dilation) {
  return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
}

namespace detail {

/// Gathers conv patches: {Cin*kh*kw, Hout*Wout} for one sample plane block.
template <typename S>
void im2col(const S* x, Index c_in, Index h, Index w, Index kh, Index kw, Index stride, Index pad,
            Index dilation, Index h_out, Index w_out, S* cols) {
  const Index l = h_out * w_out;
  for (Index c = 0; c < c_in; ++c) {
    const S* plane = x + c * h * w;
    for (Index ky = 0; ky < kh; ++ky) {
      for (Index kx = 0; kx < kw; ++kx) {
        S* row = cols + ((c * kh + ky) * kw + kx) * l;
        for (Index oy = 0; oy < h_out; ++oy) {
          const Index iy = oy * stride - pad + ky * dilation;
          S* dst = row + oy * w_out;
          if (iy < 0 || iy >= h) {
            for (Index ox = 0; ox < w_out; ++ox) dst[ox] = S(0);
            continue;
          }
          const S* src = plane + iy * w;
          for (Index ox = 0; ox < w_out; ++ox) {
            const Index ix = ox * stride - pad + kx * dilation;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : S(0);
          }
        }
      }
    }
  }
}

/// Scatter-adds the transpose of im2col.
template <typename S>
void col2im(const S* cols, Index c_in, Index h, Index w, Index kh, Index kw, Index stride,
            Index pad, Index dilation, Index h_out, Index w_out, S* x) {
  const Index l = h_out * w_out;
  for (Index c = 0; c < c_in; ++c) {
    S* plane = x + c * h * w;
    for (Index ky = 0; ky < kh; ++ky) {
      for (Index kx = 0; kx < kw; ++kx) {
        const S* row = cols + ((c * kh + ky) * kw + kx) * l;
        for (Index oy = 0; oy < h_out; ++oy) {
          const Index iy = oy * stride - pad + ky * dilation;
          if (iy < 0 || iy >= h) continue;
          const S* src = row + oy * w_out;
          S* dst = plane + iy * w;
          for (Index ox = 0; ox < w_out; ++ox) {
            const Index ix = ox * stride - pad + kx * dilation;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2D convolution, NCHW activations, {Cout, Cin, kh, kw} weights.
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& bias, Index stride = 1,
              Index pad = 0, Index dilation = 1) {
  if (x.value().ndim() != 4 || w.value().ndim() != 4)
    throw ShapeMismatch("conv2d expects NCHW input and OIHW weight");
  const Index n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index c_out = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != c_in)
    throw ShapeMismatch("conv2d: input channels " + std::to_string(c_in) + " vs weight " +
                        std::to_string(w.dim(1)));
  const Index h_out = conv_out_size(h, kh, stride, pad, dilation);
  const Index w_out = conv_out_size(wd, kw, stride, pad, dilation);
  if (h_out <= 0 || w_out <= 0) throw ShapeMismatch("conv2d: empty output");
  const Index k = c_in * kh * kw;
  const Index l = h_out * w_out;
  const bool pointwise = (kh == 1 && kw == 1 && stride == 1 && pad == 0 && dilation == 1);

  Tensor<S> v({n, c_out, h_out, w_out});
  Tensor<S> cols;
  if (!pointwise) cols = Tensor<S>({k, l});
  auto wm = w.value().matrix(c_out, k);
  for (Index s = 0; s < n; ++s) {
    typename Tensor<S>::MatrixMap out(v.data() + s * c_out * l, c_out, l);
    if (pointwise) {
      typename Tensor<S>::ConstMatrixMap xin(x.value().data() + s * c_in * h * wd, c_in, l);
      out.noalias() = wm * xin;
    } else {
      detail::im2col(x.value().data() + s * c_in * h * wd, c_in, h, wd, kh, kw, stride, pad,
                     dilation, h_out, w_out, cols.data());
      out.noalias() = wm * cols.matrix(k, l);
    }
    if (bias.defined())
      out.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(bias.value().data(),
                                                                             c_out);
  }

  std::vector<Var<S>> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  auto back = [x, w, bias, n, c_in, h, wd, c_out, kh, kw, stride, pad, dilation, h_out, w_out, k,
               l, pointwise](GradNode<S>& node) mutable {
    auto wm = w.value().matrix(c_out, k);
    Tensor<S> gx, gw, gb, cols, dcols;
    if (x.requires_grad()) gx = Tensor<S>(x.shape());
    if (w.requires_grad()) gw = Tensor<S>(w.shape());
    if (bias.defined() && bias.requires_grad()) gb = Tensor<S>(bias.shape());
    if (!pointwise) {
      cols = Tensor<S>({k, l});
      dcols = Tensor<S>({k, l});
    }
    for (Index s = 0; s < n; ++s) {
      typename Tensor<S>::ConstMatrixMap dout(node.grad.data() + s * c_out * l, c_out, l);
      if (w.requires_grad()) {
        if (pointwise) {
          typename Tensor<S>::ConstMatrixMap xin(x.value().data() + s * c_in * h * wd, c_in, l);
          gw.matrix(c_out, k).noalias() += dout * xin.transpose();
        } else {
          detail::im2col(x.value().data() + s * c_in * h * wd, c_in, h, wd, kh, kw, stride, pad,
                         dilation, h_out, w_out, cols.data());
          gw.matrix(c_out, k).noalias() += dout * cols.matrix(k, l).transpose();
        }
      }
      if (x.requires_grad()) {
        if (pointwise) {
          typename Tensor<S>::MatrixMap gxm(gx.data() + s * c_in * h * wd, c_in, l);
          gxm.noalias() = wm.transpose() * dout;
        } else {
          dcols.matrix(k, l).noalias() = wm.transpose() * dout;
          detail::col2im(dcols.data(), c_in, h, wd, kh, kw, stride, pad, dilation, h_out, w_out,
                         gx.data() + s * c_in * h * wd);
        }
      }
      if (bias.defined() && bias.requires_grad())
        Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(gb.data(), c_out) += dout.rowwise().sum();
    }
    if (x.requires_grad()) x.accumulate_grad(gx);
    if (w.requires_grad()) w.accumulate_grad(gw);
    if (bias.defined() && bias.requires_grad()) bias.accumulate_grad(gb);
  };
  return Var<S>::make_op(std::move(v), std::move(parents), std::move(back));
}

/// Max pooling with argmax bookkeeping for the backward pass.
template <typename S>
Var<S> maxpool2d(const Var<S>& x, Index k, Index stride, Index pad = 0) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index h_out = conv_out_size(h, k, stride, pad, 1);
  const Index w_out = conv_out_size(w, k, stride, pad, 1);
  Tensor<S> v({n, c, h_out, w_out});
  auto argmax = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(n * c * h_out * w_out));
  const S* src = x.value().data();
  S* dst = v.data();
  Index oi = 0;
  for (Index p = 0; p < n * c; ++p) {
    const S* plane = src + p * h * w;
    for (Index oy = 0; oy < h_out; ++oy) {
      for (Index ox = 0; ox < w_out; ++ox, ++oi) {
        S best = -std::numeric_limits<S>::infinity();
        Index best_idx = -1;
        for (Index ky = 0; ky < k; ++ky) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (Index kx = 0; kx < k; ++kx) {
            const Index ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const S val = plane[iy * w + ix];
            if (val > best) {
              best = val;
              best_idx = p * h * w + iy * w + ix;
            }
          }
        }
        dst[oi] = best;
        (*argmax)[static_cast<std::size_t>(oi)] = best_idx;
      }
    }
  }
  return Var<S>::make_op(std::move(v), {x}, [x, argmax](GradNode<S>& node) mutable {
    if (!x.requires_grad()) return;
    Tensor<S> g(x.shape());
    for (Index i = 0; i < node.grad.size(); ++i) {
      const Index src_idx = (*argmax)[static_cast<std::size_t>(i)];
      if (src_idx >= 0) g[src_idx] += node.grad[i];
    }
    x.accumulate_grad(g);
  });
}

/// Average-pools {N,C,H,W} onto a g x g grid of equal blocks.
template <typename S>
Var<S> avgpool_grid(const Var<S>& x, Index g) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % g != 0 || w % g != 0)
    throw NotDivisible("avgpool_grid: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                       " not divisible by grid " + std::to_string(g));
  const Index bh = h / g, bw = w / g;
  const S inv = S(1) / static_cast<S>(bh * bw);
  Tensor<S> v({n, c, g, g});
  for (Index p = 0; p < n * c; ++p) {
    const S* plane = x.value().data() + p * h * w;
    S* out = v.data() + p * g * g;
    for (Index gy = 0; gy < g; ++gy)
      for (Index gx = 0; gx < g; ++gx) {
        S acc = S(0);
        for (Index y = gy * bh; y < (gy + 1) * bh; ++y)
          for (Index xx = gx * bw; xx < (gx + 1) * bw; ++xx) acc += plane[y * w + xx];
        out[gy * g + gx] = acc * inv;
      }
  }
  return Var<S>::make_op(std::move(v), {x}, [x, n, c, h, w, g, bh, bw, inv](GradNode<S>& node) mutable {
    if (!x.requires_grad()) return;
    Tensor<S> gr(x.shape());
    for (Index p = 0; p < n * c; ++p) {
      S* plane = gr.data() + p * h * w;
      const S* dout = node.grad.data() + p * g * g;
      for (Index gy = 0; gy < g; ++gy)
        for (Index gx = 0; gx < g; ++gx) {
          const S val = dout[gy * g + gx] * inv;
          for (Index y = gy * bh; y < (gy + 1) * bh; ++y)
            for (Index xx = gx * bw; xx < (gx + 1) * bw; ++xx) plane[y * w + xx] += val;
        }
    }
    x.accumulate_grad(gr);
  });
}

namespace detail {

/// Half-pixel source coordinates; border taps extrapolate linearly so affine
/// ramps survive a resize exactly.
inline void resize_taps(Index in, Index out, std::vector<Index>& base, std::vector<double>& frac) {
  base.resize(static_cast<std::size_t>(out));
  frac.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    if (in == 1) {
      base[static_cast<std::size_t>(o)] = 0;
      frac[static_cast<std::size_t>(o)] = 0.0;
      continue;
    }
    const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    Index b = static_cast<Index>(std::floor(src));
    if (b < 0) b = 0;
    if (b > in - 2) b = in - 2;
    base[static_cast<std::size_t>(o)] = b;
    frac[static_cast<std::size_t>(o)] = src - static_cast<double>(b);
  }
}

}  // namespace detail

/// Bilinear resize of {N,C,H,W} to {N,C,Ht,Wt}.
template <typename S>
Var<S> bilinear_resize(const Var<S>& x, Index ht, Index wt) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<Index> yb, xb;
  std::vector<double> yf, xf;
  detail::resize_taps(h, ht, yb, yf);
  detail::resize_taps(w, wt, xb, xf);
  Tensor<S> v({n, c, ht, wt});
  for (Index p = 0; p < n * c; ++p) {
    const S* plane = x.value().data() + p * h * w;
    S* out = v.data() + p * ht * wt;
    for (Index oy = 0; oy < ht; ++oy) {
      const Index y0 = yb[static_cast<std::size_t>(oy)];
      const double fy = yf[static_cast<std::size_t>(oy)];
      const Index y1 = (h == 1) ? y0 : y0 + 1;
      for (Index ox = 0; ox < wt; ++ox) {
        const Index x0 = xb[static_cast<std::size_t>(ox)];
        const double fx = xf[static_cast<std::size_t>(ox)];
        const Index x1 = (w == 1) ? x0 : x0 + 1;
        const double top = (1.0 - fx) * plane[y0 * w + x0] + fx * plane[y0 * w + x1];
        const double bot = (1.0 - fx) * plane[y1 * w + x0] + fx * plane[y1 * w + x1];
        out[oy * wt + ox] = static_cast<S>((1.0 - fy) * top + fy * bot);
      }
    }
  }
  auto back = [x, n, c, h, w, ht, wt, yb, yf, xb, xf](GradNode<S>& node) mutable {
    if (!x.requires_grad()) return;
    Tensor<S> g(x.shape());
    for (Index p = 0; p < n * c; ++p) {
      S* plane = g.data() + p * h * w;
      const S* dout = node.grad.data() + p * ht * wt;
      for (Index oy = 0; oy < ht; ++oy) {
        const Index y0 = yb[static_cast<std::size_t>(oy)];
        const double fy = yf[static_cast<std::size_t>(oy)];
        const Index y1 = (h == 1) ? y0 : y0 + 1;
        for (Index ox = 0; ox < wt; ++ox) {
          const Index x0 = xb[static_cast<std::size_t>(ox)];
          const double fx = xf[static_cast<std::size_t>(ox)];
          const Index x1 = (w == 1) ? x0 : x0 + 1;
          const double d = static_cast<double>(dout[oy * wt + ox]);
          plane[y0 * w + x0] += static_cast<S>((1.0 - fy) * (1.0 - fx) * d);
          plane[y0 * w + x1] += static_cast<S>((1.0 - fy) * fx * d);
          plane[y1 * w + x0] += static_cast<S>(fy * (1.0 - fx) * d);
          plane[y1 * w + x1] += static_cast<S>(fy * fx * d);
        }
      }
    }
    x.accumulate_grad(g);
  };
  return Var<S>::make_op(std::move(v), {x}, std::move(back));
}

}  // namespace bifuser
