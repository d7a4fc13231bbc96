#pragma once

#include <cmath>
#include <vector>

#include "bifuser/core/variable.hpp"

namespace bifuser {

namespace detail {

inline void check_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b)
    throw ShapeMismatch(std::string(what) + ": shape " + shape_str(a) + " vs " + shape_str(b));
}

template <typename S>
Tensor<S> permute_tensor(const Tensor<S>& in, const std::vector<int>& axes) {
  const int nd = in.ndim();
  Shape out_shape(axes.size());
  for (std::size_t k = 0; k < axes.size(); ++k) out_shape[k] = in.dim(axes[k]);
  Tensor<S> out(out_shape);
  std::vector<Index> in_strides(nd, 1);
  for (int i = nd - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in.dim(i + 1);
  std::vector<Index> out_strides(nd, 1);
  for (int i = nd - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * out_shape[i + 1];
  // walk input multi-index; innermost input axis varies fastest
  std::vector<Index> idx(nd, 0);
  std::vector<Index> out_stride_for_in_axis(nd, 0);
  for (int k = 0; k < nd; ++k) out_stride_for_in_axis[axes[k]] = out_strides[k];
  const S* src = in.data();
  S* dst = out.data();
  const Index total = in.size();
  Index out_flat = 0;
  for (Index flat = 0; flat < total; ++flat) {
    dst[out_flat] = src[flat];
    // increment multi-index
    for (int ax = nd - 1; ax >= 0; --ax) {
      idx[ax]++;
      out_flat += out_stride_for_in_axis[ax];
      if (idx[ax] < in.dim(ax)) break;
      out_flat -= out_stride_for_in_axis[ax] * in.dim(ax);
      idx[ax] = 0;
    }
  }
  return out;
}

inline std::vector<int> inverse_axes(const std::vector<int>& axes) {
  std::vector<int> inv(axes.size());
  for (std::size_t k = 0; k < axes.size(); ++k) inv[axes[k]] = static_cast<int>(k);
  return inv;
}

}  // namespace detail

template <typename S>
Var<S> constant(Tensor<S> t) {
  return Var<S>(std::move(t));
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "add");
  Tensor<S> v(a.shape());
  v.array() = a.value().array() + b.value().array();
  return Var<S>::make_op(std::move(v), {a, b}, [a, b](GradNode<S>& n) mutable {
    a.accumulate_grad(n.grad);
    b.accumulate_grad(n.grad);
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "sub");
  Tensor<S> v(a.shape());
  v.array() = a.value().array() - b.value().array();
  return Var<S>::make_op(std::move(v), {a, b}, [a, b](GradNode<S>& n) mutable {
    a.accumulate_grad(n.grad);
    if (b.requires_grad()) {
      Tensor<S> g(n.grad.shape());
      g.array() = -n.grad.array();
      b.accumulate_grad(g);
    }
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "mul");
  Tensor<S> v(a.shape());
  v.array() = a.value().array() * b.value().array();
  return Var<S>::make_op(std::move(v), {a, b}, [a, b](GradNode<S>& n) mutable {
    if (a.requires_grad()) {
      Tensor<S> g(n.grad.shape());
      g.array() = n.grad.array() * b.value().array();
      a.accumulate_grad(g);
    }
    if (b.requires_grad()) {
      Tensor<S> g(n.grad.shape());
      g.array() = n.grad.array() * a.value().array();
      b.accumulate_grad(g);
    }
  });
}

template <typename S>
Var<S> div_elem(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "div");
  Tensor<S> v(a.shape());
  v.array() = a.value().array() / b.value().array();
  return Var<S>::make_op(std::move(v), {a, b}, [a, b](GradNode<S>& n) mutable {
    if (a.requires_grad()) {
      Tensor<S> g(n.grad.shape());
      g.array() = n.grad.array() / b.value().array();
      a.accumulate_grad(g);
    }
    if (b.requires_grad()) {
      Tensor<S> g(n.grad.shape());
      g.array() = -n.grad.array() * a.value().array() / b.value().array().square();
      b.accumulate_grad(g);
    }
  });
}

template <typename S>
Var<S> add_scalar(const Var<S>& a, S c) {
  Tensor<S> v(a.shape());
  v.array() = a.value().array() + c;
  return Var<S>::make_op(std::move(v), {a},
                         [a](GradNode<S>& n) mutable { a.accumulate_grad(n.grad); });
}

template <typename S>
Var<S> mul_scalar(const Var<S>& a, S c) {
  Tensor<S> v(a.shape());
  v.array() = a.value().array() * c;
  return Var<S>::make_op(std::move(v), {a}, [a, c](GradNode<S>& n) mutable {
    if (a.requires_grad()) {
      Tensor<S> g(n.grad.shape());
      g.array() = n.grad.array() * c;
      a.accumulate_grad(g);
    }
  });
}

template <typename S>
Var<S> operator+(const Var<S>& a, const Var<S>& b) {
  return add(a, b);
}
template <typename S>
Var<S> operator-(const Var<S>& a, const Var<S>& b) {
  return sub(a, b);
}
template <typename S>
Var<S> operator*(const Var<S>& a, const Var<S>& b) {
  return mul(a, b);
}
template <typename S>
Var<S> operator*(const Var<S>& a, S c) {
  return mul_scalar(a, c);
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <typename S>
Var<S> relu(const Var<S>& x) {
  Tensor<S> v(x.shape());
  v.array() = x.value().array().max(S(0));
  return Var<S>::make_op(std::move(v), {x}, [x](GradNode<S>& n) mutable {
    Tensor<S> g(n.grad.shape());
    g.array() = n.grad.array() * (x.value().array() > S(0)).template cast<S>();
    x.accumulate_grad(g);
  });
}

template <typename S>
Var<S> sigmoid(const Var<S>& x) {
  Tensor<S> v(x.shape());
  for (Index i = 0; i < v.size(); ++i) {
    const S z = x.value()[i];
    v[i] = z >= S(0) ? S(1) / (S(1) + std::exp(-z)) : std::exp(z) / (S(1) + std::exp(z));
  }
  return Var<S>::make_op(std::move(v), {x}, [x](GradNode<S>& n) mutable {
    Tensor<S> g(n.grad.shape());
    g.array() = n.grad.array() * n.value.array() * (S(1) - n.value.array());
    x.accumulate_grad(g);
  });
}

/// Exact (erf-based) GELU.
template <typename S>
Var<S> gelu(const Var<S>& x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  Tensor<S> v(x.shape());
  for (Index i = 0; i < v.size(); ++i) {
    const double z = static_cast<double>(x.value()[i]);
    v[i] = static_cast<S>(z * 0.5 * (1.0 + std::erf(z * inv_sqrt2)));
  }
  return Var<S>::make_op(std::move(v), {x}, [x](GradNode<S>& n) mutable {
    Tensor<S> g(n.grad.shape());
    for (Index i = 0; i < g.size(); ++i) {
      const double z = static_cast<double>(x.value()[i]);
      const double cdf = 0.5 * (1.0 + std::erf(z * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * z * z);
      g[i] = n.grad[i] * static_cast<S>(cdf + z * pdf);
    }
    x.accumulate_grad(g);
  });
}

/// Softmax over the innermost axis.
template <typename S>
Var<S> softmax_lastdim(const Var<S>& x) {
  const Index last = x.dim(-1);
  const Index rows = x.size() / last;
  Tensor<S> v(x.shape());
  auto xin = x.value().matrix(rows, last);
  auto out = v.matrix(rows, last);
  for (Index r = 0; r < rows; ++r) {
    const S m = xin.row(r).maxCoeff();
    out.row(r) = (xin.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return Var<S>::make_op(std::move(v), {x}, [x, rows, last](GradNode<S>& n) mutable {
    Tensor<S> g(n.grad.shape());
    auto y = n.value.matrix(rows, last);
    auto dy = n.grad.matrix(rows, last);
    auto dx = g.matrix(rows, last);
    for (Index r = 0; r < rows; ++r) {
      const S dot = dy.row(r).dot(y.row(r));
      dx.row(r) = y.row(r).array() * (dy.row(r).array() - dot);
    }
    x.accumulate_grad(g);
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
Var<S> sum_all(const Var<S>& x) {
  Tensor<S> v = Tensor<S>::scalar(x.value().array().sum());
  return Var<S>::make_op(std::move(v), {x}, [x](GradNode<S>& n) mutable {
    if (!x.requires_grad()) return;
    Tensor<S> g(x.shape());
    g.array().setConstant(n.grad[0]);
    x.accumulate_grad(g);
  });
}

template <typename S>
Var<S> mean_all(const Var<S>& x) {
  const S inv = S(1) / static_cast<S>(x.size());
  return mul_scalar(sum_all(x), inv);
}

/// Sums every axis but the first: {N, ...} -> {N}.
template <typename S>
Var<S> sum_per_sample(const Var<S>& x) {
  const Index n_rows = x.dim(0);
  const Index inner = x.size() / n_rows;
  Tensor<S> v({n_rows});
  auto m = x.value().matrix(n_rows, inner);
  for (Index r = 0; r < n_rows; ++r) v[r] = m.row(r).sum();
  return Var<S>::make_op(std::move(v), {x}, [x, n_rows, inner](GradNode<S>& n) mutable {
    if (!x.requires_grad()) return;
    Tensor<S> g(x.shape());
    auto gm = g.matrix(n_rows, inner);
    for (Index r = 0; r < n_rows; ++r) gm.row(r).setConstant(n.grad[r]);
    x.accumulate_grad(g);
  });
}

// ---------------------------------------------------------------------------
// shape manipulation
// ---------------------------------------------------------------------------

template <typename S>
Var<S> reshape(const Var<S>& x, Shape shape) {
  Tensor<S> v = x.value().reshaped(std::move(shape));
  return Var<S>::make_op(std::move(v), {x}, [x](GradNode<S>& n) mutable {
    x.accumulate_grad(n.grad.reshaped(x.shape()));
  });
}

template <typename S>
Var<S> permute(const Var<S>& x, std::vector<int> axes) {
  if (static_cast<int>(axes.size()) != x.value().ndim())
    throw ShapeMismatch("permute: axes rank mismatch");
  Tensor<S> v = detail::permute_tensor(x.value(), axes);
  return Var<S>::make_op(std::move(v), {x}, [x, axes](GradNode<S>& n) mutable {
    x.accumulate_grad(detail::permute_tensor(n.grad, detail::inverse_axes(axes)));
  });
}

template <typename S>
Var<S> transpose_last2(const Var<S>& x) {
  std::vector<int> axes(x.value().ndim());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(x, std::move(axes));
}

/// x[{D0, rest...}] -> x[i] with shape {rest...}.
template <typename S>
Var<S> select0(const Var<S>& x, Index i) {
  const Index block = x.size() / x.dim(0);
  Shape out_shape(x.shape().begin() + 1, x.shape().end());
  Tensor<S> v(out_shape);
  v.array() = x.value().array().segment(i * block, block);
  return Var<S>::make_op(std::move(v), {x}, [x, i, block](GradNode<S>& n) mutable {
    if (!x.requires_grad()) return;
    Tensor<S> g(x.shape());
    g.array().segment(i * block, block) = n.grad.array();
    x.accumulate_grad(g);
  });
}

/// Slice `len` entries starting at `start` along `axis`.
template <typename S>
Var<S> narrow(const Var<S>& x, int axis, Index start, Index len) {
  const int nd = x.value().ndim();
  if (axis < 0) axis += nd;
  Index outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < nd; ++i) inner *= x.dim(i);
  const Index d = x.dim(axis);
  if (start < 0 || start + len > d) throw ShapeMismatch("narrow: range out of bounds");
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  Tensor<S> v(out_shape);
  for (Index o = 0; o < outer; ++o)
    v.array().segment(o * len * inner, len * inner) =
        x.value().array().segment((o * d + start) * inner, len * inner);
  return Var<S>::make_op(std::move(v), {x},
                         [x, outer, inner, d, start, len](GradNode<S>& n) mutable {
                           if (!x.requires_grad()) return;
                           Tensor<S> g(x.shape());
                           for (Index o = 0; o < outer; ++o)
                             g.array().segment((o * d + start) * inner, len * inner) =
                                 n.grad.array().segment(o * len * inner, len * inner);
                           x.accumulate_grad(g);
                         });
}

/// Concatenates along `axis`; all other dims must agree.
template <typename S>
Var<S> concat(const std::vector<Var<S>>& xs, int axis) {
  if (xs.empty()) throw ShapeMismatch("concat: empty input list");
  const int nd = xs[0].value().ndim();
  if (axis < 0) axis += nd;
  Shape out_shape = xs[0].shape();
  Index total_axis = 0;
  for (const auto& x : xs) {
    for (int i = 0; i < nd; ++i)
      if (i != axis && x.dim(i) != out_shape[static_cast<std::size_t>(i)])
        throw ShapeMismatch("concat: dim mismatch off the concat axis");
    total_axis += x.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = total_axis;
  Index outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < nd; ++i) inner *= out_shape[static_cast<std::size_t>(i)];

  Tensor<S> v(out_shape);
  Index offset = 0;
  for (const auto& x : xs) {
    const Index d = x.dim(axis);
    for (Index o = 0; o < outer; ++o)
      v.array().segment((o * total_axis + offset) * inner, d * inner) =
          x.value().array().segment(o * d * inner, d * inner);
    offset += d;
  }
  std::vector<Var<S>> parents = xs;
  return Var<S>::make_op(std::move(v), parents,
                         [xs, outer, inner, total_axis](GradNode<S>& n) mutable {
                           Index offset = 0;
                           for (auto& x : xs) {
                             const Index d = x.size() / (outer * inner);
                             if (x.requires_grad()) {
                               Tensor<S> g(x.shape());
                               for (Index o = 0; o < outer; ++o)
                                 g.array().segment(o * d * inner, d * inner) =
                                     n.grad.array().segment((o * total_axis + offset) * inner,
                                                            d * inner);
                               x.accumulate_grad(g);
                             }
                             offset += d;
                           }
                         });
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  if (a.value().ndim() != 2 || b.value().ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeMismatch("matmul: incompatible shapes " + shape_str(a.shape()) + " * " +
                        shape_str(b.shape()));
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<S> v({m, n});
  v.matrix(m, n).noalias() = a.value().matrix(m, k) * b.value().matrix(k, n);
  return Var<S>::make_op(std::move(v), {a, b}, [a, b, m, k, n](GradNode<S>& node) mutable {
    auto dc = node.grad.matrix(m, n);
    if (a.requires_grad()) {
      Tensor<S> ga({m, k});
      ga.matrix(m, k).noalias() = dc * b.value().matrix(k, n).transpose();
      a.accumulate_grad(ga);
    }
    if (b.requires_grad()) {
      Tensor<S> gb({k, n});
      gb.matrix(k, n).noalias() = a.value().matrix(m, k).transpose() * dc;
      b.accumulate_grad(gb);
    }
  });
}

/// Batched matmul: {..., m, k} x {..., k, n} with identical leading dims.
template <typename S>
Var<S> bmm(const Var<S>& a, const Var<S>& b) {
  const int nda = a.value().ndim(), ndb = b.value().ndim();
  if (nda < 2 || nda != ndb) throw ShapeMismatch("bmm: rank mismatch");
  Index batch = 1;
  for (int i = 0; i < nda - 2; ++i) {
    if (a.dim(i) != b.dim(i)) throw ShapeMismatch("bmm: leading dim mismatch");
    batch *= a.dim(i);
  }
  const Index m = a.dim(-2), k = a.dim(-1), kb = b.dim(-2), n = b.dim(-1);
  if (k != kb) throw ShapeMismatch("bmm: inner dim mismatch");
  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<S> v(out_shape);
  for (Index bi = 0; bi < batch; ++bi) {
    typename Tensor<S>::ConstMatrixMap ma(a.value().data() + bi * m * k, m, k);
    typename Tensor<S>::ConstMatrixMap mb(b.value().data() + bi * k * n, k, n);
    typename Tensor<S>::MatrixMap mv(v.data() + bi * m * n, m, n);
    mv.noalias() = ma * mb;
  }
  return Var<S>::make_op(std::move(v), {a, b}, [a, b, batch, m, k, n](GradNode<S>& node) mutable {
    Tensor<S> ga, gb;
    if (a.requires_grad()) ga = Tensor<S>(a.shape());
    if (b.requires_grad()) gb = Tensor<S>(b.shape());
    for (Index bi = 0; bi < batch; ++bi) {
      typename Tensor<S>::ConstMatrixMap dc(node.grad.data() + bi * m * n, m, n);
      if (a.requires_grad()) {
        typename Tensor<S>::ConstMatrixMap mb(b.value().data() + bi * k * n, k, n);
        typename Tensor<S>::MatrixMap mga(ga.data() + bi * m * k, m, k);
        mga.noalias() = dc * mb.transpose();
      }
      if (b.requires_grad()) {
        typename Tensor<S>::ConstMatrixMap ma(a.value().data() + bi * m * k, m, k);
        typename Tensor<S>::MatrixMap mgb(gb.data() + bi * k * n, k, n);
        mgb.noalias() = ma.transpose() * dc;
      }
    }
    if (a.requires_grad()) a.accumulate_grad(ga);
    if (b.requires_grad()) b.accumulate_grad(gb);
  });
}

/// Affine map on the innermost axis: {..., din} -> {..., dout}.
/// Pass a default-constructed Var for `bias` to skip it.
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& bias) {
  const Index din = x.dim(-1);
  if (w.value().ndim() != 2 || w.dim(0) != din)
    throw ShapeMismatch("linear: weight shape " + shape_str(w.shape()) + " vs input " +
                        shape_str(x.shape()));
  const Index dout = w.dim(1);
  const Index rows = x.size() / din;
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  Tensor<S> v(out_shape);
  v.matrix(rows, dout).noalias() = x.value().matrix(rows, din) * w.value().matrix(din, dout);
  if (bias.defined()) {
    if (bias.size() != dout) throw ShapeMismatch("linear: bias size mismatch");
    v.matrix(rows, dout).rowwise() +=
        Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(bias.value().data(), dout);
  }
  std::vector<Var<S>> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  return Var<S>::make_op(std::move(v), std::move(parents),
                         [x, w, bias, rows, din, dout](GradNode<S>& node) mutable {
                           auto dy = node.grad.matrix(rows, dout);
                           if (x.requires_grad()) {
                             Tensor<S> gx(x.shape());
                             gx.matrix(rows, din).noalias() =
                                 dy * w.value().matrix(din, dout).transpose();
                             x.accumulate_grad(gx);
                           }
                           if (w.requires_grad()) {
                             Tensor<S> gw(w.shape());
                             gw.matrix(din, dout).noalias() =
                                 x.value().matrix(rows, din).transpose() * dy;
                             w.accumulate_grad(gw);
                           }
                           if (bias.defined() && bias.requires_grad()) {
                             Tensor<S> gb(bias.shape());
                             Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(gb.data(), dout) =
                                 dy.colwise().sum();
                             bias.accumulate_grad(gb);
                           }
                         });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

/// Mean binary cross-entropy on logits, numerically stable.
template <typename S>
Var<S> bce_with_logits_mean(const Var<S>& logits, const Var<S>& targets) {
  detail::check_same_shape(logits.shape(), targets.shape(), "bce");
  const Index n = logits.size();
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double l = static_cast<double>(logits.value()[i]);
    const double t = static_cast<double>(targets.value()[i]);
    acc += std::max(l, 0.0) - l * t + std::log1p(std::exp(-std::abs(l)));
  }
  Tensor<S> v = Tensor<S>::scalar(static_cast<S>(acc / static_cast<double>(n)));
  return Var<S>::make_op(std::move(v), {logits, targets}, [logits, targets, n](GradNode<S>& node) mutable {
    if (!logits.requires_grad()) return;
    const S scale = node.grad[0] / static_cast<S>(n);
    Tensor<S> g(logits.shape());
    for (Index i = 0; i < n; ++i) {
      const S l = logits.value()[i];
      const S p = l >= S(0) ? S(1) / (S(1) + std::exp(-l)) : std::exp(l) / (S(1) + std::exp(l));
      g[i] = (p - targets.value()[i]) * scale;
    }
    logits.accumulate_grad(g);
  });
}

}  // namespace bifuser
