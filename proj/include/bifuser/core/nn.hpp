#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bifuser/core/conv.hpp"
#include "bifuser/core/ops.hpp"
#include "bifuser/core/random.hpp"

namespace bifuser {

/// Flat registry of a model's trainable parameters and persistent buffers
/// (running statistics). Used by the optimizer, checkpoints and gradchecks.
template <typename S>
struct NamedParams {
  std::vector<std::pair<std::string, Var<S>*>> params;
  std::vector<std::pair<std::string, Tensor<S>*>> buffers;

  void add_param(const std::string& name, Var<S>& v) { params.emplace_back(name, &v); }
  void add_buffer(const std::string& name, Tensor<S>& t) { buffers.emplace_back(name, &t); }

  Index param_count() const {
    Index n = 0;
    for (auto& [name, p] : params) n += p->size();
    return n;
  }
};

template <typename S>
Tensor<S> kaiming_normal(Rng& rng, Shape shape, Index fan_in) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  return rng.normal_tensor<S>(std::move(shape), 0.0, stddev);
}

template <typename S>
Tensor<S> xavier_uniform(Rng& rng, Shape shape, Index fan_in, Index fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return rng.uniform_tensor<S>(std::move(shape), -limit, limit);
}

template <typename S>
struct Conv2dLayer {
  Var<S> weight, bias;
  Index stride = 1, pad = 0, dilation = 1;

  static Conv2dLayer create(Rng& rng, Index c_in, Index c_out, Index k, Index stride = 1,
                            Index pad = 0, Index dilation = 1, bool with_bias = true) {
    Conv2dLayer layer;
    layer.weight = Var<S>::param(kaiming_normal<S>(rng, {c_out, c_in, k, k}, c_in * k * k));
    if (with_bias) layer.bias = Var<S>::param(Tensor<S>::zeros({c_out}));
    layer.stride = stride;
    layer.pad = pad;
    layer.dilation = dilation;
    return layer;
  }

  Var<S> forward(const Var<S>& x) const { return conv2d(x, weight, bias, stride, pad, dilation); }

  void register_into(const std::string& prefix, NamedParams<S>& np) {
    np.add_param(prefix + ".weight", weight);
    if (bias.defined()) np.add_param(prefix + ".bias", bias);
  }
};

template <typename S>
struct LinearLayer {
  Var<S> weight, bias;  // weight is {din, dout}

  static LinearLayer create(Rng& rng, Index din, Index dout, bool with_bias = true) {
    LinearLayer layer;
    layer.weight = Var<S>::param(xavier_uniform<S>(rng, {din, dout}, din, dout));
    if (with_bias) layer.bias = Var<S>::param(Tensor<S>::zeros({dout}));
    return layer;
  }

  Var<S> forward(const Var<S>& x) const { return linear(x, weight, bias); }

  void register_into(const std::string& prefix, NamedParams<S>& np) {
    np.add_param(prefix + ".weight", weight);
    if (bias.defined()) np.add_param(prefix + ".bias", bias);
  }
};

/// Batch normalization over {N,C,H,W}. Training mode normalizes with batch
/// statistics and updates the running buffers; eval mode uses the buffers
/// only, keeping inference deterministic.
template <typename S>
struct BatchNorm2dLayer {
  Var<S> gamma, beta;
  Tensor<S> running_mean, running_var;
  S momentum = S(0.1);
  S eps = S(1e-5);

  static BatchNorm2dLayer create(Index channels) {
    BatchNorm2dLayer layer;
    layer.gamma = Var<S>::param(Tensor<S>::ones({channels}));
    layer.beta = Var<S>::param(Tensor<S>::zeros({channels}));
    layer.running_mean = Tensor<S>::zeros({channels});
    layer.running_var = Tensor<S>::ones({channels});
    return layer;
  }

  Var<S> forward(const Var<S>& x, bool train) {
    const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const Index m = n * h * w;
    Tensor<S> mean({c}), inv_std({c});
    if (train) {
      for (Index ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (Index s = 0; s < n; ++s) {
          const S* plane = x.value().data() + (s * c + ch) * h * w;
          for (Index i = 0; i < h * w; ++i) acc += plane[i];
        }
        mean[ch] = static_cast<S>(acc / static_cast<double>(m));
      }
      Tensor<S> var({c});
      for (Index ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (Index s = 0; s < n; ++s) {
          const S* plane = x.value().data() + (s * c + ch) * h * w;
          for (Index i = 0; i < h * w; ++i) {
            const double d = plane[i] - mean[ch];
            acc += d * d;
          }
        }
        var[ch] = static_cast<S>(acc / static_cast<double>(m));
      }
      const S unbias = m > 1 ? static_cast<S>(m) / static_cast<S>(m - 1) : S(1);
      running_mean.array() = (S(1) - momentum) * running_mean.array() + momentum * mean.array();
      running_var.array() =
          (S(1) - momentum) * running_var.array() + momentum * unbias * var.array();
      for (Index ch = 0; ch < c; ++ch)
        inv_std[ch] = S(1) / std::sqrt(var[ch] + eps);
    } else {
      mean = running_mean;
      for (Index ch = 0; ch < c; ++ch)
        inv_std[ch] = S(1) / std::sqrt(running_var[ch] + eps);
    }

    Tensor<S> v(x.shape());
    Tensor<S> xhat(x.shape());
    for (Index s = 0; s < n; ++s)
      for (Index ch = 0; ch < c; ++ch) {
        const S* src = x.value().data() + (s * c + ch) * h * w;
        S* xh = xhat.data() + (s * c + ch) * h * w;
        S* dst = v.data() + (s * c + ch) * h * w;
        const S mu = mean[ch], is = inv_std[ch], g = gamma.value()[ch], b = beta.value()[ch];
        for (Index i = 0; i < h * w; ++i) {
          xh[i] = (src[i] - mu) * is;
          dst[i] = g * xh[i] + b;
        }
      }

    Var<S> gamma_v = gamma, beta_v = beta, x_v = x;
    auto inv_std_c = std::make_shared<Tensor<S>>(std::move(inv_std));
    auto xhat_c = std::make_shared<Tensor<S>>(std::move(xhat));
    auto back = [x_v, gamma_v, beta_v, inv_std_c, xhat_c, n, c, h, w, m,
                 train](GradNode<S>& node) mutable {
      Tensor<S> dgamma({c}), dbeta({c});
      for (Index s = 0; s < n; ++s)
        for (Index ch = 0; ch < c; ++ch) {
          const S* dy = node.grad.data() + (s * c + ch) * h * w;
          const S* xh = xhat_c->data() + (s * c + ch) * h * w;
          double dg = 0.0, db = 0.0;
          for (Index i = 0; i < h * w; ++i) {
            dg += dy[i] * xh[i];
            db += dy[i];
          }
          dgamma[ch] += static_cast<S>(dg);
          dbeta[ch] += static_cast<S>(db);
        }
      if (x_v.requires_grad()) {
        Tensor<S> gx(x_v.shape());
        for (Index s = 0; s < n; ++s)
          for (Index ch = 0; ch < c; ++ch) {
            const S* dy = node.grad.data() + (s * c + ch) * h * w;
            const S* xh = xhat_c->data() + (s * c + ch) * h * w;
            S* dst = gx.data() + (s * c + ch) * h * w;
            const S g = gamma_v.value()[ch], is = (*inv_std_c)[ch];
            if (train) {
              const S mean_dy = dbeta[ch] / static_cast<S>(m);
              const S mean_dyxh = dgamma[ch] / static_cast<S>(m);
              for (Index i = 0; i < h * w; ++i)
                dst[i] = g * is * (dy[i] - mean_dy - xh[i] * mean_dyxh);
            } else {
              for (Index i = 0; i < h * w; ++i) dst[i] = g * is * dy[i];
            }
          }
        x_v.accumulate_grad(gx);
      }
      gamma_v.accumulate_grad(dgamma);
      beta_v.accumulate_grad(dbeta);
    };
    return Var<S>::make_op(std::move(v), {x, gamma, beta}, std::move(back));
  }

  void register_into(const std::string& prefix, NamedParams<S>& np) {
    np.add_param(prefix + ".gamma", gamma);
    np.add_param(prefix + ".beta", beta);
    np.add_buffer(prefix + ".running_mean", running_mean);
    np.add_buffer(prefix + ".running_var", running_var);
  }
};

/// Layer normalization over the innermost axis.
template <typename S>
struct LayerNormLayer {
  Var<S> gamma, beta;
  S eps = S(1e-5);

  static LayerNormLayer create(Index dim) {
    LayerNormLayer layer;
    layer.gamma = Var<S>::param(Tensor<S>::ones({dim}));
    layer.beta = Var<S>::param(Tensor<S>::zeros({dim}));
    return layer;
  }

  Var<S> forward(const Var<S>& x) {
    const Index d = x.dim(-1);
    const Index rows = x.size() / d;
    Tensor<S> v(x.shape());
    Tensor<S> xhat(x.shape());
    Tensor<S> inv_std({rows});
    auto xin = x.value().matrix(rows, d);
    auto xh = xhat.matrix(rows, d);
    auto out = v.matrix(rows, d);
    auto gm = Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(gamma.value().data(), d);
    auto bm = Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(beta.value().data(), d);
    for (Index r = 0; r < rows; ++r) {
      const S mu = xin.row(r).mean();
      const S var = (xin.row(r).array() - mu).square().mean();
      const S is = S(1) / std::sqrt(var + eps);
      inv_std[r] = is;
      xh.row(r) = (xin.row(r).array() - mu) * is;
      out.row(r) = xh.row(r).cwiseProduct(gm) + bm;
    }
    Var<S> gamma_v = gamma, beta_v = beta, x_v = x;
    auto xhat_c = std::make_shared<Tensor<S>>(std::move(xhat));
    auto is_c = std::make_shared<Tensor<S>>(std::move(inv_std));
    auto back = [x_v, gamma_v, beta_v, xhat_c, is_c, rows, d](GradNode<S>& node) mutable {
      auto dy = node.grad.matrix(rows, d);
      auto xh = xhat_c->matrix(rows, d);
      if (gamma_v.requires_grad()) {
        Tensor<S> dg({d});
        Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(dg.data(), d) =
            dy.cwiseProduct(xh).colwise().sum();
        gamma_v.accumulate_grad(dg);
      }
      if (beta_v.requires_grad()) {
        Tensor<S> db({d});
        Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(db.data(), d) = dy.colwise().sum();
        beta_v.accumulate_grad(db);
      }
      if (x_v.requires_grad()) {
        Tensor<S> gx(x_v.shape());
        auto dx = gx.matrix(rows, d);
        auto gm = Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(gamma_v.value().data(), d);
        for (Index r = 0; r < rows; ++r) {
          Eigen::Matrix<S, 1, Eigen::Dynamic> dxh = dy.row(r).cwiseProduct(gm);
          const S mean_dxh = dxh.mean();
          const S mean_dxh_xh = dxh.cwiseProduct(xh.row(r)).mean();
          dx.row(r) =
              ((dxh.array() - mean_dxh) - xh.row(r).array() * mean_dxh_xh) * (*is_c)[r];
        }
        x_v.accumulate_grad(gx);
      }
    };
    return Var<S>::make_op(std::move(v), {x, gamma, beta}, std::move(back));
  }

  void register_into(const std::string& prefix, NamedParams<S>& np) {
    np.add_param(prefix + ".gamma", gamma);
    np.add_param(prefix + ".beta", beta);
  }
};

}  // namespace bifuser
