#pragma once

#include <functional>
#include <vector>

#include "bifuser/core/optim.hpp"

namespace bifuser::test {

/// Central-difference gradient check. Samples up to `max_entries` coordinates
/// across all listed parameters, runs one analytic backward and compares.
/// Returns the worst relative error, |a - n| / max(|a|, |n|, 1).
inline double gradcheck(std::vector<Var<double>> params,
                        const std::function<Var<double>()>& loss_fn, int max_entries,
                        std::uint64_t seed, double fd_step = 1e-5) {
  Var<double> loss = loss_fn();
  for (auto& p : params) p.zero_grad();
  loss = loss_fn();
  backward(loss);

  std::vector<std::pair<std::size_t, Index>> entries;
  for (std::size_t pi = 0; pi < params.size(); ++pi)
    for (Index i = 0; i < params[pi].size(); ++i) entries.emplace_back(pi, i);
  Rng rng(seed);
  // Fisher-Yates prefix shuffle to pick the sample without replacement.
  const std::size_t take = std::min<std::size_t>(entries.size(), static_cast<std::size_t>(max_entries));
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(entries.size() - i - 1)));
    std::swap(entries[i], entries[j]);
  }

  double worst = 0.0;
  for (std::size_t e = 0; e < take; ++e) {
    auto [pi, idx] = entries[e];
    Var<double>& p = params[pi];
    const double analytic = p.has_grad() ? p.grad()[idx] : 0.0;
    const double orig = p.value()[idx];
    const double h = fd_step * std::max(1.0, std::abs(orig));
    p.value()[idx] = orig + h;
    const double f_plus = loss_fn().value()[0];
    p.value()[idx] = orig - h;
    const double f_minus = loss_fn().value()[0];
    p.value()[idx] = orig;
    const double numeric = (f_plus - f_minus) / (2.0 * h);
    const double err = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1.0});
    worst = std::max(worst, err);
  }
  return worst;
}

inline Var<double> random_var(Rng& rng, Shape shape, bool requires_grad = true,
                              double stddev = 1.0) {
  Tensor<double> t = rng.normal_tensor<double>(std::move(shape), 0.0, stddev);
  return requires_grad ? Var<double>::param(std::move(t)) : Var<double>(std::move(t));
}

}  // namespace bifuser::test
