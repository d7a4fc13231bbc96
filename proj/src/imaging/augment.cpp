#include "bifuser/imaging/augment.hpp"

#include <algorithm>
#include <cmath>

namespace bifuser::imaging {

namespace {

float sample_bilinear_zero(const TensorF& chw, Index c, double y, double x) {
  const Index h = chw.dim(1), w = chw.dim(2);
  if (y < -0.5 || y > h - 0.5 || x < -0.5 || x > w - 0.5) return 0.0f;
  const Index y0 = static_cast<Index>(std::floor(y));
  const Index x0 = static_cast<Index>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto px = [&](Index yy, Index xx) -> double {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
    return chw.at({c, yy, xx});
  };
  const double top = (1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1);
  const double bot = (1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1);
  return static_cast<float>((1 - fy) * top + fy * bot);
}

float sample_nearest_zero(const TensorF& chw, Index c, double y, double x) {
  const Index h = chw.dim(1), w = chw.dim(2);
  const Index yy = static_cast<Index>(std::lround(y));
  const Index xx = static_cast<Index>(std::lround(x));
  if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0f;
  return chw.at({c, yy, xx});
}

}  // namespace

Eigen::Affine2d augment_affine(Index size, bool flip, double deg, double scale) {
  const double half = (static_cast<double>(size) - 1.0) / 2.0;
  Eigen::Affine2d m = Eigen::Translation2d(half, half) *
                      Eigen::Rotation2Dd(deg * M_PI / 180.0) *
                      Eigen::Scaling(scale) *
                      Eigen::Translation2d(-half, -half);
  if (flip) {
    Eigen::Affine2d f = Eigen::Affine2d::Identity();
    f.linear()(0, 0) = -1.0;
    f.translation().x() = 2.0 * half;
    m = m * f;
  }
  return m;
}

CanonicalSample augment(const CanonicalSample& sample, const AugmentParams& params, Rng& rng) {
  const Index s = sample.size();
  const bool flip = params.flip_prob > 0.0 && rng.bernoulli(params.flip_prob);
  const double deg =
      params.rotation_deg > 0.0 ? rng.uniform(-params.rotation_deg, params.rotation_deg) : 0.0;
  const double scale =
      params.scale_jitter > 0.0 ? rng.uniform(1.0 - params.scale_jitter, 1.0 + params.scale_jitter)
                                : 1.0;
  const double brightness = params.brightness_jitter > 0.0
                                ? rng.uniform(-params.brightness_jitter, params.brightness_jitter)
                                : 0.0;
  const double contrast =
      params.contrast_jitter > 0.0
          ? rng.uniform(1.0 - params.contrast_jitter, 1.0 + params.contrast_jitter)
          : 1.0;

  CanonicalSample out = sample;
  const bool identity = !flip && deg == 0.0 && scale == 1.0;
  if (!identity) {
    const Eigen::Affine2d fwd = augment_affine(s, flip, deg, scale);
    const Eigen::Affine2d inv = fwd.inverse();
    out.fundus = TensorF({3, s, s});
    out.vessel = TensorF({1, s, s});
    out.mask = TensorF({1, s, s});
    for (Index y = 0; y < s; ++y)
      for (Index x = 0; x < s; ++x) {
        const Eigen::Vector2d src =
            inv * Eigen::Vector2d(static_cast<double>(x), static_cast<double>(y));
        for (Index c = 0; c < 3; ++c)
          out.fundus.at({c, y, x}) = sample_bilinear_zero(sample.fundus, c, src.y(), src.x());
        out.vessel.at({0, y, x}) = sample_bilinear_zero(sample.vessel, 0, src.y(), src.x());
        out.mask.at({0, y, x}) = sample_nearest_zero(sample.mask, 0, src.y(), src.x());
      }
    out.fovea_canonical = fwd * sample.fovea_canonical;
  }

  if (brightness != 0.0 || contrast != 1.0) {
    for (Index i = 0; i < out.fundus.size(); ++i)
      out.fundus[i] = std::clamp(
          static_cast<float>(out.fundus[i] * contrast + brightness), 0.0f, 1.0f);
  }
  return out;
}

}  // namespace bifuser::imaging
