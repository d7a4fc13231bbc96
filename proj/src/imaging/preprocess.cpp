#include "bifuser/imaging/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace bifuser::imaging {

namespace {

/// Bilinear sample from a planar float image; out-of-range reads clamp.
float sample_bilinear(const TensorF& chw, Index c, double y, double x) {
  const Index h = chw.dim(1), w = chw.dim(2);
  const double yc = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const double xc = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const Index y0 = std::min<Index>(static_cast<Index>(yc), h - 1);
  const Index x0 = std::min<Index>(static_cast<Index>(xc), w - 1);
  const Index y1 = std::min<Index>(y0 + 1, h - 1);
  const Index x1 = std::min<Index>(x0 + 1, w - 1);
  const double fy = yc - y0, fx = xc - x0;
  const double top = (1 - fx) * chw.at({c, y0, x0}) + fx * chw.at({c, y0, x1});
  const double bot = (1 - fx) * chw.at({c, y1, x0}) + fx * chw.at({c, y1, x1});
  return static_cast<float>((1 - fy) * top + fy * bot);
}

}  // namespace

std::array<Index, 4> content_bbox(const ImageU8& img, double threshold) {
  const auto t = static_cast<std::uint8_t>(std::lround(threshold * 255.0));
  Index x0 = img.width, y0 = img.height, x1 = -1, y1 = -1;
  for (Index y = 0; y < img.height; ++y)
    for (Index x = 0; x < img.width; ++x) {
      std::uint8_t mx = 0;
      for (Index c = 0; c < img.channels; ++c) mx = std::max(mx, img.at(y, x, c));
      if (mx > t) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  if (x1 < 0) throw AllBackground("no pixel above the background threshold");
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

TensorF make_fovea_mask(double center_x, double center_y, double radius, Index size) {
  if (radius < 0) throw ValidationError("mask radius must be non-negative");
  TensorF mask({1, size, size});
  const double r2 = radius * radius;
  // only scan the bounding square of the disc
  const Index y_lo = std::max<Index>(0, static_cast<Index>(std::floor(center_y - radius)));
  const Index y_hi = std::min<Index>(size - 1, static_cast<Index>(std::ceil(center_y + radius)));
  const Index x_lo = std::max<Index>(0, static_cast<Index>(std::floor(center_x - radius)));
  const Index x_hi = std::min<Index>(size - 1, static_cast<Index>(std::ceil(center_x + radius)));
  for (Index y = y_lo; y <= y_hi; ++y)
    for (Index x = x_lo; x <= x_hi; ++x) {
      const double dx = x - center_x, dy = y - center_y;
      if (dx * dx + dy * dy <= r2) mask.at({0, y, x}) = 1.0f;
    }
  return mask;
}

CanonicalSample preprocess(const RawSample& raw, const PreprocessParams& params) {
  if (raw.fundus.empty() || raw.fundus.channels != 3)
    throw ValidationError("fundus must be a 3-channel image");
  if (raw.has_vessel() &&
      (raw.vessel.width != raw.fundus.width || raw.vessel.height != raw.fundus.height))
    throw MismatchedShapes("fundus and vessel sizes disagree");

  const Index s = params.canonical_size;
  const auto [bx, by, bw, bh] = content_bbox(raw.fundus, params.bg_threshold);
  const Index side = std::max(bw, bh);
  const double pad_x = static_cast<double>(side - bw) / 2.0;
  const double pad_y = static_cast<double>(side - bh) / 2.0;

  CoordTransform tf;
  tf.crop_dx = static_cast<double>(bx);
  tf.crop_dy = static_cast<double>(by);
  tf.pad_px = pad_x;
  tf.pad_py = pad_y;
  tf.scale = static_cast<double>(s) / static_cast<double>(side);

  const TensorF fundus_f = to_chw_float(raw.fundus);
  const TensorF vessel_f = raw.has_vessel() ? to_chw_float(raw.vessel) : TensorF();

  CanonicalSample out;
  out.fundus = TensorF({3, s, s});
  out.vessel = TensorF({1, s, s});
  out.vessel_present = raw.has_vessel();
  // inverse-map every canonical pixel into the original image
  for (Index y = 0; y < s; ++y)
    for (Index x = 0; x < s; ++x) {
      const Eigen::Vector2d src =
          tf.to_original(Eigen::Vector2d(static_cast<double>(x), static_cast<double>(y)));
      const bool inside = src.x() >= tf.crop_dx - 0.5 && src.x() <= tf.crop_dx + bw - 0.5 &&
                          src.y() >= tf.crop_dy - 0.5 && src.y() <= tf.crop_dy + bh - 0.5;
      if (!inside) continue;  // zero padding
      for (Index c = 0; c < 3; ++c)
        out.fundus.at({c, y, x}) = sample_bilinear(fundus_f, c, src.y(), src.x());
      if (out.vessel_present)
        out.vessel.at({0, y, x}) =
            std::clamp(sample_bilinear(vessel_f, 0, src.y(), src.x()), 0.0f, 1.0f);
    }

  out.annotation = raw.annotation;
  out.transform = tf;
  out.fovea_canonical =
      tf.to_canonical(Eigen::Vector2d(raw.annotation.fovea_x, raw.annotation.fovea_y));
  out.mask = make_fovea_mask(out.fovea_canonical.x(), out.fovea_canonical.y(),
                             params.mask_radius, s);
  return out;
}

}  // namespace bifuser::imaging
