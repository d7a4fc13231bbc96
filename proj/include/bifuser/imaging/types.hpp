#pragma once

#include <Eigen/Core>
#include <optional>

#include "bifuser/imaging/image.hpp"

namespace bifuser::imaging {

/// Ground-truth fovea position and optic-disc radius, both in pixels of the
/// original image resolution.
struct FoveaAnnotation {
  double fovea_x = 0.0;
  double fovea_y = 0.0;
  double od_radius_px = 0.0;
  Index original_width = 0;
  Index original_height = 0;
};

/// A dataset sample before preprocessing. The vessel map is optional; it is
/// produced upstream by a separate segmentation model (or by the synthetic
/// generator) and enters here as a plain input channel.
struct RawSample {
  ImageU8 fundus;          // HxWx3
  ImageU8 vessel;          // HxWx1, may be empty
  FoveaAnnotation annotation;

  bool has_vessel() const { return !vessel.empty(); }
};

/// Affine bridge between original and canonical pixel coordinates:
/// crop -> pad -> uniform scale, with half-pixel-centre alignment so the
/// round trip is exact up to floating point.
struct CoordTransform {
  double crop_dx = 0.0, crop_dy = 0.0;  // content crop offset in the original
  double pad_px = 0.0, pad_py = 0.0;    // symmetric padding applied after crop
  double scale = 1.0;                   // canonical / padded size ratio

  Eigen::Vector2d to_canonical(const Eigen::Vector2d& p) const {
    return ((p - Eigen::Vector2d(crop_dx, crop_dy) + Eigen::Vector2d(pad_px, pad_py)).array() +
            0.5) *
               scale -
           0.5;
  }
  Eigen::Vector2d to_original(const Eigen::Vector2d& p) const {
    return ((p.array() + 0.5) / scale - 0.5).matrix() - Eigen::Vector2d(pad_px, pad_py) +
           Eigen::Vector2d(crop_dx, crop_dy);
  }
};

/// Preprocessed sample at the canonical square resolution.
struct CanonicalSample {
  TensorF fundus;  // {3,S,S} in [0,1]
  TensorF vessel;  // {1,S,S} in [0,1]; zeros when the raw sample had none
  TensorF mask;    // {1,S,S} binary target
  CoordTransform transform;
  FoveaAnnotation annotation;          // original-resolution facts
  Eigen::Vector2d fovea_canonical{0, 0};  // kept in sync by augmentation
  bool vessel_present = false;

  Index size() const { return fundus.dim(-1); }
};

}  // namespace bifuser::imaging
