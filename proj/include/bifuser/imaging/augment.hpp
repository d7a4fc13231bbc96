#pragma once

#include <Eigen/Geometry>

#include "bifuser/core/random.hpp"
#include "bifuser/imaging/types.hpp"

namespace bifuser::imaging {

struct AugmentParams {
  double flip_prob = 0.5;
  double rotation_deg = 15.0;      // drawn uniformly from +/- this
  double scale_jitter = 0.1;       // scale in [1-j, 1+j]
  double brightness_jitter = 0.1;  // fundus only
  double contrast_jitter = 0.1;    // fundus only

  static AugmentParams none() { return {0.0, 0.0, 0.0, 0.0, 0.0}; }
};

/// One geometric transform is drawn per call and applied identically to
/// fundus, vessel, mask and the annotation coordinates. Photometric jitter
/// touches the fundus only; the mask is resampled nearest-neighbour so it
/// stays binary.
CanonicalSample augment(const CanonicalSample& sample, const AugmentParams& params, Rng& rng);

/// The affine map (canonical -> canonical) used by `augment`, exposed for
/// tests: rotation by `deg` about the image centre, uniform `scale`, optional
/// horizontal flip.
Eigen::Affine2d augment_affine(Index size, bool flip, double deg, double scale);

}  // namespace bifuser::imaging
