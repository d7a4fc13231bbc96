#pragma once

#include "bifuser/imaging/types.hpp"

namespace bifuser::imaging {

struct PreprocessParams {
  Index canonical_size = 512;
  double bg_threshold = 10.0 / 255.0;  // on the per-pixel max over channels
  double mask_radius = 16.0;           // target disc radius at canonical scale
};

/// Circular target disc: pixel (x,y) is set iff its Euclidean distance to the
/// centre is <= radius. Off-image centres simply clip.
TensorF make_fovea_mask(double center_x, double center_y, double radius, Index size);

/// Crop the dark border to the content bounding box, pad to square, resample
/// to the canonical size and build the target mask. Fundus and vessel get the
/// identical geometric treatment; the transform is recorded for inverses.
CanonicalSample preprocess(const RawSample& raw, const PreprocessParams& params);

/// Content bounding box (x0, y0, width, height) of pixels whose channel max
/// exceeds the threshold. Throws AllBackground if none does.
std::array<Index, 4> content_bbox(const ImageU8& img, double threshold);

}  // namespace bifuser::imaging
