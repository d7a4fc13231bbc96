#pragma once

#include <vector>

#include "bifuser/core/random.hpp"
#include "bifuser/imaging/types.hpp"

namespace bifuser::imaging {

/// Procedural fundus generator. Geometry follows the textbook anatomy: a
/// bright optic-disc blob, main vessel branches along a parabola opening away
/// from the disc, and the fovea as a darker blob on the parabola's symmetry
/// axis at `fovea_distance_factor` optic-disc diameters from the disc centre.
struct SyntheticConfig {
  Index size = 512;
  double od_radius_min = 18.0;
  double od_radius_max = 28.0;
  double fovea_distance_factor = 2.5;  // in optic-disc diameters
  double fovea_distance_jitter = 0.0;  // +/- pixels added to the distance
  double parabola_curv_min = 0.0015;
  double parabola_curv_max = 0.0045;
  Index vessel_branches = 6;   // secondary twigs off the main arcs
  double vessel_width = 3.0;
  double noise_std = 4.0;      // additive pixel noise, 8-bit scale

  void validate() const;

  /// Defaults above are tuned for a 512 px canvas; this scales the geometry
  /// to other sizes.
  static SyntheticConfig for_size(Index size) {
    SyntheticConfig cfg;
    const double f = static_cast<double>(size) / 512.0;
    cfg.size = size;
    cfg.od_radius_min = std::max(2.5, cfg.od_radius_min * f);
    cfg.od_radius_max = std::max(cfg.od_radius_min + 1.0, cfg.od_radius_max * f);
    cfg.parabola_curv_min /= f;
    cfg.parabola_curv_max /= f;
    cfg.vessel_width = std::max(1.5, cfg.vessel_width * f);
    return cfg;
  }
};

struct SyntheticSample {
  RawSample raw;
  Eigen::Vector2d od_center{0, 0};
  Eigen::Vector2d fovea{0, 0};
  double axis_y = 0.0;  // parabola symmetry axis
  std::vector<std::vector<Eigen::Vector2d>> vessel_paths;
};

SyntheticSample generate_synthetic(const SyntheticConfig& cfg, Rng& rng);

}  // namespace bifuser::imaging
