#include "bifuser/imaging/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace bifuser::imaging {

namespace {

struct Canvas {
  ImageU8* fundus;
  ImageU8* vessel;
};

void stamp_disc(ImageU8& img, const Eigen::Vector2d& center, double radius,
                const std::array<double, 3>& color, double alpha) {
  const Index y_lo = std::max<Index>(0, static_cast<Index>(std::floor(center.y() - radius)));
  const Index y_hi =
      std::min<Index>(img.height - 1, static_cast<Index>(std::ceil(center.y() + radius)));
  const Index x_lo = std::max<Index>(0, static_cast<Index>(std::floor(center.x() - radius)));
  const Index x_hi =
      std::min<Index>(img.width - 1, static_cast<Index>(std::ceil(center.x() + radius)));
  const double r2 = radius * radius;
  for (Index y = y_lo; y <= y_hi; ++y)
    for (Index x = x_lo; x <= x_hi; ++x) {
      const double d2 = (x - center.x()) * (x - center.x()) + (y - center.y()) * (y - center.y());
      if (d2 > r2) continue;
      for (Index c = 0; c < img.channels; ++c) {
        const double src = img.at(y, x, c);
        const double dst = src * (1.0 - alpha) + color[static_cast<std::size_t>(c)] * alpha;
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(dst, 0.0, 255.0));
      }
    }
}

void stroke_path(Canvas canvas, const std::vector<Eigen::Vector2d>& path, double width,
                 const std::array<double, 3>& color) {
  for (const auto& p : path) {
    stamp_disc(*canvas.fundus, p, width / 2.0, color, 0.85);
    stamp_disc(*canvas.vessel, p, width / 2.0, {255.0, 255.0, 255.0}, 1.0);
  }
}

/// Parabola arc with vertex at the optic disc, axis y = od.y, opening toward
/// `dir`; parameterised by the vertical offset t.
std::vector<Eigen::Vector2d> parabola_path(const Eigen::Vector2d& od, double dir, double curv,
                                           double t0, double t1, double step = 0.5) {
  std::vector<Eigen::Vector2d> path;
  const double lo = std::min(t0, t1), hi = std::max(t0, t1);
  for (double t = lo; t <= hi; t += step)
    path.emplace_back(od.x() + dir * curv * t * t, od.y() + t);
  return path;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (size < 64) throw ConfigInfeasible("canvas size must be at least 64");
  if (od_radius_min <= 0 || od_radius_max < od_radius_min)
    throw ConfigInfeasible("optic-disc radius range is empty");
  if (fovea_distance_factor <= 0) throw ConfigInfeasible("fovea distance factor must be positive");
  if (parabola_curv_min <= 0 || parabola_curv_max < parabola_curv_min)
    throw ConfigInfeasible("parabola curvature range is empty");
  if (vessel_width <= 0) throw ConfigInfeasible("vessel width must be positive");
  if (fovea_distance_jitter < 0) throw ConfigInfeasible("distance jitter must be non-negative");
}

SyntheticSample generate_synthetic(const SyntheticConfig& cfg, Rng& rng) {
  cfg.validate();
  const Index l = cfg.size;
  const Eigen::Vector2d rc(l / 2.0, l / 2.0);
  const double retina_r = 0.47 * l;

  const double od_r = rng.uniform(cfg.od_radius_min, cfg.od_radius_max);
  const double dist_nominal = cfg.fovea_distance_factor * 2.0 * od_r;
  const double dist =
      dist_nominal + (cfg.fovea_distance_jitter > 0
                          ? rng.uniform(-cfg.fovea_distance_jitter, cfg.fovea_distance_jitter)
                          : 0.0);

  // place the disc on a horizontal band through the retina; the band draw
  // may land too narrow, so retry a few times before declaring the config
  // infeasible
  double od_y = 0.0, half_w = 0.0, dir = 0.0, lo = 1.0, hi = 0.0;
  for (int attempt = 0; attempt < 16 && lo > hi; ++attempt) {
    od_y = rc.y() + rng.uniform(-0.10, 0.10) * l;
    half_w =
        std::sqrt(std::max(retina_r * retina_r - (od_y - rc.y()) * (od_y - rc.y()), 0.0));
    dir = rng.bernoulli(0.5) ? 1.0 : -1.0;
    auto od_x_interval = [&](double d, double direction) -> std::pair<double, double> {
      const double od_lo = rc.x() - half_w + 1.6 * od_r;
      const double od_hi = rc.x() + half_w - 1.6 * od_r;
      const double fov_lo = rc.x() - 0.80 * half_w;
      const double fov_hi = rc.x() + 0.80 * half_w;
      // fovea_x = od_x + direction * d
      const double a = std::max(od_lo, (direction > 0 ? fov_lo - d : fov_lo + d));
      const double b = std::min(od_hi, (direction > 0 ? fov_hi - d : fov_hi + d));
      return {a, b};
    };
    std::tie(lo, hi) = od_x_interval(dist, dir);
    if (lo > hi) {
      dir = -dir;
      std::tie(lo, hi) = od_x_interval(dist, dir);
    }
  }
  if (lo > hi)
    throw ConfigInfeasible("fovea at " + std::to_string(dist) +
                           " px from the optic disc cannot fit inside the retina");
  const Eigen::Vector2d od(rng.uniform(lo, hi), od_y);
  const Eigen::Vector2d fovea(od.x() + dir * dist, od.y());

  SyntheticSample out;
  out.od_center = od;
  out.fovea = fovea;
  out.axis_y = od.y();

  ImageU8 fundus = ImageU8::create(l, l, 3);
  ImageU8 vessel = ImageU8::create(l, l, 1);
  Canvas canvas{&fundus, &vessel};

  // retina base with a mild vignette
  const double base_r = 170.0 + rng.uniform(-12.0, 12.0);
  const double base_g = 92.0 + rng.uniform(-8.0, 8.0);
  const double base_b = 60.0 + rng.uniform(-6.0, 6.0);
  for (Index y = 0; y < l; ++y)
    for (Index x = 0; x < l; ++x) {
      const double d = (Eigen::Vector2d(x, y) - rc).norm();
      if (d > retina_r) continue;
      const double fall = 1.0 - 0.25 * (d / retina_r) * (d / retina_r);
      fundus.at(y, x, 0) = static_cast<std::uint8_t>(base_r * fall);
      fundus.at(y, x, 1) = static_cast<std::uint8_t>(base_g * fall);
      fundus.at(y, x, 2) = static_cast<std::uint8_t>(base_b * fall);
    }

  // bright optic disc
  stamp_disc(fundus, od, od_r * 1.25, {215.0, 190.0, 140.0}, 0.35);
  stamp_disc(fundus, od, od_r, {235.0, 212.0, 160.0}, 0.85);

  // main vessel arcades: two nested parabolas sharing the symmetry axis
  const double curv = rng.uniform(cfg.parabola_curv_min, cfg.parabola_curv_max);
  const std::array<double, 2> curvs{curv, curv * rng.uniform(1.2, 1.5)};
  const std::array<double, 3> vessel_color{105.0, 34.0, 28.0};
  for (double c : curvs) {
    const double span = std::max(0.9 * half_w, 4.0);
    const double t_max = std::min(std::sqrt(span / c), 0.46 * static_cast<double>(l));
    auto path = parabola_path(od, dir, c, -t_max, t_max);
    out.vessel_paths.push_back(path);
    stroke_path(canvas, path, cfg.vessel_width, vessel_color);
  }

  // secondary twigs branching off the arcades
  for (Index b = 0; b < cfg.vessel_branches; ++b) {
    const auto& host = out.vessel_paths[static_cast<std::size_t>(b % 2)];
    if (host.size() < 8) continue;
    const std::size_t at =
        static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(host.size() - 3)));
    Eigen::Vector2d p = host[at];
    Eigen::Vector2d tangent = (host[at + 1] - host[at - 1]).normalized();
    const double ang = rng.uniform(25.0, 55.0) * (rng.bernoulli(0.5) ? 1.0 : -1.0) * M_PI / 180.0;
    Eigen::Vector2d d2(tangent.x() * std::cos(ang) - tangent.y() * std::sin(ang),
                       tangent.x() * std::sin(ang) + tangent.y() * std::cos(ang));
    const double len = rng.uniform(0.05, 0.12) * l;
    std::vector<Eigen::Vector2d> twig;
    for (double t = 0; t <= len; t += 0.5) twig.push_back(p + d2 * t);
    out.vessel_paths.push_back(twig);
    stroke_path(canvas, twig, cfg.vessel_width * 0.6, vessel_color);
  }

  // darker macula around the fovea centre
  const double sigma = 0.8 * od_r;
  const Index span = static_cast<Index>(std::ceil(3.0 * sigma));
  for (Index y = std::max<Index>(0, static_cast<Index>(fovea.y()) - span);
       y <= std::min<Index>(l - 1, static_cast<Index>(fovea.y()) + span); ++y)
    for (Index x = std::max<Index>(0, static_cast<Index>(fovea.x()) - span);
         x <= std::min<Index>(l - 1, static_cast<Index>(fovea.x()) + span); ++x) {
      const double d2 = (Eigen::Vector2d(x, y) - fovea).squaredNorm();
      const double w = 0.5 * std::exp(-d2 / (2.0 * sigma * sigma));
      for (Index c = 0; c < 3; ++c)
        fundus.at(y, x, c) = static_cast<std::uint8_t>(fundus.at(y, x, c) * (1.0 - w));
    }

  // photometric noise on the retina disc; vessel map stays clean
  if (cfg.noise_std > 0) {
    for (Index y = 0; y < l; ++y)
      for (Index x = 0; x < l; ++x) {
        if ((Eigen::Vector2d(x, y) - rc).norm() > retina_r) continue;
        for (Index c = 0; c < 3; ++c) {
          const double v = fundus.at(y, x, c) + rng.normal(0.0, cfg.noise_std);
          fundus.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
      }
  }

  out.raw.fundus = std::move(fundus);
  out.raw.vessel = std::move(vessel);
  out.raw.annotation.fovea_x = fovea.x();
  out.raw.annotation.fovea_y = fovea.y();
  out.raw.annotation.od_radius_px = od_r;
  out.raw.annotation.original_width = l;
  out.raw.annotation.original_height = l;
  return out;
}

}  // namespace bifuser::imaging
