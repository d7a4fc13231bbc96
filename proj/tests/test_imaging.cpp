#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "bifuser/imaging/augment.hpp"
#include "bifuser/imaging/manifest.hpp"
#include "bifuser/imaging/preprocess.hpp"
#include "bifuser/imaging/synthetic.hpp"

using namespace bifuser;
using namespace bifuser::imaging;
namespace fs = std::filesystem;

namespace {

RawSample solid_sample(Index w, Index h, std::uint8_t value, double fx, double fy, double r = 20) {
  RawSample s;
  s.fundus = ImageU8::create(w, h, 3, value);
  s.annotation = {fx, fy, r, w, h};
  return s;
}

/// Brute-force disc rasterisation, the oracle for make_fovea_mask.
Index brute_force_disc_count(double cx, double cy, double r, Index size) {
  Index count = 0;
  for (Index y = 0; y < size; ++y)
    for (Index x = 0; x < size; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r * r) ++count;
    }
  return count;
}

fs::path make_temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("bifuser_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("content bbox finds the bright region") {
  ImageU8 img = ImageU8::create(1440, 960, 3, 0);
  for (Index y = 0; y < 960; ++y)
    for (Index x = 240; x < 1200; ++x)
      for (Index c = 0; c < 3; ++c) img.at(y, x, c) = 120;
  const auto [bx, by, bw, bh] = content_bbox(img, 10.0 / 255.0);
  CHECK(bx == 240);
  CHECK(by == 0);
  CHECK(bw == 960);
  CHECK(bh == 960);
}

TEST_CASE("preprocess crops the black border and records the scale") {
  RawSample raw = solid_sample(1440, 960, 0, 700, 480);
  for (Index y = 0; y < 960; ++y)
    for (Index x = 240; x < 1200; ++x)
      for (Index c = 0; c < 3; ++c) raw.fundus.at(y, x, c) = 120;

  PreprocessParams params;
  auto canon = preprocess(raw, params);
  CHECK(canon.transform.crop_dx == doctest::Approx(240.0));
  CHECK(canon.transform.crop_dy == doctest::Approx(0.0));
  CHECK(canon.transform.pad_px == doctest::Approx(0.0));
  CHECK(canon.transform.scale == doctest::Approx(512.0 / 960.0));
  CHECK(canon.fundus.dim(1) == 512);

  // fovea at original (700, 480) maps into the crop at (460, 480)
  const auto p = canon.transform.to_canonical({700, 480});
  const auto back = canon.transform.to_original(p);
  CHECK(back.x() == doctest::Approx(700.0).epsilon(1e-9));
  CHECK(back.y() == doctest::Approx(480.0).epsilon(1e-9));
}

TEST_CASE("preprocess of an exactly-canonical image is the identity") {
  RawSample raw = solid_sample(512, 512, 100, 256, 128);
  PreprocessParams params;
  auto canon = preprocess(raw, params);
  CHECK(canon.transform.scale == doctest::Approx(1.0));
  CHECK(canon.transform.crop_dx == doctest::Approx(0.0));
  const auto p = canon.transform.to_canonical({100, 200});
  CHECK(p.x() == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(p.y() == doctest::Approx(200.0).epsilon(1e-12));
}

TEST_CASE("preprocess rejects all-black input") {
  RawSample raw = solid_sample(512, 512, 0, 10, 10);
  CHECK_THROWS_AS(preprocess(raw, PreprocessParams{}), AllBackground);
}

TEST_CASE("preprocess rejects mismatched vessel size") {
  RawSample raw = solid_sample(256, 256, 90, 10, 10);
  raw.vessel = ImageU8::create(128, 256, 1, 0);
  CHECK_THROWS_AS(preprocess(raw, PreprocessParams{}), MismatchedShapes);
}

TEST_CASE("coordinate round-trip stays under half a pixel") {
  Rng rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    CoordTransform tf;
    tf.crop_dx = rng.uniform(0, 500);
    tf.crop_dy = rng.uniform(0, 500);
    tf.pad_px = rng.uniform(0, 100);
    tf.pad_py = rng.uniform(0, 100);
    tf.scale = rng.uniform(0.1, 4.0);
    const Eigen::Vector2d p(rng.uniform(0, 2000), rng.uniform(0, 2000));
    const Eigen::Vector2d rt = tf.to_original(tf.to_canonical(p));
    CHECK((rt - p).norm() < 0.5);
  }
}

TEST_CASE("fovea mask: r=0 sets exactly one pixel") {
  auto mask = make_fovea_mask(256, 256, 0, 512);
  Index count = 0;
  for (Index i = 0; i < mask.size(); ++i) count += mask[i] > 0.5f;
  CHECK(count == 1);
  CHECK(mask.at({0, 256, 256}) == 1.0f);
}

TEST_CASE("fovea mask equals the brute-force lattice count") {
  auto mask = make_fovea_mask(256, 256, 16, 512);
  Index count = 0;
  for (Index i = 0; i < mask.size(); ++i) count += mask[i] > 0.5f;
  CHECK(count == brute_force_disc_count(256, 256, 16, 512));
  // roughly pi r^2
  CHECK(std::abs(static_cast<double>(count) - M_PI * 256.0) < 40.0);
}

TEST_CASE("fovea mask clips at the border") {
  auto mask = make_fovea_mask(0, 0, 16, 512);
  Index count = 0;
  for (Index i = 0; i < mask.size(); ++i) count += mask[i] > 0.5f;
  CHECK(count == brute_force_disc_count(0, 0, 16, 512));
}

TEST_CASE("fovea mask matches the oracle across centre/radius pairs") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const double cx = rng.uniform(-20, 148);
    const double cy = rng.uniform(-20, 148);
    const double r = rng.uniform(0, 40);
    auto mask = make_fovea_mask(cx, cy, r, 128);
    for (Index y = 0; y < 128; ++y)
      for (Index x = 0; x < 128; ++x) {
        const double dx = x - cx, dy = y - cy;
        const bool in = dx * dx + dy * dy <= r * r;
        REQUIRE(mask.at({0, y, x}) == (in ? 1.0f : 0.0f));
      }
  }
}

TEST_CASE("augment with zero ranges is the identity") {
  RawSample raw = solid_sample(128, 128, 90, 64, 50);
  PreprocessParams params;
  params.canonical_size = 128;
  params.mask_radius = 6;
  auto canon = preprocess(raw, params);
  Rng rng(5);
  auto aug = augment(canon, AugmentParams::none(), rng);
  CHECK(aug.fovea_canonical == canon.fovea_canonical);
  for (Index i = 0; i < canon.fundus.size(); ++i) REQUIRE(aug.fundus[i] == canon.fundus[i]);
  for (Index i = 0; i < canon.mask.size(); ++i) REQUIRE(aug.mask[i] == canon.mask[i]);
}

TEST_CASE("horizontal flip mirrors coordinates and mask") {
  RawSample raw = solid_sample(512, 512, 90, 100, 256);
  PreprocessParams params;
  auto canon = preprocess(raw, params);
  AugmentParams ap = AugmentParams::none();
  ap.flip_prob = 1.0;
  Rng rng(9);
  auto aug = augment(canon, ap, rng);
  CHECK(aug.fovea_canonical.x() == doctest::Approx(511.0 - 100.0));
  CHECK(aug.fovea_canonical.y() == doctest::Approx(256.0));
  for (Index y = 0; y < 512; ++y)
    for (Index x = 0; x < 512; ++x)
      REQUIRE(aug.mask.at({0, y, x}) == canon.mask.at({0, y, 511 - x}));
}

TEST_CASE("rotation moves the annotation with the rotation matrix") {
  RawSample raw = solid_sample(256, 256, 90, 100, 80);
  PreprocessParams params;
  params.canonical_size = 256;
  auto canon = preprocess(raw, params);

  const double theta = 10.0 * M_PI / 180.0;
  const Eigen::Affine2d fwd = augment_affine(256, false, 10.0, 1.0);
  const Eigen::Vector2d c(127.5, 127.5);
  const Eigen::Vector2d expect =
      Eigen::Rotation2Dd(theta) * (canon.fovea_canonical - c) + c;
  const Eigen::Vector2d got = fwd * canon.fovea_canonical;
  CHECK((got - expect).norm() < 1e-9);
}

TEST_CASE("augmented annotation stays inside the transformed mask") {
  RawSample raw = solid_sample(128, 128, 90, 70, 60);
  PreprocessParams params;
  params.canonical_size = 128;
  params.mask_radius = 6;
  auto canon = preprocess(raw, params);
  AugmentParams ap;  // defaults: flip + rotation + scale
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    auto aug = augment(canon, ap, rng);
    float mask_sum = 0;
    for (Index i = 0; i < aug.mask.size(); ++i) mask_sum += aug.mask[i];
    if (mask_sum == 0) continue;
    const Index x = static_cast<Index>(std::lround(aug.fovea_canonical.x()));
    const Index y = static_cast<Index>(std::lround(aug.fovea_canonical.y()));
    if (x < 0 || x >= 128 || y < 0 || y >= 128) continue;
    REQUIRE(aug.mask.at({0, y, x}) == 1.0f);
  }
}

TEST_CASE("synthetic generation is deterministic for a fixed seed") {
  auto cfg = SyntheticConfig::for_size(128);
  Rng rng_a(77), rng_b(77);
  auto a = generate_synthetic(cfg, rng_a);
  auto b = generate_synthetic(cfg, rng_b);
  REQUIRE(a.raw.fundus.pixels == b.raw.fundus.pixels);
  REQUIRE(a.raw.vessel.pixels == b.raw.vessel.pixels);
  CHECK(a.raw.annotation.fovea_x == b.raw.annotation.fovea_x);
}

TEST_CASE("fovea sits at the configured disc-diameter distance") {
  SyntheticConfig cfg;
  cfg.size = 512;
  cfg.od_radius_min = cfg.od_radius_max = 20.0;
  cfg.fovea_distance_jitter = 0.0;
  cfg.fovea_distance_factor = 2.5;
  Rng rng(31);
  auto s = generate_synthetic(cfg, rng);
  CHECK((s.fovea - s.od_center).norm() == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("fovea lies on the parabola symmetry axis") {
  auto cfg = SyntheticConfig::for_size(256);
  cfg.fovea_distance_jitter = 0.0;
  Rng rng(55);
  for (int i = 0; i < 100; ++i) {
    auto s = generate_synthetic(cfg, rng);
    CHECK(std::abs(s.fovea.y() - s.axis_y) < 1.0);
  }
}

TEST_CASE("vessel support is contained in the dilated stroke paths") {
  auto cfg = SyntheticConfig::for_size(128);
  cfg.vessel_width = 3.0;
  Rng rng(99);
  auto s = generate_synthetic(cfg, rng);
  const double limit = cfg.vessel_width / 2.0 + 0.75;
  for (Index y = 0; y < 128; ++y)
    for (Index x = 0; x < 128; ++x) {
      if (s.raw.vessel.at(y, x, 0) == 0) continue;
      double best = 1e9;
      for (const auto& path : s.vessel_paths)
        for (const auto& p : path)
          best = std::min(best, (p - Eigen::Vector2d(x, y)).norm());
      REQUIRE(best <= limit);
    }
}

TEST_CASE("infeasible fovea placement is rejected") {
  auto cfg = SyntheticConfig::for_size(128);
  cfg.od_radius_min = cfg.od_radius_max = 30.0;
  cfg.fovea_distance_factor = 10.0;  // 600 px inside a 128 px retina
  Rng rng(1);
  CHECK_THROWS_AS(generate_synthetic(cfg, rng), ConfigInfeasible);
}

TEST_CASE("manifest loading, validation and default split") {
  auto dir = make_temp_dir("manifest");
  auto cfg = SyntheticConfig::for_size(96);
  Rng rng(7);
  std::vector<ManifestRow> rows;
  for (int i = 0; i < 10; ++i) {
    auto s = generate_synthetic(cfg, rng);
    const std::string img = (dir / ("img" + std::to_string(i) + ".png")).string();
    const std::string ves = (dir / ("ves" + std::to_string(i) + ".png")).string();
    write_png(img, s.raw.fundus);
    write_png(ves, s.raw.vessel);
    ManifestRow r;
    r.image_path = "img" + std::to_string(i) + ".png";
    r.vessel_path = "ves" + std::to_string(i) + ".png";
    r.fovea_x = s.raw.annotation.fovea_x;
    r.fovea_y = s.raw.annotation.fovea_y;
    r.od_radius_px = s.raw.annotation.od_radius_px;
    rows.push_back(r);
  }
  const std::string manifest = (dir / "manifest.csv").string();
  write_manifest(manifest, rows);

  auto ds = load_manifest(manifest);
  REQUIRE(ds.size() == 10);
  CHECK(ds.split_indices("train").size() == 8);
  CHECK(ds.split_indices("test").size() == 2);
  // stability across loads
  auto ds2 = load_manifest(manifest);
  CHECK(ds.split_indices("test") == ds2.split_indices("test"));

  auto raw = ds.load(0);
  CHECK(raw.fundus.width == 96);
  CHECK(raw.has_vessel());

  SUBCASE("missing image file names the row") {
    rows[3].image_path = "nope.png";
    write_manifest(manifest, rows);
    try {
      load_manifest(manifest);
      FAIL("expected MissingFile");
    } catch (const MissingFile& e) {
      CHECK(std::string(e.what()).find("row 4") != std::string::npos);
    }
  }

  SUBCASE("fovea coordinate equal to the width is rejected") {
    rows[3].image_path = "img3.png";
    rows[3].fovea_x = 96;  // == W, out of range
    write_manifest(manifest, rows);
    CHECK_THROWS_AS(load_manifest(manifest), BadRow);
  }

  SUBCASE("missing od_radius is rejected") {
    std::ofstream out(manifest);
    out << "image_path,vessel_path,fovea_x,fovea_y,od_radius_px,split\n";
    out << "img0.png,ves0.png,40,40,,train\n";
    out.close();
    CHECK_THROWS_AS(load_manifest(manifest), BadRow);
  }

  fs::remove_all(dir);
}

TEST_CASE("png round trip and size probe") {
  auto dir = make_temp_dir("png");
  ImageU8 img = ImageU8::create(33, 21, 3);
  Rng rng(3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  const std::string path = (dir / "roundtrip.png").string();
  write_png(path, img);
  auto back = read_image(path);
  REQUIRE(back.width == 33);
  REQUIRE(back.height == 21);
  REQUIRE(back.pixels == img.pixels);
  const auto [w, h] = probe_image_size(path);
  CHECK(w == 33);
  CHECK(h == 21);
  fs::remove_all(dir);
}
