#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "hdrfield/presets.hpp"

using namespace hdrfield;

namespace {
// A camera staring straight down +z from the origin.
SceneSpec staring_spec() {
  SceneSpec s;
  s.width = 16;
  s.height = 16;
  s.num_frames = 3;
  s.focal = 16.0;
  s.principal = Vec2(8.0, 8.0);
  s.z_near = 1.0;
  s.z_far = 12.0;
  s.eye_from = s.eye_to = Vec3(0, 0, 0);
  s.look_target = Vec3(0, 0, 5);
  s.dynamic_sphere = {Vec3(0, 0, 20), 0.1, Vec3(0.2, 0.2, 0.2)};  // off view
  s.dynamic_velocity = Vec3::Zero();
  return s;
}
}  // namespace

TEST_CASE("oracle render: plane fills the view at its radiance and distance") {
  SceneSpec s = staring_spec();
  s.planes.push_back({2, 6.0, Vec3(5, 5, 5), std::nullopt, Vec2::Zero()});
  const OracleRender r = oracle_render_camera(s, s.camera(0), 0.0);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      CHECK(r.hdr.rgb(x, y) == Vec3(5, 5, 5));
    }
  }
  // The central pixel's hit distance is the axial distance to the plane.
  const Ray center = generate_ray(s.camera(0), Vec2(7.5, 7.5), 1.0, 12.0);
  CHECK(r.depth.at(7, 7, 0) ==
        doctest::Approx(6.0 / center.direction.z()).epsilon(1e-9));
}

TEST_CASE("oracle render: on-axis sphere depth is minimal at center, symmetric") {
  SceneSpec s = staring_spec();
  s.spheres.push_back({Vec3(0, 0, 6), 1.5, Vec3(1, 1, 1)});
  const OracleRender r = oracle_render_camera(s, s.camera(0), 0.0);
  const double center =
      0.25 * (r.depth.at(7, 7, 0) + r.depth.at(8, 7, 0) + r.depth.at(7, 8, 0) +
              r.depth.at(8, 8, 0));
  CHECK(center < r.depth.at(4, 7, 0));
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      CHECK(r.depth.at(x, y, 0) ==
            doctest::Approx(r.depth.at(15 - x, y, 0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("sphere intersection agrees with the quadratic formula by hand") {
  SceneSpec s = staring_spec();
  const Vec3 center(0.4, -0.2, 6.0);
  const double radius = 1.1;
  s.spheres.push_back({center, radius, Vec3(1, 1, 1)});
  const Vec3 dir = Vec3(0.12, 0.05, 1.0).normalized();
  const TraceHit hit = trace_scene(s, Vec3::Zero(), dir, 0.0);
  REQUIRE(hit.hit);
  // By hand: t^2 - 2 t (d.c) + |c|^2 - r^2 = 0.
  const double b = dir.dot(center);
  const double disc = b * b - center.squaredNorm() + radius * radius;
  const double expected = b - std::sqrt(disc);
  CHECK(hit.distance == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("oracle flow: static scene with a static camera is zero") {
  SceneSpec s = staring_spec();
  s.planes.push_back({2, 6.0, Vec3(1, 1, 1), std::nullopt, Vec2::Zero()});
  const OracleFlow f = oracle_flow(s, 0, 1);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      CHECK(f.validity.at(x, y, 0) == 1.0);
      CHECK(std::abs(f.flow.at(x, y, 0)) < 1e-12);
      CHECK(std::abs(f.flow.at(x, y, 1)) < 1e-12);
    }
  }
  CHECK_THROWS_AS(oracle_flow(s, 0, 5), std::invalid_argument);
}

TEST_CASE("oracle flow: fronto-parallel motion gives f*dx/z pixels") {
  SceneSpec s = staring_spec();
  s.planes.push_back({2, 9.0, Vec3(0.5, 0.5, 0.5), std::nullopt, Vec2::Zero()});
  s.dynamic_sphere = {Vec3(0, 0, 6), 1.2, Vec3(1, 1, 1)};
  s.dynamic_velocity = Vec3(0.08, 0.0, 0.0);
  const OracleFlow f = oracle_flow(s, 0, 1);
  // The central pixel hits the sphere's front pole at z = 6 - 1.2 = 4.8;
  // a point at depth z moving dx sideways flows f*dx/z pixels.
  const Ray center = generate_ray(s.camera(0), Vec2(8.5, 8.5), 1.0, 12.0);
  const TraceHit hit = trace_scene(s, Vec3::Zero(), center.direction, 0.0);
  REQUIRE(hit.dynamic);
  const double z = (hit.distance * center.direction).z();
  const double expected = s.focal * 0.08 / z;
  CHECK(f.flow.at(8, 8, 0) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(std::abs(f.flow.at(8, 8, 1)) < 1e-9);
}

TEST_CASE("oracle flow: advected point occluded at j is marked invalid") {
  SceneSpec s = staring_spec();
  s.planes.push_back({2, 9.0, Vec3(0.5, 0.5, 0.5), std::nullopt, Vec2::Zero()});
  // Occluder in front; the dynamic sphere slides behind it.
  s.spheres.push_back({Vec3(1.2, 0.0, 4.0), 0.6, Vec3(1, 1, 1)});
  s.dynamic_sphere = {Vec3(-0.3, 0.0, 6.5), 0.5, Vec3(2, 2, 2)};
  s.dynamic_velocity = Vec3(2.1, 0.0, 0.0);
  const OracleFlow f = oracle_flow(s, 0, 1);
  const Vec2 p = project(s.camera(0), s.dynamic_sphere.center);
  const int cx = static_cast<int>(p.x()), cy = static_cast<int>(p.y());
  CHECK(f.validity.at(cx, cy, 0) == 0.0);
}

TEST_CASE("dataset LDR obeys clamp(g_gt(scale * E)) exactly") {
  SceneSpec s = mini_scene();
  s.planes[0].radiance = Vec3(0.5, 0.5, 0.5);
  s.background_radiance = s.planes[0].radiance;
  const DatasetBundle bundle = generate_dataset(s);
  const double inv_gamma = 1.0 / s.crf_gamma;
  for (std::size_t f = 0; f < bundle.frames.size(); ++f) {
    const double scale = bundle.frames[f].exposure_scale;
    for (std::size_t i = 0; i < bundle.ldr[f].data.size(); ++i) {
      const double expect = std::pow(
          std::clamp(scale * bundle.hdr[f].data[i], 0.0, 1.0), inv_gamma);
      CHECK(bundle.ldr[f].data[i] == expect);
    }
  }
  // Spot values on a backdrop pixel (E = 0.5): low exposure gives
  // 0.125^(1/2.2), high exposure saturates to 1.
  int px = -1, py = -1;
  for (int y = 0; y < s.height && px < 0; ++y) {
    for (int x = 0; x < s.width && px < 0; ++x) {
      if (bundle.hdr[1].at(x, y, 0) == 0.5) {
        px = x;
        py = y;
      }
    }
  }
  REQUIRE(px >= 0);
  CHECK(bundle.frames[1].exposure_tag == ExposureTag::kLow);
  CHECK(bundle.ldr[1].at(px, py, 0) ==
        doctest::Approx(std::pow(0.125, 1.0 / 2.2)).epsilon(1e-12));
  CHECK(bundle.frames[2].exposure_tag == ExposureTag::kHigh);
  CHECK(bundle.ldr[2].at(px, py, 0) == 1.0);
}

TEST_CASE("unsaturated LDR round-trips to the exact HDR radiance") {
  const DatasetBundle bundle = generate_dataset(mini_scene());
  for (std::size_t f = 0; f < bundle.frames.size(); ++f) {
    const double scale = bundle.frames[f].exposure_scale;
    for (std::size_t i = 0; i < bundle.ldr[f].data.size(); ++i) {
      if (scale * bundle.hdr[f].data[i] >= 0.999) continue;
      const double recovered =
          std::pow(bundle.ldr[f].data[i], bundle.spec.crf_gamma) / scale;
      CHECK(std::abs(recovered - bundle.hdr[f].data[i]) < 1e-9);
    }
  }
}

TEST_CASE("flow cycle: i->j then j->i returns to the start analytically") {
  const SceneSpec s = blinker_scene();
  const OracleFlow fwd = oracle_flow(s, 3, 4);
  const CameraModel cam_j = s.camera(4);
  const Vec3 origin_j = cam_j.center();
  int checked = 0;
  for (int y = 1; y < s.height; y += 5) {
    for (int x = 1; x < s.width; x += 5) {
      if (fwd.validity.at(x, y, 0) == 0.0) continue;
      const Vec2 p_i(x + 0.5, y + 0.5);
      const Vec2 p_j = p_i + Vec2(fwd.flow.at(x, y, 0), fwd.flow.at(x, y, 1));
      // Independent reverse correspondence evaluated at the exact point p_j.
      const Ray ray_j = generate_ray(cam_j, p_j, s.z_near, s.z_far);
      const TraceHit hit_j = trace_scene(s, origin_j, ray_j.direction, 4.0);
      REQUIRE(hit_j.hit);
      Vec3 point = origin_j + hit_j.distance * ray_j.direction;
      if (hit_j.dynamic) point -= s.dynamic_velocity;
      const Vec2 back = project(s.camera(3), point);
      CHECK((back - p_i).norm() < 1e-6);
      ++checked;
    }
  }
  CHECK(checked > 10);
}

TEST_CASE("scene validation enforces the alternating-exposure premise") {
  SceneSpec good = blinker_scene();
  good.validate();

  SceneSpec saturated = blinker_scene();
  saturated.spheres[0].radiance = Vec3(8.0, 8.0, 8.0);  // 8*0.25 = 2 > 1
  CHECK_THROWS_AS(saturated.validate(), std::invalid_argument);

  SceneSpec flat = blinker_scene();
  for (auto& sp : flat.spheres) sp.radiance = Vec3(0.1, 0.1, 0.1);
  for (auto& pl : flat.planes) pl.radiance = Vec3(0.1, 0.1, 0.1);
  flat.background_radiance = Vec3(0.1, 0.1, 0.1);
  flat.dynamic_sphere.radiance = Vec3(0.9, 0.9, 0.9);
  flat.spheres[0].radiance = Vec3(3.0, 3.0, 3.0);  // span 30 < 100
  CHECK_THROWS_AS(flat.validate(), std::invalid_argument);

  SceneSpec escape = blinker_scene();
  escape.dynamic_velocity = Vec3(0.5, 0.0, 0.0);
  CHECK_THROWS_AS(escape.validate(), std::invalid_argument);
}

TEST_CASE("scene JSON round trip") {
  const SceneSpec s = blinker_scene();
  const std::string text = scene_to_json(s);
  const SceneSpec back = scene_from_json(text);
  CHECK(scene_to_json(back) == text);
  CHECK(back.num_frames == s.num_frames);
  CHECK(back.schedule.cycle.size() == 3);
  CHECK((back.dynamic_velocity - s.dynamic_velocity).norm() == 0.0);
}

TEST_CASE("write_dataset emits manifest plus readable frames") {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "hdrfield_ds").string();
  fs::remove_all(dir);
  const DatasetBundle bundle = generate_dataset(mini_scene());
  write_dataset(dir, bundle);
  CHECK(fs::exists(dir + "/manifest.json"));
  const Image hdr = read_pfm(dir + "/frame_0000_hdr.pfm");
  CHECK(hdr.width == bundle.spec.width);
  const Image ldr = read_ppm(dir + "/frame_0000_ldr.ppm");
  CHECK(ldr.channels == 3);
  fs::remove_all(dir);
}

TEST_CASE("even-frame subsets rewire times and flows consistently") {
  const SceneSpec s = mini_scene();
  const DatasetBundle bundle = generate_dataset(s, /*stride=*/2, /*offset=*/0);
  CHECK(bundle.frames.size() == 3);
  CHECK(bundle.frames[0].time == 0.0);
  CHECK(bundle.frames[1].time == doctest::Approx(2.0 / 5.0));
  CHECK(bundle.original_index(2) == 4);
  // The forward flow of bundle frame 0 spans two original frames.
  const OracleFlow direct = oracle_flow(s, 0, 2);
  for (int y = 0; y < s.height; y += 3) {
    for (int x = 0; x < s.width; x += 3) {
      CHECK(bundle.flow_forward[0].at(x, y, 0) == direct.flow.at(x, y, 0));
    }
  }
}

TEST_CASE("flow corruption adds seeded noise and dropout") {
  const SceneSpec s = mini_scene();
  FlowCorruption corruption;
  corruption.sigma_px = 1.0;
  corruption.dropout = 0.2;
  corruption.seed = 5;
  const DatasetBundle clean = generate_dataset(s);
  const DatasetBundle noisy = generate_dataset(s, 1, 0, &corruption);
  const DatasetBundle noisy2 = generate_dataset(s, 1, 0, &corruption);
  int dropped = 0, changed = 0;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (clean.flow_forward_valid[0].at(x, y, 0) == 1.0 &&
          noisy.flow_forward_valid[0].at(x, y, 0) == 0.0) {
        ++dropped;
      }
      if (noisy.flow_forward[0].at(x, y, 0) !=
          clean.flow_forward[0].at(x, y, 0)) {
        ++changed;
      }
      CHECK(noisy.flow_forward[0].at(x, y, 0) ==
            noisy2.flow_forward[0].at(x, y, 0));
    }
  }
  CHECK(dropped > 0);
  CHECK(changed > 0);
  // Depth corruption is an affine map per frame.
  FlowCorruption depth_jitter;
  depth_jitter.depth_scale = 0.2;
  depth_jitter.depth_shift = 0.3;
  depth_jitter.seed = 6;
  const DatasetBundle jittered = generate_dataset(s, 1, 0, &depth_jitter);
  const double a01 = jittered.depth[0].at(0, 0, 0) / clean.depth[0].at(0, 0, 0);
  (void)a01;
  CHECK(jittered.depth[0].at(3, 3, 0) != clean.depth[0].at(3, 3, 0));
}
