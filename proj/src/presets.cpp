#include "hdrfield/presets.hpp"

namespace hdrfield {

SceneSpec blinker_scene() {
  SceneSpec s;
  s.name = "blinker";
  s.width = 64;
  s.height = 64;
  s.num_frames = 30;
  s.focal = 60.0;
  s.principal = Vec2(32.0, 32.0);
  s.z_near = 3.0;
  s.z_far = 10.5;
  s.eye_from = Vec3(-0.5, 0.0, -3.0);
  s.eye_to = Vec3(0.5, 0.0, -3.0);
  s.look_target = Vec3(0.0, 0.0, 3.5);
  s.schedule.cycle = {ExposureTag::kMid, ExposureTag::kLow, ExposureTag::kHigh};
  s.schedule.scale_low = 0.25;
  s.schedule.scale_mid = 1.0;
  s.schedule.scale_high = 4.0;
  s.crf_gamma = 2.2;
  // Bright emitter: saturated at mid and high, recoverable from low.
  s.spheres.push_back({Vec3(-1.15, 0.70, 4.0), 0.80, Vec3(3.5, 3.1, 2.7)});
  // Dark emitter: underexposed at mid (LDR < 0.12), well exposed at high.
  s.spheres.push_back({Vec3(1.15, 0.75, 3.4), 0.65, Vec3(0.006, 0.005, 0.0045)});
  // Mid-range emitters tiling the response curve's input domain across the
  // three exposure scales.
  s.spheres.push_back({Vec3(0.00, 1.15, 3.8), 0.45, Vec3(0.02, 0.022, 0.018)});
  s.spheres.push_back({Vec3(-0.55, -0.05, 3.5), 0.40, Vec3(0.06, 0.09, 0.12)});
  s.spheres.push_back({Vec3(0.55, 0.05, 4.1), 0.45, Vec3(0.18, 0.14, 0.10)});
  s.spheres.push_back({Vec3(1.50, -0.15, 4.3), 0.50, Vec3(0.40, 0.30, 0.55)});
  s.spheres.push_back({Vec3(-1.60, -0.20, 3.2), 0.40, Vec3(0.90, 0.70, 1.10)});
  s.spheres.push_back({Vec3(0.05, -1.25, 4.2), 0.50, Vec3(1.80, 1.50, 1.20)});
  // Emissive backdrop closing the frustum.
  s.planes.push_back({2, 4.5, Vec3(0.05, 0.055, 0.06), std::nullopt, Vec2::Zero()});
  // A calibration-chart row of emissive chips just in front of the backdrop;
  // their exposure-scaled radiances tile the response curve's input domain.
  const double chip_radiance[11] = {0.004, 0.01, 0.03,  0.08, 0.30, 0.50,
                                    0.65,  0.80, 0.95, 1.30, 2.60};
  for (int i = 0; i < 11; ++i) {
    PlanePrim chip;
    chip.axis = 2;
    chip.offset = 4.49;
    const double r = chip_radiance[i];
    chip.radiance = Vec3(r, r * 1.06, r * 0.94);
    chip.half_extent = Vec2(0.26, 0.30);
    chip.extent_center = Vec2(-3.0 + 0.6 * i, i % 2 == 0 ? 1.85 : 2.55);
    s.planes.push_back(chip);
  }
  s.dynamic_sphere = {Vec3(-1.45, -0.70, 2.7), 0.50, Vec3(0.9, 0.5, 0.3)};
  s.dynamic_velocity = Vec3(0.10, 0.0138, 0.0);
  s.background_radiance = Vec3(0.05, 0.055, 0.06);
  return s;
}

SceneSpec flare_scene() {
  SceneSpec s = blinker_scene();
  s.name = "flare";
  // One dominant emitter that saturates mid and high almost everywhere it
  // covers; only every third (low) frame observes it unsaturated.
  s.spheres.clear();
  s.spheres.push_back({Vec3(-0.4, 0.55, 4.0), 1.35, Vec3(3.6, 3.4, 3.2)});
  s.spheres.push_back({Vec3(1.55, -0.6, 3.4), 0.55, Vec3(0.012, 0.010, 0.009)});
  s.planes[0].radiance = Vec3(0.02, 0.022, 0.025);
  s.background_radiance = s.planes[0].radiance;
  s.dynamic_sphere = {Vec3(-1.35, -0.75, 2.8), 0.45, Vec3(0.75, 0.45, 0.28)};
  s.dynamic_velocity = Vec3(0.092, 0.012, 0.0);
  return s;
}

SceneSpec mini_scene() {
  SceneSpec s;
  s.name = "mini";
  s.width = 16;
  s.height = 16;
  s.num_frames = 6;
  s.focal = 15.0;
  s.principal = Vec2(8.0, 8.0);
  s.z_near = 3.0;
  s.z_far = 10.5;
  s.eye_from = Vec3(-0.3, 0.0, -3.0);
  s.eye_to = Vec3(0.3, 0.0, -3.0);
  s.look_target = Vec3(0.0, 0.0, 3.5);
  s.schedule.cycle = {ExposureTag::kMid, ExposureTag::kLow, ExposureTag::kHigh};
  s.crf_gamma = 2.2;
  s.spheres.push_back({Vec3(-0.9, 0.6, 4.0), 0.75, Vec3(3.2, 2.9, 2.6)});
  s.spheres.push_back({Vec3(1.0, 0.7, 3.4), 0.6, Vec3(0.007, 0.006, 0.005)});
  s.planes.push_back({2, 4.5, Vec3(0.05, 0.055, 0.06), std::nullopt, Vec2::Zero()});
  s.dynamic_sphere = {Vec3(-0.7, -0.55, 2.8), 0.45, Vec3(0.9, 0.5, 0.3)};
  s.dynamic_velocity = Vec3(0.22, 0.03, 0.0);
  s.background_radiance = Vec3(0.05, 0.055, 0.06);
  return s;
}

SceneSpec preset_scene(const std::string& name) {
  if (name == "blinker") return blinker_scene();
  if (name == "flare") return flare_scene();
  if (name == "mini") return mini_scene();
  throw std::invalid_argument("unknown preset scene: " + name);
}

}  // namespace hdrfield
