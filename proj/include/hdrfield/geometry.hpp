#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hdrfield/common.hpp"

namespace hdrfield {

// Pinhole camera with a rigid world->camera transform.
struct CameraModel {
  double focal = 1.0;              // pixels
  Vec2 principal = Vec2::Zero();   // pixels
  int width = 0;
  int height = 0;
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();

  Vec3 to_camera(const Vec3& p_world) const {
    return rotation * p_world + translation;
  }
  Vec3 to_world(const Vec3& p_camera) const {
    return rotation.transpose() * (p_camera - translation);
  }
  Vec3 center() const { return -rotation.transpose() * translation; }

  // Throws std::invalid_argument if the rotation is not orthonormal with
  // det +1 (to 1e-9), the focal length is not positive, or the principal
  // point lies outside the image.
  void validate() const;

  static CameraModel look_at(const Vec3& eye, const Vec3& target,
                             const Vec3& up, double focal,
                             const Vec2& principal, int width, int height);
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit length
  double z_near = 0.0;
  double z_far = 0.0;
};

enum class ExposureTag { kLow, kMid, kHigh };

std::string to_string(ExposureTag tag);
ExposureTag exposure_tag_from_string(const std::string& s);

struct FrameMeta {
  int frame_index = 0;  // consecutive from 0 within a bundle
  CameraModel camera;
  ExposureTag exposure_tag = ExposureTag::kMid;
  double exposure_scale = 1.0;  // ground truth only
  double time = 0.0;            // normalized to [0,1]
};

// One ray per pixel coordinate, passing through that (continuous) pixel
// position. Throws std::invalid_argument for out-of-bounds pixels.
std::vector<Ray> generate_rays(const CameraModel& camera,
                               std::span<const Vec2> pixels, double z_near,
                               double z_far);
Ray generate_ray(const CameraModel& camera, const Vec2& pixel, double z_near,
                 double z_far);

// Standard pinhole projection after the world->camera transform.
// Throws std::domain_error if the point is at or behind the camera plane.
Vec2 project(const CameraModel& camera, const Vec3& point_world);

// Projection plus its 2x3 Jacobian with respect to the world point.
Vec2 project_with_jacobian(const CameraModel& camera, const Vec3& point_world,
                           Eigen::Matrix<double, 2, 3>* jacobian);

// Depths are strictly increasing in [z_near, z_far]: midpoints of `count`
// equal bins, or one uniform draw per bin when stratified.
// Throws std::invalid_argument when count < 2.
std::vector<std::pair<double, Vec3>> sample_along_ray(const Ray& ray,
                                                      int count,
                                                      bool stratified,
                                                      std::uint64_t rng_seed);

// In-place variant used by the batched render path; `rng` must already be
// positioned in the caller's stream.
void sample_depths(const Ray& ray, int count, bool stratified,
                   std::mt19937_64& rng, double* z_out);

}  // namespace hdrfield
