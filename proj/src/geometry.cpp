#include "hdrfield/geometry.hpp"

#include <cmath>

namespace hdrfield {

namespace {
constexpr double kOrthonormalTol = 1e-9;
constexpr double kMinCameraZ = 1e-9;
}  // namespace

void CameraModel::validate() const {
  const Mat3 gram = rotation * rotation.transpose();
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > kOrthonormalTol ||
      std::abs(rotation.determinant() - 1.0) > kOrthonormalTol) {
    throw std::invalid_argument("camera rotation is not a proper rotation");
  }
  if (!(focal > 0.0)) {
    throw std::invalid_argument("camera focal length must be positive");
  }
  if (principal.x() < 0.0 || principal.x() > width || principal.y() < 0.0 ||
      principal.y() > height) {
    throw std::invalid_argument("principal point outside image bounds");
  }
}

CameraModel CameraModel::look_at(const Vec3& eye, const Vec3& target,
                                 const Vec3& up, double focal,
                                 const Vec2& principal, int width,
                                 int height) {
  // Camera frame: +z forward, +x right, +y down (image convention); reduces
  // to the identity pose for eye on the -z axis looking at +z with +y up.
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = up.cross(forward).normalized();
  const Vec3 down = forward.cross(right);
  CameraModel cam;
  cam.rotation.row(0) = right;
  cam.rotation.row(1) = down;
  cam.rotation.row(2) = forward;
  cam.translation = -cam.rotation * eye;
  cam.focal = focal;
  cam.principal = principal;
  cam.width = width;
  cam.height = height;
  return cam;
}

std::string to_string(ExposureTag tag) {
  switch (tag) {
    case ExposureTag::kLow:
      return "low";
    case ExposureTag::kMid:
      return "mid";
    case ExposureTag::kHigh:
      return "high";
  }
  return "mid";
}

ExposureTag exposure_tag_from_string(const std::string& s) {
  if (s == "low") return ExposureTag::kLow;
  if (s == "mid") return ExposureTag::kMid;
  if (s == "high") return ExposureTag::kHigh;
  throw std::invalid_argument("unknown exposure tag: " + s);
}

Ray generate_ray(const CameraModel& camera, const Vec2& pixel, double z_near,
                 double z_far) {
  if (pixel.x() < 0.0 || pixel.x() > camera.width || pixel.y() < 0.0 ||
      pixel.y() > camera.height) {
    throw std::invalid_argument("pixel outside image bounds");
  }
  if (!(z_near > 0.0 && z_near < z_far)) {
    throw std::invalid_argument("require 0 < z_near < z_far");
  }
  const Vec3 dir_camera((pixel.x() - camera.principal.x()) / camera.focal,
                        (pixel.y() - camera.principal.y()) / camera.focal,
                        1.0);
  Ray ray;
  ray.origin = camera.center();
  ray.direction = (camera.rotation.transpose() * dir_camera).normalized();
  ray.z_near = z_near;
  ray.z_far = z_far;
  return ray;
}

std::vector<Ray> generate_rays(const CameraModel& camera,
                               std::span<const Vec2> pixels, double z_near,
                               double z_far) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const Vec2& p : pixels) {
    rays.push_back(generate_ray(camera, p, z_near, z_far));
  }
  return rays;
}

Vec2 project(const CameraModel& camera, const Vec3& point_world) {
  return project_with_jacobian(camera, point_world, nullptr);
}

Vec2 project_with_jacobian(const CameraModel& camera, const Vec3& point_world,
                           Eigen::Matrix<double, 2, 3>* jacobian) {
  const Vec3 pc = camera.to_camera(point_world);
  if (pc.z() <= kMinCameraZ) {
    throw std::domain_error("degenerate projection: point at or behind camera");
  }
  const double inv_z = 1.0 / pc.z();
  Vec2 px(camera.focal * pc.x() * inv_z + camera.principal.x(),
          camera.focal * pc.y() * inv_z + camera.principal.y());
  if (jacobian != nullptr) {
    Eigen::Matrix<double, 2, 3> d_cam;
    d_cam << camera.focal * inv_z, 0.0, -camera.focal * pc.x() * inv_z * inv_z,
        0.0, camera.focal * inv_z, -camera.focal * pc.y() * inv_z * inv_z;
    *jacobian = d_cam * camera.rotation;
  }
  return px;
}

void sample_depths(const Ray& ray, int count, bool stratified,
                   std::mt19937_64& rng, double* z_out) {
  if (count < 2) {
    throw std::invalid_argument("sample count must be at least 2");
  }
  const double bin = (ray.z_far - ray.z_near) / count;
  if (stratified) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int k = 0; k < count; ++k) {
      z_out[k] = ray.z_near + (k + unit(rng)) * bin;
    }
  } else {
    for (int k = 0; k < count; ++k) {
      z_out[k] = ray.z_near + (k + 0.5) * bin;
    }
  }
}

std::vector<std::pair<double, Vec3>> sample_along_ray(const Ray& ray,
                                                      int count,
                                                      bool stratified,
                                                      std::uint64_t rng_seed) {
  std::vector<double> z(static_cast<std::size_t>(count < 2 ? 2 : count));
  std::mt19937_64 rng(rng_seed);
  sample_depths(ray, count, stratified, rng, z.data());
  std::vector<std::pair<double, Vec3>> samples;
  samples.reserve(count);
  for (int k = 0; k < count; ++k) {
    samples.emplace_back(z[k], ray.origin + z[k] * ray.direction);
  }
  return samples;
}

}  // namespace hdrfield
