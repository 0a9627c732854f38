#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace hdrfield {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Shift applied inside the output activation of radiance/density heads so
// that a zero-initialized head emits (numerically) zero. softplus(-25) is
// ~1.4e-11, below every tolerance used in this project.
inline constexpr double kOutputShift = 25.0;

inline double softplus(double z) {
  return z > 30.0 ? z : std::log1p(std::exp(z));
}

// Inverse of softplus, valid for y > 0.
inline double softplus_inv(double y) { return std::log(std::expm1(y)); }

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                  : std::exp(z) / (1.0 + std::exp(z));
}

inline double sq(double x) { return x * x; }

// Stateless mixing of a seed with a stream index; used to derive
// independent deterministic RNG streams from one master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// FNV-1a; used for config hashes that must be stable across runs/platforms.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 0xCBF29CE484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace hdrfield
