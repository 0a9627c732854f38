#pragma once

#include "hdrfield/fields.hpp"
#include "hdrfield/geometry.hpp"
#include "hdrfield/image.hpp"

namespace hdrfield {

struct CompositeWeights {
  Eigen::ArrayXd alpha;          // 1 - exp(-sigma_k * dz_k)
  Eigen::ArrayXd transmittance;  // T_k before sample k absorbs
  Eigen::ArrayXd weight;         // T_k * alpha_k
  double t_background = 1.0;     // residual transmittance
};

struct CompositeResult {
  Vec3 color = Vec3::Zero();
  CompositeWeights weights;
};

// Discrete quadrature of the volume rendering integral. dz_k uses the next
// sample depth; the last interval extends to z_far. Background composites
// against black. Throws std::invalid_argument for non-increasing z or
// mismatched lengths.
CompositeResult composite(const Eigen::ArrayXd& densities,
                          const Eigen::ArrayXd& z, double z_far,
                          const Eigen::MatrixXd& values);

// Accumulates dL/dsigma and dL/dvalues. d_weight_extra (may be empty) holds
// direct dL/dw_k contributions (depth, expectations); d_t_background the
// residual-transmittance gradient.
void composite_backward(const CompositeWeights& w, const Eigen::ArrayXd& z,
                        double z_far, const Eigen::MatrixXd& values,
                        const Vec3& d_color,
                        const Eigen::ArrayXd& d_weight_extra,
                        double d_t_background, Eigen::ArrayXd& d_sigma,
                        Eigen::MatrixXd& d_values);

struct RenderOptions {
  int samples_per_ray = 32;
  bool stratified = false;
  std::uint64_t seed = 0;
};

// Weight-normalization epsilon for depth / expected-flow expectations.
inline constexpr double kExpectationEps = 1e-8;
// Rays whose total dynamic weight falls below this are excluded from the
// flow and cycle losses.
inline constexpr double kMinFlowWeight = 1e-4;
// Guard on the blended-radiance denominator sigma_cb.
inline constexpr double kBlendEps = 1e-12;

struct CombinedRender {
  Vec3 hdr = Vec3::Zero();
  double depth = 0.0;
  CompositeWeights weights;
};

// Static+dynamic compositing with the blending weight v:
// sigma_cb = v sigma_st + (1-v) sigma_dy, radiance the sigma-weighted blend.
// Returns HDR; tone-mapping is applied by callers.
CombinedRender render_combined(const FieldParams& params, const Ray& ray,
                               double t, const RenderOptions& options);

Vec3 render_static_only(const FieldParams& params, const Ray& ray,
                        const RenderOptions& options);
Vec3 render_dynamic_only(const FieldParams& params, const Ray& ray, double t,
                         const RenderOptions& options);

enum class FlowDir { kForward, kBackward };

// Warped render: samples along `ray` at time t_src, advects the samples by
// the predicted scene flow toward t_dst, queries the dynamic field at t_dst
// at the warped positions (view direction held fixed) and composites along
// the original z ordering.
Vec3 render_warped(const FieldParams& params, const Ray& ray, double t_src,
                   double t_dst, FlowDir dir, const RenderOptions& options);

struct ExpectedFlow {
  bool valid = false;     // false when total dynamic weight < kMinFlowWeight
  Vec3 position = Vec3::Zero();  // weighted expected 3D location
  Vec3 flow = Vec3::Zero();      // weighted expected scene flow
  double weight_sum = 0.0;
};

ExpectedFlow render_expected_flow(const FieldParams& params, const Ray& ray,
                                  double t, FlowDir dir,
                                  const RenderOptions& options);

// Forward-only full-frame render used by evaluation and the CLI.
struct ImageRender {
  Image hdr;            // 3ch
  Image depth;          // 1ch
  Image static_hdr;     // 3ch, static branch composited alone
  Image dynamic_share;  // 1ch, fraction of compositing mass from the
                        // dynamic branch
};

ImageRender render_image(const FieldParams& params, const CameraModel& camera,
                         double t, double z_near, double z_far,
                         const RenderOptions& options);

}  // namespace hdrfield
