#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hdrfield/mlp.hpp"

namespace hdrfield {

enum class CrfKind { kPiecewise, kFixed, kMlp, kNone };

std::string to_string(CrfKind kind);
CrfKind crf_kind_from_string(const std::string& s);

// Camera response parameters. The learnable piecewise curve stores 255
// unconstrained increments per channel; softplus + renormalization derive 256
// non-decreasing control points with g(0)=0 and g(1)=1 by construction.
struct CrfParams {
  static constexpr int kControlPoints = 256;

  CrfKind kind = CrfKind::kPiecewise;
  double leak_alpha = 0.01;
  double fixed_gamma = 1.0;     // kFixed: g(x) = x^(1/gamma)
  Eigen::MatrixXd deltas;       // 255 x 3, kPiecewise only
  std::array<MlpParams, 3> mlp;  // kMlp only, per channel

  static CrfParams piecewise_identity();
  // Piecewise params whose control points sample x^(1/gamma).
  static CrfParams piecewise_gamma(double gamma);
  static CrfParams fixed(double gamma);
  static CrfParams mlp_crf(std::uint64_t seed);
  static CrfParams none();

  std::int64_t parameter_count() const;
};

// 256 x 3 control points on the uniform grid over [0,1]; the differentiable
// curve for kPiecewise, the sampled curve otherwise.
Eigen::MatrixXd crf_control_points(const CrfParams& crf);

enum class WbSharing { kPerFrame, kPerTag };

// Per-frame (or per-exposure-tag) linear gains, stored in log domain so
// positivity holds by construction. The reference column stays at zero
// (gain 1) to pin the global scale of the recovered radiance. Gains start at
// the capture protocol's exposure ratios (anchor_log_gains) and a soft
// anchor keeps them nearby: without that metadata the response curve is only
// identifiable up to a power law (gains s^(1/p) with radiance E^(1/p)
// reproduce every unsaturated observation).
struct WhiteBalance {
  Eigen::MatrixXd log_gains;  // 3 x C
  Eigen::MatrixXd anchor_log_gains;
  WbSharing sharing = WbSharing::kPerFrame;
  int reference_column = 0;
  std::vector<int> frame_to_column;

  static WhiteBalance identity(int num_frames, WbSharing sharing,
                               const std::vector<int>& frame_tags,
                               int reference_frame);

  int column(int frame) const;  // throws std::invalid_argument
  Vec3 gains(int frame) const;
  int num_frames() const { return static_cast<int>(frame_to_column.size()); }
};

Vec3 apply_white_balance(const WhiteBalance& wb, int frame, const Vec3& E);

// Piecewise-linear CRF on [0,1]; in training mode the leaky extension
// g(x) = alpha*x for x < 0 and -alpha/sqrt(x) + alpha + 1 for x > 1 keeps
// saturated values differentiable. Eval mode clamps the input to [0,1].
double apply_crf(const CrfParams& crf, int channel, double x, bool training);

Vec3 tonemap(const CrfParams& crf, const WhiteBalance& wb, int frame,
             const Vec3& E, bool training);

// Sum over channels and interior control points of squared discrete second
// differences, scaled by 1/h^3 (h = grid spacing) so the value approximates
// the curvature integral independent of grid resolution.
double crf_smoothness_loss(const CrfParams& crf);

double mulaw(double E, double mu);
Vec3 mulaw(const Vec3& E, double mu);

// ---- differentiable path used by the training graph ----------------------

struct CrfGrad {
  Eigen::MatrixXd deltas;        // 255 x 3
  std::array<MlpGrad, 3> mlp;
  static CrfGrad zeros_like(const CrfParams& crf);
};

// Step-level cache: derived curve plus softplus terms needed for backward.
struct TonemapContext {
  const CrfParams* crf = nullptr;
  const WhiteBalance* wb = nullptr;
  Eigen::MatrixXd curve;      // 256 x 3
  Eigen::MatrixXd softplus_deltas;
  Eigen::Vector3d totals;

  TonemapContext(const CrfParams& crf_params, const WhiteBalance& wb_params);
};

struct TonemapCache {
  Vec3 balanced = Vec3::Zero();  // w * E, the CRF input
  int column = 0;
  std::array<int, 3> bin = {0, 0, 0};
  std::array<double, 3> frac = {0.0, 0.0, 0.0};
  std::array<int, 3> branch = {0, 0, 0};  // -1 below, 0 interp, +1 above
};

// Accumulates gradients across many tonemap applications in one batch;
// flush() converts control-point space gradients to parameter space once.
struct TonemapGradAccum {
  Eigen::MatrixXd d_curve;      // 256 x 3
  Eigen::MatrixXd d_wb_log;     // 3 x C
  std::array<std::vector<std::pair<double, double>>, 3> mlp_samples;  // (x, dy)

  explicit TonemapGradAccum(const TonemapContext& ctx);
  void flush(const TonemapContext& ctx, CrfGrad& crf_grad,
             Eigen::MatrixXd& wb_log_grad);
};

Vec3 tonemap_forward(const TonemapContext& ctx, int frame, const Vec3& E,
                     bool training, TonemapCache& cache);
// Returns dL/dE; accumulates CRF and white-balance gradients.
Vec3 tonemap_backward(const TonemapContext& ctx, const TonemapCache& cache,
                      const Vec3& d_out, TonemapGradAccum& accum);

// Gradient of crf_smoothness_loss in control-point space; the caller routes
// it through TonemapGradAccum::d_curve.
Eigen::MatrixXd crf_smoothness_curve_grad(const Eigen::MatrixXd& curve);

// Plain-text export: 256 sampled control rows and the white-balance table.
void write_crf_text(std::ostream& os, const CrfParams& crf,
                    const WhiteBalance& wb);
void read_crf_text(std::istream& is, CrfParams& crf, WhiteBalance& wb);

}  // namespace hdrfield
