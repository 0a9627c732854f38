#pragma once

#include <optional>
#include <string>

#include "hdrfield/checkpoint.hpp"
#include "hdrfield/image.hpp"
#include "hdrfield/synth_scene.hpp"

namespace hdrfield {

// 10 log10(1 / MSE) over all pixels and channels; infinity when identical.
double psnr(const Image& a, const Image& b,
            const Image* mask = nullptr);  // optional 1ch mask

// Single-scale SSIM, 11x11 Gaussian window sigma 1.5, k1=0.01 k2=0.03,
// dynamic range 1; mean over valid pixels and channels.
double ssim(const Image& a, const Image& b);

// Per-channel: fit scale s minimizing sum (s*pred - gt)^2 over the mask,
// then report median |s*pred - gt| / gt (as a fraction, not percent).
Vec3 hdr_relative_error(const Image& pred, const Image& gt, const Image& mask);

// RMSE between the learned curve and x^(1/gamma), both sampled on the
// 256-point grid with the shared endpoint convention.
double crf_recovery_error(const CrfParams& learned, double gt_gamma);

// Flow end-point error (mean Euclidean pixel distance) over mask pixels.
double flow_epe(const Image& pred_flow, const Image& gt_flow,
                const Image& mask);

struct EvalView {
  double psnr_full = 0.0;
  double ssim_full = 0.0;
  double psnr_dynamic = 0.0;
  double ssim_dynamic = 0.0;  // SSIM over the full frame; mask-aware PSNR
};

struct EvalReport {
  std::vector<EvalView> views;
  double mean_psnr_full = 0.0;
  double mean_ssim_full = 0.0;
  double mean_psnr_dynamic = 0.0;
  Vec3 hdr_rel_error = Vec3::Zero();  // over unsaturated mask, scale-aligned
  double crf_rmse = 0.0;
  double flow_epe_px = 0.0;
  std::string lpips = "unavailable";  // column kept for table shape
  std::string to_json() const;
  std::string to_table() const;
};

enum class RenderMode { kHdr, kLdr, kMulaw, kDepth, kFlow };
RenderMode render_mode_from_string(const std::string& s);

struct RenderRequest {
  CameraModel camera;
  double time = 0.0;  // normalized, must lie in [0,1]
  RenderMode mode = RenderMode::kHdr;
  ExposureTag ldr_tag = ExposureTag::kMid;
  double mu = 500.0;
  int samples_per_ray = 48;
};

// Renders a checkpointed model. LDR uses the eval-mode CRF with the mean
// learned gain over the requested tag's training frames. Flow renders the
// projected expected scene flow toward the next frame.
Image render_output(const Checkpoint& ckpt, const DatasetBundle& bundle,
                    const RenderRequest& request);

// Held-out evaluation against the oracle at a laterally offset camera.
EvalReport evaluate_checkpoint(const Checkpoint& ckpt,
                               const DatasetBundle& bundle,
                               const Vec3& camera_offset,
                               const std::vector<int>& frames,
                               int samples_per_ray = 48);

// Mean learned gain over the training frames carrying `tag`.
Vec3 mean_gain_for_tag(const WhiteBalance& wb,
                       const std::vector<FrameMeta>& frames, ExposureTag tag);

}  // namespace hdrfield
