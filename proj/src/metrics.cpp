#include "hdrfield/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "hdrfield/renderer.hpp"
#include "hdrfield/tonemap.hpp"

namespace hdrfield {

double psnr(const Image& a, const Image& b, const Image* mask) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("psnr: shape mismatch");
  }
  double acc = 0.0;
  std::int64_t count = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (mask != nullptr && mask->at(x, y, 0) < 0.5) continue;
      for (int c = 0; c < a.channels; ++c) {
        acc += sq(a.at(x, y, c) - b.at(x, y, c));
        ++count;
      }
    }
  }
  if (count == 0) throw std::invalid_argument("psnr: empty mask");
  const double mse = acc / static_cast<double>(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("ssim: shape mismatch");
  }
  constexpr int kWin = 11;
  constexpr int kHalf = kWin / 2;
  if (a.width < kWin || a.height < kWin) {
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  }
  double kernel[kWin];
  double ksum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    kernel[i] = std::exp(-0.5 * sq((i - kHalf) / 1.5));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;
  const double c1 = sq(0.01), c2 = sq(0.03);

  double acc = 0.0;
  std::int64_t count = 0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y = kHalf; y < a.height - kHalf; ++y) {
      for (int x = kHalf; x < a.width - kHalf; ++x) {
        double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
        for (int dy = -kHalf; dy <= kHalf; ++dy) {
          for (int dx = -kHalf; dx <= kHalf; ++dx) {
            const double w = kernel[dy + kHalf] * kernel[dx + kHalf];
            const double va = a.at(x + dx, y + dy, c);
            const double vb = b.at(x + dx, y + dy, c);
            mu_a += w * va;
            mu_b += w * vb;
            aa += w * va * va;
            bb += w * vb * vb;
            ab += w * va * vb;
          }
        }
        const double var_a = aa - mu_a * mu_a;
        const double var_b = bb - mu_b * mu_b;
        const double cov = ab - mu_a * mu_b;
        acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        ++count;
      }
    }
  }
  return acc / static_cast<double>(count);
}

Vec3 hdr_relative_error(const Image& pred, const Image& gt, const Image& mask) {
  if (!pred.same_shape(gt) || mask.width != pred.width ||
      mask.height != pred.height) {
    throw std::invalid_argument("hdr_relative_error: shape mismatch");
  }
  Vec3 out;
  for (int c = 0; c < 3; ++c) {
    double pp = 0.0, pg = 0.0;
    std::vector<double> rel;
    for (int y = 0; y < pred.height; ++y) {
      for (int x = 0; x < pred.width; ++x) {
        if (mask.at(x, y, 0) < 0.5) continue;
        pp += sq(pred.at(x, y, c));
        pg += pred.at(x, y, c) * gt.at(x, y, c);
      }
    }
    if (pp == 0.0) throw std::invalid_argument("hdr_relative_error: empty mask");
    const double s = pg / pp;
    for (int y = 0; y < pred.height; ++y) {
      for (int x = 0; x < pred.width; ++x) {
        if (mask.at(x, y, 0) < 0.5) continue;
        const double g = gt.at(x, y, c);
        if (g <= 0.0) continue;
        rel.push_back(std::abs(s * pred.at(x, y, c) - g) / g);
      }
    }
    if (rel.empty()) throw std::invalid_argument("hdr_relative_error: empty mask");
    std::nth_element(rel.begin(), rel.begin() + rel.size() / 2, rel.end());
    out(c) = rel[rel.size() / 2];
  }
  return out;
}

double crf_recovery_error(const CrfParams& learned, double gt_gamma) {
  const Eigen::MatrixXd y = crf_control_points(learned);
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k + 1 < CrfParams::kControlPoints; ++k) {
      if (y(k + 1, c) < y(k, c) - 1e-12) {
        throw std::invalid_argument("crf_recovery_error: non-monotone curve");
      }
    }
  }
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < CrfParams::kControlPoints; ++k) {
      const double x = k / (CrfParams::kControlPoints - 1.0);
      acc += sq(y(k, c) - std::pow(x, 1.0 / gt_gamma));
    }
  }
  return std::sqrt(acc / (3.0 * CrfParams::kControlPoints));
}

double flow_epe(const Image& pred_flow, const Image& gt_flow,
                const Image& mask) {
  if (pred_flow.width != gt_flow.width || pred_flow.height != gt_flow.height) {
    throw std::invalid_argument("flow_epe: shape mismatch");
  }
  double acc = 0.0;
  std::int64_t count = 0;
  for (int y = 0; y < pred_flow.height; ++y) {
    for (int x = 0; x < pred_flow.width; ++x) {
      if (mask.at(x, y, 0) < 0.5) continue;
      const double du = pred_flow.at(x, y, 0) - gt_flow.at(x, y, 0);
      const double dv = pred_flow.at(x, y, 1) - gt_flow.at(x, y, 1);
      acc += std::sqrt(du * du + dv * dv);
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("flow_epe: empty mask");
  return acc / static_cast<double>(count);
}

Vec3 mean_gain_for_tag(const WhiteBalance& wb,
                       const std::vector<FrameMeta>& frames, ExposureTag tag) {
  Vec3 acc = Vec3::Zero();
  int count = 0;
  for (const FrameMeta& m : frames) {
    if (m.exposure_tag != tag) continue;
    acc += wb.gains(m.frame_index);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("no frames with requested tag");
  return acc / count;
}

RenderMode render_mode_from_string(const std::string& s) {
  if (s == "hdr") return RenderMode::kHdr;
  if (s == "ldr") return RenderMode::kLdr;
  if (s == "mulaw") return RenderMode::kMulaw;
  if (s == "depth") return RenderMode::kDepth;
  if (s == "flow") return RenderMode::kFlow;
  throw std::invalid_argument("unknown render mode: " + s);
}

Image render_output(const Checkpoint& ckpt, const DatasetBundle& bundle,
                    const RenderRequest& request) {
  if (request.time < 0.0 || request.time > 1.0) {
    throw std::invalid_argument("render: time outside [0,1]");
  }
  RenderOptions options;
  options.samples_per_ray = request.samples_per_ray;
  options.stratified = false;

  if (request.mode == RenderMode::kFlow) {
    // Pixel flow toward the next bundle frame: the advected expected point
    // is projected with that frame's camera, so camera-induced motion is
    // included.
    int f = 0;
    for (std::size_t i = 0; i < bundle.frames.size(); ++i) {
      if (std::abs(bundle.frames[i].time - request.time) <
          std::abs(bundle.frames[f].time - request.time)) {
        f = static_cast<int>(i);
      }
    }
    f = std::min(f, static_cast<int>(bundle.frames.size()) - 2);
    const CameraModel& cam_next = bundle.frames[f + 1].camera;
    Image flow(request.camera.width, request.camera.height, 3);
    for (int y = 0; y < request.camera.height; ++y) {
      for (int x = 0; x < request.camera.width; ++x) {
        const Ray ray = generate_ray(request.camera, Vec2(x + 0.5, y + 0.5),
                                     bundle.spec.z_near, bundle.spec.z_far);
        const ExpectedFlow ef = render_expected_flow(
            ckpt.fields, ray, request.time, FlowDir::kForward, options);
        if (!ef.valid) continue;
        try {
          const Vec2 p1 = project(cam_next, ef.position + ef.flow);
          flow.at(x, y, 0) = p1.x() - (x + 0.5);
          flow.at(x, y, 1) = p1.y() - (y + 0.5);
          flow.at(x, y, 2) = 1.0;
        } catch (const std::domain_error&) {
        }
      }
    }
    return flow;
  }

  const ImageRender r =
      render_image(ckpt.fields, request.camera, request.time,
                   bundle.spec.z_near, bundle.spec.z_far, options);
  switch (request.mode) {
    case RenderMode::kHdr:
      return r.hdr;
    case RenderMode::kDepth:
      return r.depth;
    case RenderMode::kMulaw: {
      Image out = r.hdr;
      for (double& v : out.data) v = mulaw(std::max(v, 0.0), request.mu);
      return out;
    }
    case RenderMode::kLdr: {
      const Vec3 gain =
          mean_gain_for_tag(ckpt.wb, bundle.frames, request.ldr_tag);
      Image out = r.hdr;
      for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
          const Vec3 e = gain.cwiseProduct(out.rgb(x, y));
          Vec3 ldr;
          for (int c = 0; c < 3; ++c) {
            ldr(c) = apply_crf(ckpt.crf, c, e(c), /*training=*/false);
          }
          out.set_rgb(x, y, ldr);
        }
      }
      return out;
    }
    default:
      throw std::invalid_argument("unhandled render mode");
  }
}

EvalReport evaluate_checkpoint(const Checkpoint& ckpt,
                               const DatasetBundle& bundle,
                               const Vec3& camera_offset,
                               const std::vector<int>& frames,
                               int samples_per_ray) {
  EvalReport report;
  double acc_pf = 0, acc_sf = 0, acc_pd = 0, acc_sd = 0;
  for (int f : frames) {
    const FrameMeta& meta = bundle.frames.at(f);
    const double time01 = meta.time;
    const double frame_pos = bundle.spec.frame_pos(time01);
    const CameraModel cam =
        bundle.spec.camera_at_time(time01, camera_offset);
    RenderRequest req;
    req.camera = cam;
    req.time = time01;
    req.mode = RenderMode::kLdr;
    req.ldr_tag = meta.exposure_tag;
    req.samples_per_ray = samples_per_ray;
    const Image rendered = render_output(ckpt, bundle, req);
    const Image gt =
        oracle_ldr(bundle.spec, cam, frame_pos, meta.exposure_scale);
    const OracleRender oracle = oracle_render_camera(bundle.spec, cam, frame_pos);
    EvalView view;
    view.psnr_full = psnr(rendered, gt);
    view.ssim_full = ssim(rendered, gt);
    bool any_dynamic = false;
    for (double v : oracle.dynamic_mask.data) {
      if (v > 0.5) {
        any_dynamic = true;
        break;
      }
    }
    view.psnr_dynamic =
        any_dynamic ? psnr(rendered, gt, &oracle.dynamic_mask) : view.psnr_full;
    view.ssim_dynamic = view.ssim_full;
    report.views.push_back(view);
    acc_pf += view.psnr_full;
    acc_sf += view.ssim_full;
    acc_pd += view.psnr_dynamic;
    acc_sd += view.ssim_dynamic;
  }
  const double n = static_cast<double>(report.views.size());
  report.mean_psnr_full = acc_pf / n;
  report.mean_ssim_full = acc_sf / n;
  report.mean_psnr_dynamic = acc_pd / n;
  if (ckpt.crf.kind == CrfKind::kPiecewise || ckpt.crf.kind == CrfKind::kNone ||
      ckpt.crf.kind == CrfKind::kFixed) {
    report.crf_rmse = crf_recovery_error(ckpt.crf, bundle.spec.crf_gamma);
  }
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["mean_psnr_full"] = mean_psnr_full;
  j["mean_ssim_full"] = mean_ssim_full;
  j["mean_psnr_dynamic"] = mean_psnr_dynamic;
  j["hdr_rel_error"] = {hdr_rel_error(0), hdr_rel_error(1), hdr_rel_error(2)};
  j["crf_rmse"] = crf_rmse;
  j["flow_epe_px"] = flow_epe_px;
  j["lpips"] = lpips;
  nlohmann::json views_json = nlohmann::json::array();
  for (const EvalView& v : views) {
    views_json.push_back({{"psnr_full", v.psnr_full},
                          {"ssim_full", v.ssim_full},
                          {"psnr_dynamic", v.psnr_dynamic}});
  }
  j["views"] = views_json;
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os.precision(4);
  os << "metric              value\n"
     << "PSNR (full)         " << mean_psnr_full << "\n"
     << "SSIM (full)         " << mean_ssim_full << "\n"
     << "PSNR (dynamic)      " << mean_psnr_dynamic << "\n"
     << "HDR rel err (rgb)   " << hdr_rel_error(0) << " " << hdr_rel_error(1)
     << " " << hdr_rel_error(2) << "\n"
     << "CRF RMSE            " << crf_rmse << "\n"
     << "Flow EPE (px)       " << flow_epe_px << "\n"
     << "LPIPS               " << lpips << "\n";
  return os.str();
}

}  // namespace hdrfield
