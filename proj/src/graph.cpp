#include <algorithm>
#include <cmath>
#include <numeric>

#include "hdrfield/losses.hpp"

namespace hdrfield {

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Vec3 sign3(const Vec3& v) { return Vec3(sgn(v(0)), sgn(v(1)), sgn(v(2))); }

double l1(const Vec3& v) { return v.cwiseAbs().sum(); }

constexpr double kDepthNormEps = 1e-12;

// Median plus the selection pattern needed for its (sub)gradient.
struct MedianInfo {
  double value = 0.0;
  int lo = 0, hi = 0;  // indices of the selected order statistics
};

MedianInfo median_info(const std::vector<double>& v) {
  const int n = static_cast<int>(v.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
  MedianInfo m;
  if (n % 2 == 1) {
    m.lo = m.hi = idx[n / 2];
    m.value = v[m.lo];
  } else {
    m.lo = idx[n / 2 - 1];
    m.hi = idx[n / 2];
    m.value = 0.5 * (v[m.lo] + v[m.hi]);
  }
  return m;
}

struct NormalizedDepths {
  std::vector<double> zstar;
  MedianInfo median;
  double mad = 0.0;  // mean absolute deviation from the median (clamped)
  bool clamped = false;
};

NormalizedDepths normalize_depths(const std::vector<double>& z) {
  NormalizedDepths out;
  out.median = median_info(z);
  double acc = 0.0;
  for (double v : z) acc += std::abs(v - out.median.value);
  acc /= static_cast<double>(z.size());
  out.clamped = acc < kDepthNormEps;
  out.mad = std::max(acc, kDepthNormEps);
  out.zstar.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.zstar[i] = (z[i] - out.median.value) / out.mad;
  }
  return out;
}

}  // namespace

TermCoeffs TermCoeffs::from_weights(const LossWeights& w) {
  TermCoeffs c;
  c.cb = 1.0;
  c.photo = 1.0;
  c.flow = w.beta_data;
  c.depth = w.beta_data * w.beta_depth;
  c.cyc = w.beta_reg;
  c.reg = w.beta_reg;
  c.smooth = w.beta_smooth;
  c.wb_anchor = w.beta_wb_anchor;
  return c;
}

Gradients Gradients::zeros_like(const FieldParams& fields,
                                const CrfParams& crf, const WhiteBalance& wb) {
  Gradients g;
  g.static_mlp = MlpGrad::zeros_like(fields.static_mlp);
  g.dynamic_mlp = MlpGrad::zeros_like(fields.dynamic_mlp);
  g.crf = CrfGrad::zeros_like(crf);
  g.wb_log = Eigen::MatrixXd::Zero(3, wb.log_gains.cols());
  return g;
}

LossBreakdown compute_losses(const FieldParams& fields, const CrfParams& crf,
                             const WhiteBalance& wb, const SceneContext& scene,
                             const SupervisionBatch& batch,
                             const LossWeights& weights, unsigned terms,
                             const TermCoeffs& coeffs, Gradients* grads) {
  const int R = static_cast<int>(batch.rays.size());
  const int K = batch.samples_per_ray;
  const int F = static_cast<int>(scene.frames.size());
  if (R == 0 || K < 2) {
    throw std::invalid_argument("compute_losses: empty batch or count < 2");
  }
  for (const auto& r : batch.rays) {
    if (r.frame < 0 || r.frame >= F) {
      throw std::invalid_argument("compute_losses: ray references unknown frame");
    }
  }
  const int B = R * K;

  const bool want_cb = terms & kTermCb;
  const bool want_photo = terms & kTermPhoto;
  const bool want_flow = terms & kTermFlow;
  const bool want_depth = terms & kTermDepth;
  const bool want_cyc = terms & kTermCyc;
  const bool want_reg = terms & kTermReg;
  const bool want_smooth = terms & kTermSmooth;
  const bool want_wb_anchor = terms & kTermWbAnchor;

  const bool need_combined = want_cb || want_depth;
  const bool need_warp = want_photo || want_cyc;
  const bool need_dyn_comp =
      want_flow || want_cyc || (want_photo && weights.occlusion_weighted_photo);

  // ---- geometry + samples -------------------------------------------------
  std::vector<Ray> rays(R);
  Eigen::ArrayXd z(B);
  Eigen::MatrixXd X(3, B), D(3, B);
  Eigen::ArrayXd t_i(B), t_fwd(B), t_bwd(B);
  for (int r = 0; r < R; ++r) {
    const RayObservation& obs = batch.rays[r];
    const FrameMeta& fm = scene.frames[obs.frame];
    rays[r] = generate_ray(fm.camera, obs.pixel, scene.z_near, scene.z_far);
    std::mt19937_64 rng(mix_seed(batch.sample_seed, static_cast<std::uint64_t>(r)));
    sample_depths(rays[r], K, batch.stratified, rng, z.data() + r * K);
    const int jf = scene.neighbor(obs.frame, FlowDir::kForward);
    const int jb = scene.neighbor(obs.frame, FlowDir::kBackward);
    for (int k = 0; k < K; ++k) {
      const int col = r * K + k;
      X.col(col) = rays[r].origin + z(col) * rays[r].direction;
      D.col(col) = rays[r].direction;
      t_i(col) = fm.time;
      t_fwd(col) = jf >= 0 ? scene.frames[jf].time : fm.time;
      t_bwd(col) = jb >= 0 ? scene.frames[jb].time : fm.time;
    }
  }

  // ---- field evaluations ---------------------------------------------------
  StaticEval se;
  if (need_combined) eval_static_batch(fields, X, D, se);
  DynamicEval de;
  eval_dynamic_batch(fields, X, D, t_i, de);
  DynamicEval de_f, de_b;
  Eigen::MatrixXd Xf, Xb;
  if (need_warp) {
    Xf = X + de.flow_forward;
    Xb = X + de.flow_backward;
    eval_dynamic_batch(fields, Xf, D, t_fwd, de_f);
    eval_dynamic_batch(fields, Xb, D, t_bwd, de_b);
  }

  auto seg = [&](const Eigen::ArrayXd& a, int r) -> Eigen::ArrayXd {
    return a.segment(r * K, K);
  };
  auto seg_m = [&](const Eigen::MatrixXd& m, int r) -> Eigen::MatrixXd {
    return m.middleCols(r * K, K);
  };

  // ---- combined compositing -----------------------------------------------
  Eigen::ArrayXd sigma_cb;
  Eigen::MatrixXd blended;
  std::vector<CompositeResult> comp_cb(need_combined ? R : 0);
  std::vector<double> rendered_depth(R, 0.0);
  std::vector<double> cb_wsum(R, 0.0);
  if (need_combined) {
    sigma_cb = se.blend * se.density + (1.0 - se.blend) * de.density;
    blended.resize(3, B);
    for (int col = 0; col < B; ++col) {
      const Vec3 num =
          se.blend(col) * se.density(col) * se.radiance.col(col) +
          (1.0 - se.blend(col)) * de.density(col) * de.radiance.col(col);
      blended.col(col) = num / (sigma_cb(col) + kBlendEps);
    }
    for (int r = 0; r < R; ++r) {
      comp_cb[r] = composite(seg(sigma_cb, r), seg(z, r), scene.z_far,
                             seg_m(blended, r));
      cb_wsum[r] = comp_cb[r].weights.weight.sum();
      rendered_depth[r] = (comp_cb[r].weights.weight * seg(z, r)).sum() /
                          (cb_wsum[r] + kExpectationEps);
    }
  }

  // ---- dynamic-only compositing (flow expectations, cycle gating) ----------
  std::vector<CompositeResult> comp_dy(need_dyn_comp ? R : 0);
  std::vector<double> dy_wsum(R, 0.0);
  std::vector<bool> include_ray(R, true);
  if (need_dyn_comp) {
    for (int r = 0; r < R; ++r) {
      comp_dy[r] =
          composite(seg(de.density, r), seg(z, r), scene.z_far, seg_m(de.radiance, r));
      dy_wsum[r] = comp_dy[r].weights.weight.sum();
      include_ray[r] = dy_wsum[r] >= kMinFlowWeight;
    }
  }

  // ---- warped compositing ---------------------------------------------------
  std::vector<CompositeResult> comp_wf(need_warp ? R : 0), comp_wb(need_warp ? R : 0);
  if (need_warp) {
    for (int r = 0; r < R; ++r) {
      if (scene.neighbor(batch.rays[r].frame, FlowDir::kForward) >= 0) {
        comp_wf[r] = composite(seg(de_f.density, r), seg(z, r), scene.z_far,
                               seg_m(de_f.radiance, r));
      }
      if (scene.neighbor(batch.rays[r].frame, FlowDir::kBackward) >= 0) {
        comp_wb[r] = composite(seg(de_b.density, r), seg(z, r), scene.z_far,
                               seg_m(de_b.radiance, r));
      }
    }
  }

  // ---- forward losses -------------------------------------------------------
  LossBreakdown out;
  TonemapContext tm_ctx(crf, wb);
  TonemapGradAccum tm_accum(tm_ctx);

  std::vector<TonemapCache> tm_cb(R);
  std::vector<Vec3> cb_residual(R, Vec3::Zero());
  if (want_cb) {
    double acc = 0.0;
    for (int r = 0; r < R; ++r) {
      const Vec3 ldr = tonemap_forward(tm_ctx, batch.rays[r].frame,
                                       comp_cb[r].color, true, tm_cb[r]);
      cb_residual[r] = ldr - batch.rays[r].color;
      acc += weights.squared_photometric ? cb_residual[r].squaredNorm()
                                         : l1(cb_residual[r]);
    }
    out.cb = acc / (3.0 * R);
  }

  struct WarpEntry {
    bool valid = false;
    TonemapCache cache;
    Vec3 residual = Vec3::Zero();
    double occ_conf = 1.0;  // occlusion-weighted photometric confidence
  };
  std::vector<std::array<WarpEntry, 2>> warp(R);
  int photo_pairs = 0;
  if (want_photo) {
    double acc = 0.0;
    for (int r = 0; r < R; ++r) {
      for (int dir = 0; dir < 2; ++dir) {
        const FlowDir fdir = dir == 0 ? FlowDir::kForward : FlowDir::kBackward;
        if (scene.neighbor(batch.rays[r].frame, fdir) < 0) continue;
        WarpEntry& e = warp[r][dir];
        e.valid = true;
        const CompositeResult& comp = dir == 0 ? comp_wf[r] : comp_wb[r];
        const Vec3 ldr = tonemap_forward(tm_ctx, batch.rays[r].frame,
                                         comp.color, true, e.cache);
        e.residual = ldr - batch.rays[r].color;
        if (weights.occlusion_weighted_photo) {
          const Eigen::ArrayXd& occ = dir == 0 ? de.occ_forward : de.occ_backward;
          e.occ_conf = (comp_dy[r].weights.weight * seg(occ, r)).sum() /
                       (dy_wsum[r] + kExpectationEps);
        }
        acc += e.occ_conf * (weights.squared_photometric
                                 ? e.residual.squaredNorm()
                                 : l1(e.residual));
        ++photo_pairs;
      }
    }
    out.photo = photo_pairs > 0 ? acc / (3.0 * photo_pairs) : 0.0;
  }

  struct FlowEntry {
    bool valid = false;
    Vec3 xhat = Vec3::Zero(), fhat = Vec3::Zero();
    Eigen::Matrix<double, 2, 3> jac = Eigen::Matrix<double, 2, 3>::Zero();
    Vec2 residual = Vec2::Zero();
  };
  std::vector<std::array<FlowEntry, 2>> flow_entries(R);
  int flow_pairs = 0;
  if (want_flow) {
    double acc = 0.0;
    for (int r = 0; r < R; ++r) {
      const RayObservation& obs = batch.rays[r];
      if (!include_ray[r]) continue;
      for (int dir = 0; dir < 2; ++dir) {
        const FlowDir fdir = dir == 0 ? FlowDir::kForward : FlowDir::kBackward;
        const auto& uv = dir == 0 ? obs.flow_forward : obs.flow_backward;
        const int j = scene.neighbor(obs.frame, fdir);
        if (!uv.has_value() || j < 0) continue;
        FlowEntry& e = flow_entries[r][dir];
        const double norm = 1.0 / (dy_wsum[r] + kExpectationEps);
        const Eigen::MatrixXd& flow_field =
            dir == 0 ? de.flow_forward : de.flow_backward;
        e.xhat = (seg_m(X, r) * comp_dy[r].weights.weight.matrix()) * norm;
        e.fhat = (seg_m(flow_field, r) * comp_dy[r].weights.weight.matrix()) * norm;
        Vec2 projected;
        try {
          projected = project_with_jacobian(scene.frames[j].camera,
                                            e.xhat + e.fhat, &e.jac);
        } catch (const std::domain_error&) {
          continue;  // expected point behind the neighbor camera: skip ray
        }
        e.valid = true;
        e.residual = projected - (obs.pixel + *uv);
        acc += std::abs(e.residual.x()) + std::abs(e.residual.y());
        ++flow_pairs;
      }
    }
    out.flow = flow_pairs > 0 ? acc / flow_pairs : 0.0;
    out.flow_rays = flow_pairs;
  }

  std::vector<int> depth_idx;
  NormalizedDepths rend_norm, obs_norm;
  if (want_depth) {
    std::vector<double> rend, obsd;
    for (int r = 0; r < R; ++r) {
      if (batch.rays[r].depth.has_value()) {
        depth_idx.push_back(r);
        rend.push_back(rendered_depth[r]);
        obsd.push_back(*batch.rays[r].depth);
      }
    }
    if (depth_idx.size() >= 2) {
      rend_norm = normalize_depths(rend);
      obs_norm = normalize_depths(obsd);
      double acc = 0.0;
      for (std::size_t i = 0; i < depth_idx.size(); ++i) {
        acc += std::abs(rend_norm.zstar[i] - obs_norm.zstar[i]);
      }
      out.depth = acc / static_cast<double>(depth_idx.size());
      out.depth_rays = static_cast<int>(depth_idx.size());
    } else {
      depth_idx.clear();
    }
  }

  int cyc_count = 0;
  if (want_cyc) {
    double acc = 0.0;
    for (int r = 0; r < R; ++r) {
      if (!include_ray[r]) continue;
      for (int dir = 0; dir < 2; ++dir) {
        const FlowDir fdir = dir == 0 ? FlowDir::kForward : FlowDir::kBackward;
        if (scene.neighbor(batch.rays[r].frame, fdir) < 0) continue;
        const Eigen::ArrayXd& occ = dir == 0 ? de.occ_forward : de.occ_backward;
        const Eigen::MatrixXd& f_out = dir == 0 ? de.flow_forward : de.flow_backward;
        // Flow back from the warped point: forward warp uses the neighbor's
        // backward head and vice versa.
        const Eigen::MatrixXd& f_back =
            dir == 0 ? de_f.flow_backward : de_b.flow_forward;
        for (int k = 0; k < K; ++k) {
          const int col = r * K + k;
          acc += occ(col) * l1(f_out.col(col) + f_back.col(col));
          ++cyc_count;
        }
      }
    }
    out.cyc = cyc_count > 0 ? acc / cyc_count : 0.0;
  }

  const int sp_pairs = R * (K - 1);
  if (want_reg) {
    double acc_sp = 0.0, acc_temp = 0.0, acc_min = 0.0;
    for (int r = 0; r < R; ++r) {
      for (int k = 0; k < K; ++k) {
        const int col = r * K + k;
        acc_temp += 0.5 * (de.flow_forward.col(col) + de.flow_backward.col(col))
                              .squaredNorm();
        acc_min += l1(de.flow_forward.col(col)) + l1(de.flow_backward.col(col));
        if (k + 1 < K) {
          const double wd = w_dist(X.col(col), X.col(col + 1));
          acc_sp += wd * (l1(de.flow_forward.col(col) - de.flow_forward.col(col + 1)) +
                          l1(de.flow_backward.col(col) - de.flow_backward.col(col + 1)));
        }
      }
    }
    out.reg_sp = acc_sp / sp_pairs;
    out.reg_temp = acc_temp / B;
    out.reg_min = acc_min / B;
  }

  if (want_smooth && crf.kind != CrfKind::kNone) {
    double acc = 0.0;
    const double h = 1.0 / (CrfParams::kControlPoints - 1);
    for (int c = 0; c < 3; ++c) {
      for (int k = 1; k + 1 < CrfParams::kControlPoints; ++k) {
        acc += sq(tm_ctx.curve(k + 1, c) - 2.0 * tm_ctx.curve(k, c) +
                  tm_ctx.curve(k - 1, c));
      }
    }
    out.smooth = acc / (h * h * h);
  }

  if (want_wb_anchor) {
    out.wb_anchor = (wb.log_gains - wb.anchor_log_gains).squaredNorm();
  }

  if (grads == nullptr) return out;

  // ---- backward -------------------------------------------------------------
  StaticGradIn sg;
  if (need_combined) sg.setZero(B);
  DynamicGradIn dg;
  dg.setZero(B);
  DynamicGradIn dgf, dgb;
  if (need_warp) {
    dgf.setZero(B);
    dgb.setZero(B);
  }
  Eigen::ArrayXd d_sigma_cb = Eigen::ArrayXd::Zero(B);
  Eigen::MatrixXd d_blended = Eigen::MatrixXd::Zero(3, need_combined ? B : 0);
  Eigen::ArrayXd d_wdy = Eigen::ArrayXd::Zero(need_dyn_comp ? B : 0);
  std::vector<double> d_depth(R, 0.0);

  // depth: through the batch scale/shift normalization of rendered depths.
  if (want_depth && !depth_idx.empty() && coeffs.depth != 0.0 &&
      !rend_norm.clamped) {
    const int V = static_cast<int>(depth_idx.size());
    const double inv_v = 1.0 / V;
    std::vector<double> dzstar(V);
    for (int i = 0; i < V; ++i) {
      dzstar[i] = coeffs.depth * sgn(rend_norm.zstar[i] - obs_norm.zstar[i]) * inv_v;
    }
    // z*_i = (z_i - m) / a  with m the median and a the mean abs deviation.
    double sum_dz = 0.0, sum_dz_zstar = 0.0, sum_sign = 0.0;
    for (int i = 0; i < V; ++i) {
      sum_dz += dzstar[i];
      sum_dz_zstar += dzstar[i] * rend_norm.zstar[i];
      sum_sign += sgn(rend_norm.zstar[i]);
    }
    std::vector<double> dz(V, 0.0);
    for (int i = 0; i < V; ++i) {
      dz[i] += dzstar[i] / rend_norm.mad;
      // da/dz_i = sign(z_i - m)/V (median term handled below)
      dz[i] -= sum_dz_zstar / rend_norm.mad * sgn(rend_norm.zstar[i]) * inv_v;
    }
    // dm/dz routes to the median element(s) of the valid subset.
    const double dm = -sum_dz / rend_norm.mad +
                      sum_dz_zstar / rend_norm.mad * sum_sign * inv_v;
    if (rend_norm.median.lo == rend_norm.median.hi) {
      dz[rend_norm.median.lo] += dm;
    } else {
      dz[rend_norm.median.lo] += 0.5 * dm;
      dz[rend_norm.median.hi] += 0.5 * dm;
    }
    for (int i = 0; i < V; ++i) d_depth[depth_idx[i]] = dz[i];
  }

  // cb + depth: one combined-composite backward per ray.
  if (need_combined) {
    for (int r = 0; r < R; ++r) {
      Vec3 d_color = Vec3::Zero();
      if (want_cb && coeffs.cb != 0.0) {
        const Vec3 d_ldr =
            weights.squared_photometric
                ? Vec3(2.0 * cb_residual[r] * coeffs.cb / (3.0 * R))
                : Vec3(sign3(cb_residual[r]) * coeffs.cb / (3.0 * R));
        d_color = tonemap_backward(tm_ctx, tm_cb[r], d_ldr, tm_accum);
      }
      Eigen::ArrayXd d_weight_extra;
      if (d_depth[r] != 0.0) {
        const double denom = cb_wsum[r] + kExpectationEps;
        d_weight_extra = (seg(z, r) - rendered_depth[r]) / denom * d_depth[r];
      }
      if (d_color.isZero(0.0) && d_weight_extra.size() == 0) continue;
      Eigen::ArrayXd d_sig = Eigen::ArrayXd::Zero(K);
      Eigen::MatrixXd d_val = Eigen::MatrixXd::Zero(3, K);
      composite_backward(comp_cb[r].weights, seg(z, r), scene.z_far,
                         seg_m(blended, r), d_color, d_weight_extra, 0.0,
                         d_sig, d_val);
      d_sigma_cb.segment(r * K, K) += d_sig;
      d_blended.middleCols(r * K, K) += d_val;
    }
    // Unpack blended-value and blended-density gradients to field outputs.
    for (int col = 0; col < B; ++col) {
      const double v = se.blend(col);
      const double sst = se.density(col);
      const double sdy = de.density(col);
      const Vec3 cst = se.radiance.col(col);
      const Vec3 cdy = de.radiance.col(col);
      const double inv = 1.0 / (sigma_cb(col) + kBlendEps);
      const Vec3 db = d_blended.col(col);
      double d_scb = d_sigma_cb(col);
      // blended = num * inv; d/d sigma_cb adds -blended * inv per channel.
      d_scb -= db.dot(blended.col(col)) * inv;
      const Vec3 dnum = db * inv;
      sg.radiance.col(col) += dnum * (v * sst);
      dg.radiance.col(col) += dnum * ((1.0 - v) * sdy);
      sg.density(col) += v * dnum.dot(cst) + d_scb * v;
      dg.density(col) += (1.0 - v) * dnum.dot(cdy) + d_scb * (1.0 - v);
      sg.blend(col) += dnum.dot(sst * cst - sdy * cdy) + d_scb * (sst - sdy);
    }
  }

  // photo (+ optional occlusion confidence path)
  if (want_photo && coeffs.photo != 0.0 && photo_pairs > 0) {
    const double norm = coeffs.photo / (3.0 * photo_pairs);
    for (int r = 0; r < R; ++r) {
      for (int dir = 0; dir < 2; ++dir) {
        const WarpEntry& e = warp[r][dir];
        if (!e.valid) continue;
        const Vec3 d_ldr = e.occ_conf * norm *
                           (weights.squared_photometric
                                ? Vec3(2.0 * e.residual)
                                : sign3(e.residual));
        const Vec3 d_color = tonemap_backward(tm_ctx, e.cache, d_ldr, tm_accum);
        DynamicGradIn& dgd = dir == 0 ? dgf : dgb;
        const CompositeResult& comp = dir == 0 ? comp_wf[r] : comp_wb[r];
        const DynamicEval& ded = dir == 0 ? de_f : de_b;
        Eigen::ArrayXd d_sig = Eigen::ArrayXd::Zero(K);
        Eigen::MatrixXd d_val = Eigen::MatrixXd::Zero(3, K);
        composite_backward(comp.weights, seg(z, r), scene.z_far,
                           seg_m(ded.radiance, r), d_color, Eigen::ArrayXd(),
                           0.0, d_sig, d_val);
        dgd.density.segment(r * K, K) += d_sig;
        dgd.radiance.middleCols(r * K, K) += d_val;
        if (weights.occlusion_weighted_photo) {
          const double d_conf = norm * (weights.squared_photometric
                                            ? e.residual.squaredNorm()
                                            : l1(e.residual));
          const Eigen::ArrayXd& occ = dir == 0 ? de.occ_forward : de.occ_backward;
          Eigen::ArrayXd& docc = dir == 0 ? dg.occ_forward : dg.occ_backward;
          const double denom = dy_wsum[r] + kExpectationEps;
          for (int k = 0; k < K; ++k) {
            const int col = r * K + k;
            docc(col) += d_conf * comp_dy[r].weights.weight(k) / denom;
            d_wdy(col) += d_conf * (occ(col) - e.occ_conf) / denom;
          }
        }
      }
    }
  }

  // flow: projection Jacobian, then the weighted expectations.
  if (want_flow && coeffs.flow != 0.0 && flow_pairs > 0) {
    const double norm = coeffs.flow / flow_pairs;
    for (int r = 0; r < R; ++r) {
      for (int dir = 0; dir < 2; ++dir) {
        const FlowEntry& e = flow_entries[r][dir];
        if (!e.valid) continue;
        const Vec2 dp(norm * sgn(e.residual.x()), norm * sgn(e.residual.y()));
        const Vec3 d_point = e.jac.transpose() * dp;  // d/d(xhat + fhat)
        const double denom = dy_wsum[r] + kExpectationEps;
        Eigen::MatrixXd& d_flow = dir == 0 ? dg.flow_forward : dg.flow_backward;
        const Eigen::MatrixXd& flow_field =
            dir == 0 ? de.flow_forward : de.flow_backward;
        for (int k = 0; k < K; ++k) {
          const int col = r * K + k;
          const double w = comp_dy[r].weights.weight(k);
          d_flow.col(col) += d_point * (w / denom);
          d_wdy(col) += d_point.dot(X.col(col) - e.xhat) / denom +
                        d_point.dot(flow_field.col(col) - e.fhat) / denom;
        }
      }
    }
  }

  // cycle consistency
  if (want_cyc && coeffs.cyc != 0.0 && cyc_count > 0) {
    const double norm = coeffs.cyc / cyc_count;
    for (int r = 0; r < R; ++r) {
      if (!include_ray[r]) continue;
      for (int dir = 0; dir < 2; ++dir) {
        const FlowDir fdir = dir == 0 ? FlowDir::kForward : FlowDir::kBackward;
        if (scene.neighbor(batch.rays[r].frame, fdir) < 0) continue;
        const Eigen::ArrayXd& occ = dir == 0 ? de.occ_forward : de.occ_backward;
        Eigen::ArrayXd& docc = dir == 0 ? dg.occ_forward : dg.occ_backward;
        const Eigen::MatrixXd& f_out = dir == 0 ? de.flow_forward : de.flow_backward;
        Eigen::MatrixXd& df_out = dir == 0 ? dg.flow_forward : dg.flow_backward;
        const Eigen::MatrixXd& f_back =
            dir == 0 ? de_f.flow_backward : de_b.flow_forward;
        Eigen::MatrixXd& df_back = dir == 0 ? dgf.flow_backward : dgb.flow_forward;
        for (int k = 0; k < K; ++k) {
          const int col = r * K + k;
          const Vec3 s = f_out.col(col) + f_back.col(col);
          docc(col) += norm * l1(s);
          const Vec3 ds = norm * occ(col) * sign3(s);
          df_out.col(col) += ds;
          df_back.col(col) += ds;
        }
      }
    }
  }

  // low-level flow regularization
  if (want_reg && coeffs.reg != 0.0) {
    const double nsp = coeffs.reg / sp_pairs;
    const double nb = coeffs.reg / B;
    for (int r = 0; r < R; ++r) {
      for (int k = 0; k < K; ++k) {
        const int col = r * K + k;
        const Vec3 tsum = de.flow_forward.col(col) + de.flow_backward.col(col);
        dg.flow_forward.col(col) += nb * tsum;  // temporal kinetic term
        dg.flow_backward.col(col) += nb * tsum;
        dg.flow_forward.col(col) += nb * sign3(de.flow_forward.col(col));
        dg.flow_backward.col(col) += nb * sign3(de.flow_backward.col(col));
        if (k + 1 < K) {
          const double wd = w_dist(X.col(col), X.col(col + 1));
          for (const auto* ff : {&de.flow_forward, &de.flow_backward}) {
            Eigen::MatrixXd& dff =
                ff == &de.flow_forward ? dg.flow_forward : dg.flow_backward;
            const Vec3 s = sign3(ff->col(col) - ff->col(col + 1));
            dff.col(col) += nsp * wd * s;
            dff.col(col + 1) -= nsp * wd * s;
          }
        }
      }
    }
  }

  if (want_smooth && coeffs.smooth != 0.0 && crf.kind != CrfKind::kNone) {
    tm_accum.d_curve += coeffs.smooth * crf_smoothness_curve_grad(tm_ctx.curve);
  }

  if (want_wb_anchor && coeffs.wb_anchor != 0.0) {
    grads->wb_log += 2.0 * coeffs.wb_anchor * (wb.log_gains - wb.anchor_log_gains);
  }

  // dynamic-only composite backward (weight gradients from flow/photo paths)
  if (need_dyn_comp) {
    for (int r = 0; r < R; ++r) {
      const Eigen::ArrayXd dw = d_wdy.segment(r * K, K);
      if ((dw != 0.0).any()) {
        Eigen::ArrayXd d_sig = Eigen::ArrayXd::Zero(K);
        Eigen::MatrixXd d_val = Eigen::MatrixXd::Zero(3, K);
        composite_backward(comp_dy[r].weights, seg(z, r), scene.z_far,
                           seg_m(de.radiance, r), Vec3::Zero(), dw, 0.0,
                           d_sig, d_val);
        dg.density.segment(r * K, K) += d_sig;
      }
    }
  }

  // Warped evaluations backprop first: their position gradients feed the
  // flow heads of the time-i evaluation.
  if (need_warp) {
    Eigen::MatrixXd pos_grad;
    dynamic_backward(fields, Xf, de_f, dgf, grads->dynamic_mlp, &pos_grad);
    dg.flow_forward += pos_grad;
    dynamic_backward(fields, Xb, de_b, dgb, grads->dynamic_mlp, &pos_grad);
    dg.flow_backward += pos_grad;
  }
  dynamic_backward(fields, X, de, dg, grads->dynamic_mlp, nullptr);
  if (need_combined) {
    static_backward(fields, X, se, sg, grads->static_mlp);
  }
  tm_accum.flush(tm_ctx, grads->crf, grads->wb_log);

  return out;
}

}  // namespace hdrfield
