#include "hdrfield/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace hdrfield {

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Image gaussian3(const Image& img) {
  static const double k[3] = {0.25, 0.5, 0.25};
  Image tmp = img, out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int d = -1; d <= 1; ++d) {
          const int xx = std::clamp(x + d, 0, img.width - 1);
          acc += k[d + 1] * img.at(xx, y, c);
        }
        tmp.at(x, y, c) = acc;
      }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int d = -1; d <= 1; ++d) {
          const int yy = std::clamp(y + d, 0, img.height - 1);
          acc += k[d + 1] * tmp.at(x, yy, c);
        }
        out.at(x, y, c) = acc;
      }
  return out;
}

}  // namespace

std::uint64_t TrainConfig::config_hash() const {
  std::ostringstream os;
  os.precision(17);
  os << steps << "|" << batch_rays << "|" << samples_per_ray << "|" << lr << "|"
     << adam_beta1 << "|" << adam_beta2 << "|" << adam_eps << "|" << half_life()
     << "|" << seed << "|" << weights.beta_data << "|" << weights.beta_depth
     << "|" << weights.beta_reg << "|" << weights.beta_smooth << "|"
     << weights.beta_gen << "|" << t_warm() << "|" << weights.p_gen << "|"
     << weights.squared_photometric << "|" << weights.occlusion_weighted_photo
     << "|" << to_string(crf_kind) << "|" << fixed_gamma << "|" << leak_alpha
     << "|" << static_cast<int>(wb_sharing) << "|"
     << field_config.encoding.num_frequencies_position << "|"
     << field_config.encoding.num_frequencies_direction << "|"
     << field_config.encoding.num_frequencies_time << "|"
     << field_config.encoding.include_identity << "|"
     << field_config.static_hidden_layers << "|"
     << field_config.static_hidden_width << "|"
     << field_config.dynamic_hidden_layers << "|"
     << field_config.dynamic_hidden_width << "|" << enhancer << "|"
     << novel_view_downscale << "|" << perturb_rot_deg << "|"
     << perturb_trans_frac << "|" << patch_size << "|"
     << static_cast<int>(phi_kind) << "|" << phi_dim;
  const std::string s = os.str();
  return fnv1a(s.data(), s.size());
}

Enhancer make_enhancer(const std::string& name) {
  if (name == "id") {
    return [](const EnhancerContext& ctx) {
      Image out = ctx.rendered;
      for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
      return out;
    };
  }
  if (name == "oracle") {
    return [](const EnhancerContext& ctx) {
      if (ctx.scene == nullptr) {
        throw std::runtime_error("oracle enhancer needs a scene");
      }
      return oracle_ldr(*ctx.scene, ctx.camera, ctx.frame_pos,
                        ctx.exposure_scale);
    };
  }
  if (name == "blur") {
    return [](const EnhancerContext& ctx) {
      const Image blurred = gaussian3(ctx.rendered);
      Image out = ctx.rendered;
      for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = std::clamp(
            ctx.rendered.data[i] + 0.8 * (ctx.rendered.data[i] - blurred.data[i]),
            0.0, 1.0);
      }
      return out;
    };
  }
  throw std::invalid_argument("unknown enhancer: " + name);
}

TrainState init_state(const TrainConfig& config, const DatasetBundle& bundle) {
  if (bundle.frames.empty() || bundle.ldr.size() != bundle.frames.size()) {
    throw std::invalid_argument("trainer: dataset has missing frames");
  }
  if (bundle.spec.width != bundle.ldr[0].width ||
      bundle.spec.height != bundle.ldr[0].height) {
    throw std::invalid_argument("trainer: dataset/config size mismatch");
  }
  TrainState state;
  state.fields = init_params(config.field_config, mix_seed(config.seed, 1));
  switch (config.crf_kind) {
    case CrfKind::kPiecewise:
      state.crf = CrfParams::piecewise_identity();
      break;
    case CrfKind::kFixed:
      state.crf = CrfParams::fixed(config.fixed_gamma);
      break;
    case CrfKind::kMlp:
      state.crf = CrfParams::mlp_crf(mix_seed(config.seed, 3));
      break;
    case CrfKind::kNone:
      state.crf = CrfParams::none();
      break;
  }
  state.crf.leak_alpha = config.leak_alpha;

  // Reference frame: the first mid-exposure frame pins the radiance scale.
  int reference = 0;
  for (std::size_t f = 0; f < bundle.frames.size(); ++f) {
    if (bundle.frames[f].exposure_tag == ExposureTag::kMid) {
      reference = static_cast<int>(f);
      break;
    }
  }
  std::vector<int> tags(bundle.frames.size());
  for (std::size_t f = 0; f < bundle.frames.size(); ++f) {
    tags[f] = static_cast<int>(bundle.frames[f].exposure_tag);
  }
  state.wb = WhiteBalance::identity(static_cast<int>(bundle.frames.size()),
                                    config.wb_sharing, tags, reference);
  // Exposure enters the tone-mapper through the gains: start each column at
  // the capture protocol's scale ratio to the reference frame and anchor it
  // there (the curve/gain factorization is otherwise gauge-free).
  const double ref_scale = bundle.frames[reference].exposure_scale;
  for (std::size_t f = 0; f < bundle.frames.size(); ++f) {
    const int col = state.wb.frame_to_column[f];
    state.wb.log_gains.col(col).setConstant(
        std::log(bundle.frames[f].exposure_scale / ref_scale));
  }
  state.wb.anchor_log_gains = state.wb.log_gains;

  const std::int64_t n = flat_parameter_count(state.fields, state.crf, state.wb);
  state.adam_m = Eigen::VectorXd::Zero(n);
  state.adam_v = Eigen::VectorXd::Zero(n);
  state.adam_t = 0;
  state.rng.seed(mix_seed(config.seed, 2));
  state.step = 0;
  state.weights = config.weights;
  state.weights.t_warm = config.t_warm();
  state.config_hash = config.config_hash();
  return state;
}

SupervisionBatch sample_batch(TrainState& state, const DatasetBundle& bundle,
                              const TrainConfig& config) {
  SupervisionBatch batch;
  batch.samples_per_ray = config.samples_per_ray;
  batch.stratified = true;
  const int F = static_cast<int>(bundle.frames.size());
  std::uniform_int_distribution<int> frame_dist(0, F - 1);
  std::uniform_int_distribution<int> x_dist(0, bundle.spec.width - 1);
  std::uniform_int_distribution<int> y_dist(0, bundle.spec.height - 1);
  batch.rays.reserve(config.batch_rays);
  for (int i = 0; i < config.batch_rays; ++i) {
    const int f = frame_dist(state.rng);
    const int x = x_dist(state.rng);
    const int y = y_dist(state.rng);
    RayObservation obs;
    obs.frame = f;
    obs.pixel = Vec2(x + 0.5, y + 0.5);
    obs.color = bundle.ldr[f].rgb(x, y);
    if (f + 1 < F && bundle.flow_forward_valid[f].at(x, y, 0) > 0.5) {
      obs.flow_forward = Vec2(bundle.flow_forward[f].at(x, y, 0),
                              bundle.flow_forward[f].at(x, y, 1));
    }
    if (f > 0 && bundle.flow_backward_valid[f].at(x, y, 0) > 0.5) {
      obs.flow_backward = Vec2(bundle.flow_backward[f].at(x, y, 0),
                               bundle.flow_backward[f].at(x, y, 1));
    }
    obs.depth = bundle.depth[f].at(x, y, 0);
    batch.rays.push_back(obs);
  }
  batch.sample_seed = state.rng();
  return batch;
}

GenerativeStep maybe_generative_step(TrainState& state,
                                     const DatasetBundle& bundle,
                                     const TrainConfig& config,
                                     const Enhancer& enhancer,
                                     Gradients* grads) {
  GenerativeStep out;
  if (!generative_gate(state.weights, state.step,
                       mix_seed(config.seed, 0xA11CE))) {
    return out;
  }
  out.fired = true;

  // Deterministic per-step stream, independent of the batch sampler.
  std::mt19937_64 rng(
      mix_seed(config.seed, 0xF00D ^ static_cast<std::uint64_t>(state.step)));
  std::uniform_int_distribution<int> frame_dist(
      0, static_cast<int>(bundle.frames.size()) - 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const int ref = frame_dist(rng);
  const FrameMeta& meta = bundle.frames[ref];

  // Perturb the training camera: small rotation about right/up axes plus a
  // translation proportional to the scene scale.
  const double rot_scale = config.perturb_rot_deg * M_PI / 180.0;
  const double ax = unit(rng) * rot_scale;
  const double ay = unit(rng) * rot_scale;
  const double scene_scale =
      (bundle.spec.look_target - bundle.spec.eye_from).norm();
  Vec3 dt(unit(rng), unit(rng), unit(rng));
  dt *= config.perturb_trans_frac * scene_scale;

  const int ds = std::max(1, config.novel_view_downscale);
  CameraModel cam = meta.camera;
  cam.width = meta.camera.width / ds;
  cam.height = meta.camera.height / ds;
  cam.focal = meta.camera.focal / ds;
  cam.principal = meta.camera.principal / ds;
  const Mat3 rx = Eigen::AngleAxisd(ax, Vec3::UnitX()).toRotationMatrix();
  const Mat3 ry = Eigen::AngleAxisd(ay, Vec3::UnitY()).toRotationMatrix();
  const Vec3 eye = meta.camera.center() + dt;
  cam.rotation = rx * ry * meta.camera.rotation;
  cam.translation = -cam.rotation * eye;

  // Differentiable render of the novel view (combined model, training CRF).
  const int W = cam.width, H = cam.height, K = config.samples_per_ray;
  const int B = W * H * K;
  Eigen::ArrayXd z(B);
  Eigen::MatrixXd X(3, B), D(3, B);
  std::mt19937_64 jitter(rng());
  std::vector<Ray> rays(static_cast<std::size_t>(W) * H);
  for (int p = 0; p < W * H; ++p) {
    const int x = p % W, y = p / W;
    rays[p] = generate_ray(cam, Vec2(x + 0.5, y + 0.5), bundle.spec.z_near,
                           bundle.spec.z_far);
    sample_depths(rays[p], K, false, jitter, z.data() + p * K);
    for (int k = 0; k < K; ++k) {
      const int col = p * K + k;
      X.col(col) = rays[p].origin + z(col) * rays[p].direction;
      D.col(col) = rays[p].direction;
    }
  }
  StaticEval se;
  eval_static_batch(state.fields, X, D, se);
  DynamicEval de;
  eval_dynamic_batch(state.fields, X, D,
                     Eigen::ArrayXd::Constant(B, meta.time), de);
  const Eigen::ArrayXd sigma_cb =
      se.blend * se.density + (1.0 - se.blend) * de.density;
  Eigen::MatrixXd blended(3, B);
  for (int col = 0; col < B; ++col) {
    const Vec3 num = se.blend(col) * se.density(col) * se.radiance.col(col) +
                     (1.0 - se.blend(col)) * de.density(col) * de.radiance.col(col);
    blended.col(col) = num / (sigma_cb(col) + kBlendEps);
  }
  TonemapContext tm_ctx(state.crf, state.wb);
  std::vector<CompositeResult> comps(static_cast<std::size_t>(W) * H);
  std::vector<TonemapCache> tm_caches(static_cast<std::size_t>(W) * H);
  out.rendered = Image(W, H, 3);
  for (int p = 0; p < W * H; ++p) {
    comps[p] = composite(sigma_cb.segment(p * K, K), z.segment(p * K, K),
                         bundle.spec.z_far, blended.middleCols(p * K, K));
    const Vec3 ldr =
        tonemap_forward(tm_ctx, ref, comps[p].color, true, tm_caches[p]);
    out.rendered.set_rgb(p % W, p / W, ldr);
  }

  const Image reference_img = downscale(bundle.ldr[ref], ds);
  EnhancerContext ectx{out.rendered,        reference_img,
                       cam,                 bundle.original_index(ref) + 0.0,
                       meta.exposure_scale, &bundle.spec};
  out.enhanced = enhancer(ectx);
  if (!out.enhanced.same_shape(out.rendered)) {
    throw std::runtime_error("enhancer output shape mismatch");
  }
  for (double& v : out.enhanced.data) v = std::clamp(v, 0.0, 1.0);

  // Patch-wise perceptual loss on a non-overlapping grid.
  const int ps = config.patch_size;
  const int px = W / ps, py = H / ps;
  if (px == 0 || py == 0) {
    throw std::runtime_error("novel view smaller than one patch");
  }
  PatchEncoder phi = config.phi_kind == PatchEncoder::Kind::kIdentity
                         ? PatchEncoder::identity()
                         : PatchEncoder::random_linear(
                               3 * ps * ps, config.phi_dim,
                               mix_seed(config.seed, 0x9111));
  const int patch_dim = 3 * ps * ps;
  const int n_patches = px * py;
  double acc = 0.0;
  Image d_rendered(W, H, 3);  // dL/d rendered pixels (unweighted)
  for (int pyi = 0; pyi < py; ++pyi) {
    for (int pxi = 0; pxi < px; ++pxi) {
      Eigen::VectorXd rp(patch_dim), ep(patch_dim);
      int idx = 0;
      for (int dy = 0; dy < ps; ++dy)
        for (int dx = 0; dx < ps; ++dx)
          for (int c = 0; c < 3; ++c, ++idx) {
            rp(idx) = out.rendered.at(pxi * ps + dx, pyi * ps + dy, c);
            ep(idx) = out.enhanced.at(pxi * ps + dx, pyi * ps + dy, c);
          }
      const Eigen::VectorXd diff = phi.apply(rp) - phi.apply(ep);
      acc += diff.cwiseAbs().mean();
      if (grads != nullptr) {
        const Eigen::VectorXd d_feat =
            diff.unaryExpr([](double v) { return sgn(v); }) /
            (static_cast<double>(diff.size()) * n_patches);
        const Eigen::VectorXd d_patch =
            phi.kind == PatchEncoder::Kind::kIdentity
                ? d_feat
                : Eigen::VectorXd(phi.projection.transpose() * d_feat);
        idx = 0;
        for (int dy = 0; dy < ps; ++dy)
          for (int dx = 0; dx < ps; ++dx)
            for (int c = 0; c < 3; ++c, ++idx)
              d_rendered.at(pxi * ps + dx, pyi * ps + dy, c) = d_patch(idx);
      }
    }
  }
  out.value = acc / n_patches;

  if (grads != nullptr) {
    const double coeff = state.weights.beta_gen;
    TonemapGradAccum tm_accum(tm_ctx);
    StaticGradIn sg;
    sg.setZero(B);
    DynamicGradIn dg;
    dg.setZero(B);
    Eigen::ArrayXd d_sigma_cb = Eigen::ArrayXd::Zero(B);
    Eigen::MatrixXd d_blended = Eigen::MatrixXd::Zero(3, B);
    for (int p = 0; p < W * H; ++p) {
      const Vec3 d_ldr = coeff * d_rendered.rgb(p % W, p / W);
      if (d_ldr.isZero(0.0)) continue;
      const Vec3 d_color = tonemap_backward(tm_ctx, tm_caches[p], d_ldr, tm_accum);
      Eigen::ArrayXd d_sig = Eigen::ArrayXd::Zero(K);
      Eigen::MatrixXd d_val = Eigen::MatrixXd::Zero(3, K);
      composite_backward(comps[p].weights, z.segment(p * K, K),
                         bundle.spec.z_far, blended.middleCols(p * K, K),
                         d_color, Eigen::ArrayXd(), 0.0, d_sig, d_val);
      d_sigma_cb.segment(p * K, K) += d_sig;
      d_blended.middleCols(p * K, K) += d_val;
    }
    for (int col = 0; col < B; ++col) {
      const double v = se.blend(col);
      const double sst = se.density(col);
      const double sdy = de.density(col);
      const double inv = 1.0 / (sigma_cb(col) + kBlendEps);
      const Vec3 db = d_blended.col(col);
      double d_scb = d_sigma_cb(col) - db.dot(blended.col(col)) * inv;
      const Vec3 dnum = db * inv;
      sg.radiance.col(col) += dnum * (v * sst);
      dg.radiance.col(col) += dnum * ((1.0 - v) * sdy);
      sg.density(col) += v * dnum.dot(se.radiance.col(col)) + d_scb * v;
      dg.density(col) +=
          (1.0 - v) * dnum.dot(de.radiance.col(col)) + d_scb * (1.0 - v);
      sg.blend(col) += dnum.dot(sst * se.radiance.col(col) -
                                sdy * de.radiance.col(col)) +
                       d_scb * (sst - sdy);
    }
    dynamic_backward(state.fields, X, de, dg, grads->dynamic_mlp, nullptr);
    static_backward(state.fields, X, se, sg, grads->static_mlp);
    tm_accum.flush(tm_ctx, grads->crf, grads->wb_log);
  }
  return out;
}

namespace {

void check_finite(const LossBreakdown& bd, std::int64_t step) {
  const std::pair<const char*, double> terms[] = {
      {"cb", bd.cb},     {"photo", bd.photo},   {"flow", bd.flow},
      {"depth", bd.depth}, {"cyc", bd.cyc},     {"sp", bd.reg_sp},
      {"temp", bd.reg_temp}, {"min", bd.reg_min}, {"smooth", bd.smooth},
      {"wb", bd.wb_anchor}, {"gen", bd.gen}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      throw std::runtime_error("non-finite loss term '" + std::string(name) +
                               "' at step " + std::to_string(step));
    }
  }
}

void adam_update(TrainState& state, const TrainConfig& config,
                 const Eigen::VectorXd& grad) {
  state.adam_t += 1;
  const double lr =
      config.lr * std::pow(2.0, -static_cast<double>(state.step) /
                                     config.half_life());
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.adam_t));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.adam_t));
  state.adam_m = b1 * state.adam_m + (1.0 - b1) * grad;
  state.adam_v =
      b2 * state.adam_v + (1.0 - b2) * grad.cwiseProduct(grad);
  // The tone-mapper's parameters see far fewer effective samples per bin
  // than the field weights; give them a faster clock.
  const std::int64_t crf_begin =
      state.fields.static_mlp.parameter_count() +
      state.fields.dynamic_mlp.parameter_count();
  const std::int64_t crf_end = crf_begin + state.crf.parameter_count();
  Eigen::VectorXd flat =
      flatten_parameters(state.fields, state.crf, state.wb);
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    const double mhat = state.adam_m(i) / bias1;
    const double vhat = state.adam_v(i) / bias2;
    const double scale =
        (i >= crf_begin && i < crf_end) ? config.crf_lr_scale : 1.0;
    flat(i) -= lr * scale * mhat / (std::sqrt(vhat) + config.adam_eps);
  }
  unflatten_parameters(flat, state.fields, state.crf, state.wb);
}

}  // namespace

StepResult train_step(TrainState& state, const DatasetBundle& bundle,
                      const TrainConfig& config, const Enhancer* enhancer) {
  const SceneContext ctx = bundle.context();
  SupervisionBatch batch = sample_batch(state, bundle, config);

  Gradients grads = Gradients::zeros_like(state.fields, state.crf, state.wb);
  StepResult result;
  double gen_value = 0.0;
  bool gen_fired = false;
  if (enhancer != nullptr && !config.enhancer.empty()) {
    try {
      GenerativeStep gen =
          maybe_generative_step(state, bundle, config, *enhancer, &grads);
      gen_fired = gen.fired;
      gen_value = gen.value;
    } catch (const std::exception& e) {
      result.enhancer_failed = true;
      std::cerr << "warning: enhancer failed at step " << state.step << ": "
                << e.what() << "; continuing without L_gen\n";
    }
  }
  result.losses = total_loss(state.fields, state.crf, state.wb, ctx, batch,
                             state.weights, state.step, &grads, gen_value,
                             gen_fired);
  check_finite(result.losses, state.step);

  Eigen::VectorXd flat_grad =
      flatten_gradients(grads, state.fields, state.crf, state.wb);
  // Freeze the reference white-balance column (and, with no tone-mapping,
  // the whole exposure model).
  const std::int64_t wb_offset =
      flat_grad.size() - state.wb.log_gains.size();
  if (state.crf.kind == CrfKind::kNone) {
    flat_grad.segment(wb_offset, state.wb.log_gains.size()).setZero();
  } else {
    flat_grad.segment(wb_offset + 3 * state.wb.reference_column, 3).setZero();
  }
  adam_update(state, config, flat_grad);
  state.step += 1;
  return result;
}

Checkpoint state_to_checkpoint(const TrainState& state) {
  Checkpoint ckpt;
  ckpt.fields = state.fields;
  ckpt.crf = state.crf;
  ckpt.wb = state.wb;
  ckpt.step = state.step;
  ckpt.config_hash = state.config_hash;
  ckpt.adam_m = state.adam_m;
  ckpt.adam_v = state.adam_v;
  ckpt.adam_t = state.adam_t;
  std::ostringstream os;
  os << state.rng;
  ckpt.rng_state = os.str();
  return ckpt;
}

TrainState state_from_checkpoint(const Checkpoint& ckpt,
                                 const TrainConfig& config) {
  if (ckpt.config_hash != config.config_hash()) {
    throw std::invalid_argument("checkpoint/config mismatch");
  }
  TrainState state;
  state.fields = ckpt.fields;
  state.crf = ckpt.crf;
  state.wb = ckpt.wb;
  state.adam_m = ckpt.adam_m;
  state.adam_v = ckpt.adam_v;
  state.adam_t = ckpt.adam_t;
  state.step = ckpt.step;
  state.weights = config.weights;
  state.weights.t_warm = config.t_warm();
  state.config_hash = ckpt.config_hash;
  std::istringstream is(ckpt.rng_state);
  is >> state.rng;
  return state;
}

Checkpoint run(const TrainConfig& config, const DatasetBundle& bundle,
               const std::string& out_dir, const std::string& resume_from) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  TrainState state = resume_from.empty()
                         ? init_state(config, bundle)
                         : state_from_checkpoint(
                               load_checkpoint(resume_from), config);
  Enhancer enhancer;
  if (!config.enhancer.empty()) enhancer = make_enhancer(config.enhancer);

  std::ofstream log(out_dir + "/losses.log", std::ios::app);
  log.precision(10);
  while (state.step < config.steps) {
    const std::int64_t step = state.step;
    const StepResult r = train_step(state, bundle, config,
                                    enhancer ? &enhancer : nullptr);
    const LossBreakdown& b = r.losses;
    log << step << " cb " << b.cb << "\n"
        << step << " photo " << b.photo << "\n"
        << step << " flow " << b.flow << "\n"
        << step << " depth " << b.depth << "\n"
        << step << " cyc " << b.cyc << "\n"
        << step << " sp " << b.reg_sp << "\n"
        << step << " temp " << b.reg_temp << "\n"
        << step << " min " << b.reg_min << "\n"
        << step << " smooth " << b.smooth << "\n"
        << step << " wb " << b.wb_anchor << "\n"
        << step << " gen " << b.gen << "\n"
        << step << " total " << b.total << "\n";
    if (config.checkpoint_every > 0 &&
        state.step % config.checkpoint_every == 0 &&
        state.step < config.steps) {
      save_checkpoint(out_dir + "/checkpoint_latest.bin",
                      state_to_checkpoint(state));
    }
  }
  const Checkpoint final_ckpt = state_to_checkpoint(state);
  save_checkpoint(out_dir + "/checkpoint_final.bin", final_ckpt);
  return final_ckpt;
}

}  // namespace hdrfield
