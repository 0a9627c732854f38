#include "hdrfield/renderer.hpp"

#include <cmath>

namespace hdrfield {

namespace {

Eigen::ArrayXd deltas_from_z(const Eigen::ArrayXd& z, double z_far) {
  const auto n = z.size();
  Eigen::ArrayXd dz(n);
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    dz(k) = z(k + 1) - z(k);
    if (!(dz(k) > 0.0)) {
      throw std::invalid_argument("composite: z must be strictly increasing");
    }
  }
  dz(n - 1) = z_far - z(n - 1);
  if (!(dz(n - 1) > 0.0)) {
    throw std::invalid_argument("composite: z_far must exceed the last sample");
  }
  return dz;
}

struct RaySamples {
  Eigen::ArrayXd z;
  Eigen::MatrixXd x;  // 3 x K
  Eigen::MatrixXd d;  // 3 x K (replicated direction)
};

RaySamples make_samples(const Ray& ray, const RenderOptions& options) {
  RaySamples s;
  s.z.resize(options.samples_per_ray);
  std::mt19937_64 rng(options.seed);
  sample_depths(ray, options.samples_per_ray, options.stratified, rng,
                s.z.data());
  s.x.resize(3, options.samples_per_ray);
  s.d.resize(3, options.samples_per_ray);
  for (int k = 0; k < options.samples_per_ray; ++k) {
    s.x.col(k) = ray.origin + s.z(k) * ray.direction;
    s.d.col(k) = ray.direction;
  }
  return s;
}

}  // namespace

CompositeResult composite(const Eigen::ArrayXd& densities,
                          const Eigen::ArrayXd& z, double z_far,
                          const Eigen::MatrixXd& values) {
  const auto n = densities.size();
  if (z.size() != n || values.cols() != n || values.rows() != 3 || n == 0) {
    throw std::invalid_argument("composite: mismatched input lengths");
  }
  const Eigen::ArrayXd dz = deltas_from_z(z, z_far);
  CompositeResult out;
  out.weights.alpha = 1.0 - (-densities * dz).exp();
  out.weights.transmittance.resize(n);
  out.weights.weight.resize(n);
  double trans = 1.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    out.weights.transmittance(k) = trans;
    out.weights.weight(k) = trans * out.weights.alpha(k);
    trans *= 1.0 - out.weights.alpha(k);
  }
  out.weights.t_background = trans;
  out.color = values * out.weights.weight.matrix();
  return out;
}

void composite_backward(const CompositeWeights& w, const Eigen::ArrayXd& z,
                        double z_far, const Eigen::MatrixXd& values,
                        const Vec3& d_color,
                        const Eigen::ArrayXd& d_weight_extra,
                        double d_t_background, Eigen::ArrayXd& d_sigma,
                        Eigen::MatrixXd& d_values) {
  const auto n = w.weight.size();
  const Eigen::ArrayXd dz = deltas_from_z(z, z_far);
  // g_k = dL/dw_k; suffix_k = sum_{m>k} g_m w_m + dL/dT_bg * T_bg.
  Eigen::ArrayXd g(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    g(k) = d_color.dot(values.col(k));
    if (d_weight_extra.size() != 0) g(k) += d_weight_extra(k);
    d_values.col(k) += w.weight(k) * d_color;
  }
  double suffix = d_t_background * w.t_background;
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    // dL/dsigma_k = dz_k * ((1 - alpha_k) T_k g_k - suffix_k); division-free.
    d_sigma(k) += dz(k) * ((1.0 - w.alpha(k)) * w.transmittance(k) * g(k) - suffix);
    suffix += g(k) * w.weight(k);
  }
}

CombinedRender render_combined(const FieldParams& params, const Ray& ray,
                               double t, const RenderOptions& options) {
  const RaySamples s = make_samples(ray, options);
  StaticEval se;
  eval_static_batch(params, s.x, s.d, se);
  DynamicEval de;
  eval_dynamic_batch(params, s.x, s.d,
                     Eigen::ArrayXd::Constant(s.z.size(), t), de);
  const Eigen::ArrayXd sigma_cb =
      se.blend * se.density + (1.0 - se.blend) * de.density;
  Eigen::MatrixXd blended(3, s.z.size());
  for (Eigen::Index k = 0; k < s.z.size(); ++k) {
    const Vec3 num = se.blend(k) * se.density(k) * se.radiance.col(k) +
                     (1.0 - se.blend(k)) * de.density(k) * de.radiance.col(k);
    blended.col(k) = num / (sigma_cb(k) + kBlendEps);
  }
  CombinedRender out;
  CompositeResult comp = composite(sigma_cb, s.z, ray.z_far, blended);
  out.hdr = comp.color;
  out.weights = comp.weights;
  const double wsum = comp.weights.weight.sum();
  out.depth = (comp.weights.weight * s.z).sum() / (wsum + kExpectationEps);
  return out;
}

Vec3 render_static_only(const FieldParams& params, const Ray& ray,
                        const RenderOptions& options) {
  const RaySamples s = make_samples(ray, options);
  StaticEval se;
  eval_static_batch(params, s.x, s.d, se);
  return composite(se.density, s.z, ray.z_far, se.radiance).color;
}

Vec3 render_dynamic_only(const FieldParams& params, const Ray& ray, double t,
                         const RenderOptions& options) {
  const RaySamples s = make_samples(ray, options);
  DynamicEval de;
  eval_dynamic_batch(params, s.x, s.d,
                     Eigen::ArrayXd::Constant(s.z.size(), t), de);
  return composite(de.density, s.z, ray.z_far, de.radiance).color;
}

Vec3 render_warped(const FieldParams& params, const Ray& ray, double t_src,
                   double t_dst, FlowDir dir, const RenderOptions& options) {
  const RaySamples s = make_samples(ray, options);
  DynamicEval de_src;
  eval_dynamic_batch(params, s.x, s.d,
                     Eigen::ArrayXd::Constant(s.z.size(), t_src), de_src);
  const Eigen::MatrixXd& flow =
      dir == FlowDir::kForward ? de_src.flow_forward : de_src.flow_backward;
  const Eigen::MatrixXd warped = s.x + flow;
  DynamicEval de_dst;
  eval_dynamic_batch(params, warped, s.d,
                     Eigen::ArrayXd::Constant(s.z.size(), t_dst), de_dst);
  return composite(de_dst.density, s.z, ray.z_far, de_dst.radiance).color;
}

ExpectedFlow render_expected_flow(const FieldParams& params, const Ray& ray,
                                  double t, FlowDir dir,
                                  const RenderOptions& options) {
  const RaySamples s = make_samples(ray, options);
  DynamicEval de;
  eval_dynamic_batch(params, s.x, s.d,
                     Eigen::ArrayXd::Constant(s.z.size(), t), de);
  const CompositeResult comp = composite(de.density, s.z, ray.z_far, de.radiance);
  ExpectedFlow out;
  out.weight_sum = comp.weights.weight.sum();
  out.valid = out.weight_sum >= kMinFlowWeight;
  const double norm = 1.0 / (out.weight_sum + kExpectationEps);
  const Eigen::MatrixXd& flow =
      dir == FlowDir::kForward ? de.flow_forward : de.flow_backward;
  out.position = (s.x * comp.weights.weight.matrix()) * norm;
  out.flow = (flow * comp.weights.weight.matrix()) * norm;
  return out;
}

ImageRender render_image(const FieldParams& params, const CameraModel& camera,
                         double t, double z_near, double z_far,
                         const RenderOptions& options) {
  ImageRender out;
  out.hdr = Image(camera.width, camera.height, 3);
  out.depth = Image(camera.width, camera.height, 1);
  out.static_hdr = Image(camera.width, camera.height, 3);
  out.dynamic_share = Image(camera.width, camera.height, 1);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const Ray ray = generate_ray(camera, Vec2(x + 0.5, y + 0.5), z_near, z_far);
      const RaySamples s = make_samples(ray, options);
      StaticEval se;
      eval_static_batch(params, s.x, s.d, se);
      DynamicEval de;
      eval_dynamic_batch(params, s.x, s.d,
                         Eigen::ArrayXd::Constant(s.z.size(), t), de);
      const Eigen::ArrayXd sigma_st = se.blend * se.density;
      const Eigen::ArrayXd sigma_dy = (1.0 - se.blend) * de.density;
      const Eigen::ArrayXd sigma_cb = sigma_st + sigma_dy;
      Eigen::MatrixXd blended(3, s.z.size());
      for (Eigen::Index k = 0; k < s.z.size(); ++k) {
        blended.col(k) = (sigma_st(k) * se.radiance.col(k) +
                          sigma_dy(k) * de.radiance.col(k)) /
                         (sigma_cb(k) + kBlendEps);
      }
      const CompositeResult comp = composite(sigma_cb, s.z, z_far, blended);
      out.hdr.set_rgb(x, y, comp.color);
      const double wsum = comp.weights.weight.sum();
      out.depth.at(x, y, 0) =
          (comp.weights.weight * s.z).sum() / (wsum + kExpectationEps);
      out.static_hdr.set_rgb(
          x, y, composite(se.density, s.z, z_far, se.radiance).color);
      // Fraction of compositing mass explained by the dynamic branch.
      const Eigen::ArrayXd share = sigma_dy / (sigma_cb + kBlendEps);
      out.dynamic_share.at(x, y, 0) =
          (comp.weights.weight * share).sum() / (wsum + kExpectationEps);
    }
  }
  return out;
}

}  // namespace hdrfield
