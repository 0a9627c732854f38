#include <doctest.h>

#include <random>

#include "hdrfield/renderer.hpp"
#include "test_util.hpp"

using namespace hdrfield;
using hdrfield::testing::activation_bias;
using hdrfield::testing::make_head_constant;
using hdrfield::testing::tiny_field_config;

TEST_CASE("composite: empty space, single sample, saturation") {
  Eigen::ArrayXd z(3);
  z << 1.0, 2.0, 3.0;
  Eigen::MatrixXd values = Eigen::MatrixXd::Ones(3, 3);

  const CompositeResult empty = composite(Eigen::ArrayXd::Zero(3), z, 4.0, values);
  CHECK(empty.color.norm() == 0.0);
  CHECK(empty.weights.t_background == doctest::Approx(1.0).epsilon(1e-15));

  Eigen::ArrayXd z1(1);
  z1 << 1.0;
  Eigen::ArrayXd sig1(1);
  sig1 << 1.0;
  const CompositeResult one = composite(sig1, z1, 1.5, Eigen::MatrixXd::Ones(3, 1));
  CHECK(one.weights.alpha(0) ==
        doctest::Approx(0.3934693402873666).epsilon(1e-12));

  Eigen::ArrayXd sig(3);
  sig << 20.0, 1.0, 1.0;
  Eigen::MatrixXd vals(3, 3);
  vals.col(0) = Vec3(0.9, 0.2, 0.4);
  vals.col(1) = Vec3(0.0, 1.0, 0.0);
  vals.col(2) = Vec3(0.0, 0.0, 1.0);
  const CompositeResult sat = composite(sig, z, 4.0, vals);
  CHECK((sat.color - Vec3(0.9, 0.2, 0.4)).cwiseAbs().maxCoeff() < 1e-8);

  Eigen::ArrayXd bad_z(3);
  bad_z << 1.0, 1.0, 3.0;
  CHECK_THROWS_AS(composite(sig, bad_z, 4.0, vals), std::invalid_argument);
}

TEST_CASE("composite weights telescope to one") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(unit(rng) * 30);
    Eigen::ArrayXd z(n), sig(n);
    double acc = 1.0;
    for (int k = 0; k < n; ++k) {
      acc += 0.05 + unit(rng);
      z(k) = acc;
      sig(k) = 3.0 * unit(rng);
    }
    const CompositeResult r =
        composite(sig, z, acc + 1.0, Eigen::MatrixXd::Ones(3, n));
    CHECK(std::abs(r.weights.weight.sum() + r.weights.t_background - 1.0) <
          1e-9);
    for (int k = 1; k < n; ++k) {
      CHECK(r.weights.transmittance(k) <= r.weights.transmittance(k - 1) + 1e-15);
    }
  }
}

// Midpoint compositing against the closed-form transmittance of a
// two-region piecewise-constant density, averaged over a dense sweep of
// boundary phases.
TEST_CASE("quadrature converges to closed form, error halving with samples") {
  const double z_near = 1.0, z_far = 2.0;
  const double sig_hi = 0.8, sig_lo = 0.1;
  const Vec3 c_hi(1.0, 0.4, 0.2), c_lo(0.1, 0.8, 0.6);
  auto closed_T = [&](double b) {
    return std::exp(-(sig_hi * (b - z_near) + sig_lo * (z_far - b)));
  };
  auto closed_color = [&](double b) {
    const double t_mid = std::exp(-sig_hi * (b - z_near));
    return Vec3(c_hi * (1.0 - t_mid) + c_lo * (t_mid - closed_T(b)));
  };
  auto run = [&](int n) {
    double err_t = 0.0, err_c = 0.0;
    const int phases = 512;
    for (int p = 0; p < phases; ++p) {
      const double b = 1.375 + 0.25 * (p + 0.5) / phases;
      Eigen::ArrayXd z(n), sig(n);
      Eigen::MatrixXd vals(3, n);
      const double bin = (z_far - z_near) / n;
      for (int k = 0; k < n; ++k) {
        z(k) = z_near + (k + 0.5) * bin;
        const bool hi = z(k) < b;
        sig(k) = hi ? sig_hi : sig_lo;
        vals.col(k) = hi ? c_hi : c_lo;
      }
      const CompositeResult r = composite(sig, z, z_far, vals);
      err_t += std::abs(r.weights.t_background - closed_T(b));
      err_c += (r.color - closed_color(b)).cwiseAbs().maxCoeff();
    }
    return std::pair<double, double>(err_t / phases, err_c / phases);
  };
  const auto [t16, c16] = run(16);
  const auto [t32, c32] = run(32);
  const auto [t64, c64] = run(64);
  const auto [t128, c128] = run(128);
  CHECK(t128 < 1e-3);
  CHECK(c128 < 2e-3);
  CHECK(t32 <= 0.505 * t16);
  CHECK(t64 <= 0.505 * t32);
  CHECK(t128 <= 0.505 * t64);
  CHECK(c128 <= 0.505 * c64);
}

namespace {
Ray test_ray() {
  Ray ray;
  ray.origin = Vec3(0.05, -0.1, -3.0);
  ray.direction = Vec3(0.08, 0.05, 1.0).normalized();
  ray.z_near = 3.0;
  ray.z_far = 10.0;
  return ray;
}
}  // namespace

TEST_CASE("blend degenerate: v=1 equals static render, v=0 dynamic") {
  FieldParams params = init_params(tiny_field_config(), 9);
  RenderOptions options;
  options.samples_per_ray = 16;
  const Ray ray = test_ray();

  make_head_constant(params.static_mlp, 2, Eigen::VectorXd::Constant(1, 40.0));
  Vec3 combined = render_combined(params, ray, 0.3, options).hdr;
  Vec3 st = render_static_only(params, ray, options);
  CHECK((combined - st).cwiseAbs().maxCoeff() < 1e-9);

  make_head_constant(params.static_mlp, 2, Eigen::VectorXd::Constant(1, -40.0));
  combined = render_combined(params, ray, 0.3, options).hdr;
  const Vec3 dy = render_dynamic_only(params, ray, 0.3, options);
  CHECK((combined - dy).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("combined render matches an independent per-sample computation") {
  FieldParams params = init_params(tiny_field_config(), 31);
  // v = 0.5, equal densities; radiances approximately (1,eps,eps)/(eps,1,eps).
  make_head_constant(params.static_mlp, 2, Eigen::VectorXd::Zero(1));  // v=0.5
  make_head_constant(params.static_mlp, 1,
                     activation_bias(Eigen::VectorXd::Constant(1, 0.7)));
  make_head_constant(params.dynamic_mlp, 1,
                     activation_bias(Eigen::VectorXd::Constant(1, 0.7)));
  Eigen::VectorXd rad_st(3), rad_dy(3);
  rad_st << 1.0, 1e-4, 1e-4;
  rad_dy << 1e-4, 1.0, 1e-4;
  make_head_constant(params.static_mlp, 0, activation_bias(rad_st));
  make_head_constant(params.dynamic_mlp, 0, activation_bias(rad_dy));

  RenderOptions options;
  options.samples_per_ray = 2;
  const Ray ray = test_ray();
  const CombinedRender r = render_combined(params, ray, 0.4, options);

  // Spreadsheet-style evaluation from the field outputs.
  const auto samples = sample_along_ray(ray, 2, false, 0);
  double trans = 1.0;
  Vec3 expect = Vec3::Zero();
  double wsum = 0.0, wz = 0.0;
  for (int k = 0; k < 2; ++k) {
    const auto [z, x] = samples[k];
    const FieldOutputStatic st = eval_static(params, x, ray.direction);
    const FieldOutputDynamic dy =
        eval_dynamic(params, x, ray.direction, 0.4);
    const double sigma =
        st.blend * st.density + (1.0 - st.blend) * dy.density;
    const Vec3 value = (st.blend * st.density * st.radiance +
                        (1.0 - st.blend) * dy.density * dy.radiance) /
                       sigma;
    const double dz = k == 0 ? samples[1].first - samples[0].first
                             : ray.z_far - samples[1].first;
    const double alpha = 1.0 - std::exp(-sigma * dz);
    expect += trans * alpha * value;
    wz += trans * alpha * z;
    wsum += trans * alpha;
    trans *= 1.0 - alpha;
  }
  CHECK((r.hdr - expect).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(r.depth == doctest::Approx(wz / (wsum + 1e-8)).epsilon(1e-9));
  // Per-sample blended value is the mean of the two radiances.
  const Vec3 mean_val = 0.5 * (rad_st + rad_dy);
  const FieldOutputStatic st0 =
      eval_static(params, samples[0].second, ray.direction);
  (void)st0;
  CHECK((expect / wsum - mean_val).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("warped render at zero-init flow equals the direct dynamic render") {
  const FieldParams params = init_params(tiny_field_config(), 12);
  RenderOptions options;
  options.samples_per_ray = 12;
  const Ray ray = test_ray();
  const Vec3 warped =
      render_warped(params, ray, 0.25, 0.5, FlowDir::kForward, options);
  const Vec3 direct = render_dynamic_only(params, ray, 0.5, options);
  CHECK(warped == direct);  // bitwise at 64-bit
}

TEST_CASE("warped render with constant flow and time-invariant field") {
  FieldParams params = init_params(tiny_field_config(), 13);
  // Constant outputs make the dynamic field trivially time-invariant.
  Eigen::VectorXd rad(3);
  rad << 0.6, 0.3, 0.2;
  make_head_constant(params.dynamic_mlp, 0, activation_bias(rad));
  make_head_constant(params.dynamic_mlp, 1,
                     activation_bias(Eigen::VectorXd::Constant(1, 0.4)));
  Eigen::VectorXd flow(3);
  flow << 0.3, -0.2, 0.1;
  make_head_constant(params.dynamic_mlp, 2, flow);

  RenderOptions options;
  options.samples_per_ray = 10;
  const Ray ray = test_ray();
  const Vec3 warped =
      render_warped(params, ray, 0.2, 0.4, FlowDir::kForward, options);
  const Vec3 direct = render_dynamic_only(params, ray, 0.2, options);
  CHECK((warped - direct).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("depth of an opaque wall sits within one bin width") {
  const int n = 32;
  const double z_near = 2.0, z_far = 8.0, wall = 5.3;
  Eigen::ArrayXd z(n), sig(n);
  const double bin = (z_far - z_near) / n;
  for (int k = 0; k < n; ++k) {
    z(k) = z_near + (k + 0.5) * bin;
    sig(k) = z(k) >= wall ? 500.0 : 0.0;
  }
  const CompositeResult r = composite(sig, z, z_far, Eigen::MatrixXd::Ones(3, n));
  const double depth =
      (r.weights.weight * z).sum() / (r.weights.weight.sum() + 1e-8);
  CHECK(std::abs(depth - wall) < bin);
}

TEST_CASE("expected flow: constant field fixtures") {
  FieldParams params = init_params(tiny_field_config(), 14);
  Eigen::VectorXd flow(3);
  flow << 0.25, -0.15, 0.05;
  make_head_constant(params.dynamic_mlp, 2, flow);
  make_head_constant(params.dynamic_mlp, 1,
                     activation_bias(Eigen::VectorXd::Constant(1, 0.5)));

  RenderOptions options;
  options.samples_per_ray = 16;
  const Ray ray = test_ray();
  const ExpectedFlow ef =
      render_expected_flow(params, ray, 0.3, FlowDir::kForward, options);
  CHECK(ef.valid);
  CHECK((ef.flow - Vec3(flow)).cwiseAbs().maxCoeff() < 1e-7);
  // The expected position is the weight-normalized centroid along the ray.
  DynamicEval de;
  const auto samples = sample_along_ray(ray, 16, false, 0);
  Eigen::ArrayXd zs(16), sig(16);
  Eigen::MatrixXd vals(3, 16);
  for (int k = 0; k < 16; ++k) {
    zs(k) = samples[k].first;
    const FieldOutputDynamic dy =
        eval_dynamic(params, samples[k].second, ray.direction, 0.3);
    sig(k) = dy.density;
    vals.col(k) = dy.radiance;
  }
  const CompositeResult comp = composite(sig, zs, ray.z_far, vals);
  Vec3 centroid = Vec3::Zero();
  for (int k = 0; k < 16; ++k) {
    centroid += comp.weights.weight(k) * samples[k].second;
  }
  centroid /= comp.weights.weight.sum() + 1e-8;
  CHECK((ef.position - centroid).cwiseAbs().maxCoeff() < 1e-9);

  // Two-sample weighted mean of distinct flows.
  const Eigen::ArrayXd w2 = (Eigen::ArrayXd(2) << 0.5, 0.5).finished();
  Eigen::MatrixXd flows(3, 2);
  flows.col(0) = Vec3(1, 0, 0);
  flows.col(1) = Vec3(0, 1, 0);
  const Vec3 mean_flow = (flows * w2.matrix()) / w2.sum();
  CHECK((mean_flow - Vec3(0.5, 0.5, 0.0)).cwiseAbs().maxCoeff() < 1e-15);

  // A nearly transparent field is excluded from the flow loss.
  make_head_constant(params.dynamic_mlp, 1,
                     Eigen::VectorXd::Constant(1, -40.0));
  const ExpectedFlow off =
      render_expected_flow(params, ray, 0.3, FlowDir::kForward, options);
  CHECK_FALSE(off.valid);
}
