#include <doctest.h>

#include <random>

#include "hdrfield/fields.hpp"
#include "test_util.hpp"

using namespace hdrfield;
using hdrfield::testing::tiny_field_config;

TEST_CASE("positional encoding layout") {
  Eigen::VectorXd x1(1);
  x1 << 0.5;
  const Eigen::VectorXd e0 = encode(x1, 0, true);
  CHECK(e0.size() == 1);
  CHECK(e0(0) == 0.5);

  x1 << 0.0;
  const Eigen::VectorXd e1 = encode(x1, 1, false);
  CHECK(e1.size() == 2);
  CHECK(e1(0) == doctest::Approx(0.0));
  CHECK(e1(1) == doctest::Approx(1.0));

  x1 << 0.25;
  const Eigen::VectorXd e2 = encode(x1, 2, true);
  CHECK(e2.size() == 5);
  CHECK(e2(0) == doctest::Approx(0.25));
  CHECK(e2(1) == doctest::Approx(std::sin(0.25)));
  CHECK(e2(2) == doctest::Approx(std::cos(0.25)));
  CHECK(e2(3) == doctest::Approx(std::sin(0.5)));
  CHECK(e2(4) == doctest::Approx(std::cos(0.5)));

  CHECK(encoded_dim(3, 6, true) == 39);
  Eigen::VectorXd bad(1);
  bad << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(encode(bad, 2, true), std::invalid_argument);
}

TEST_CASE("init_params: determinism, flow zero-init, density near 0.1") {
  const FieldConfig fc = tiny_field_config();
  const FieldParams a = init_params(fc, 42);
  const FieldParams b = init_params(fc, 42);
  CHECK(flatten_parameters(a, CrfParams::none(),
                           WhiteBalance::identity(1, WbSharing::kPerFrame, {0}, 0)) ==
        flatten_parameters(b, CrfParams::none(),
                           WhiteBalance::identity(1, WbSharing::kPerFrame, {0}, 0)));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(-1.5, 1.5);
  for (int i = 0; i < 10; ++i) {
    const Vec3 x(unit(rng), unit(rng), unit(rng));
    const Vec3 d = Vec3(unit(rng), unit(rng), 1.0).normalized();
    const double t = 0.5 * (unit(rng) + 1.5) / 1.5;
    const FieldOutputDynamic dyn = eval_dynamic(a, x, d, t);
    CHECK(dyn.flow_forward.norm() == 0.0);
    CHECK(dyn.flow_backward.norm() == 0.0);
    CHECK(dyn.density >= 0.05);
    CHECK(dyn.density <= 0.2);
    const FieldOutputStatic st = eval_static(a, x, d);
    CHECK(st.density >= 0.05);
    CHECK(st.density <= 0.2);
  }
}

TEST_CASE("zero-initialized output layer: c = softplus(0-shift) = 0, v = 0.5") {
  FieldParams params = init_params(tiny_field_config(), 3);
  for (MlpParams* mlp : {&params.static_mlp, &params.dynamic_mlp}) {
    for (auto& w : mlp->head_w) w.setZero();
    for (auto& b : mlp->head_b) b.setZero();
  }
  const FieldOutputStatic st = eval_static(params, Vec3(0.3, -0.2, 1.0),
                                           Vec3(0, 0, 1));
  CHECK(std::abs(st.radiance(0)) < 1e-9);
  CHECK(std::abs(st.density) < 1e-9);
  CHECK(st.blend == doctest::Approx(0.5).epsilon(1e-15));
  const FieldOutputDynamic dy =
      eval_dynamic(params, Vec3(0.3, -0.2, 1.0), Vec3(0, 0, 1), 0.25);
  CHECK(std::abs(dy.radiance.maxCoeff()) < 1e-9);
  CHECK(std::abs(dy.density) < 1e-9);
  CHECK(dy.occ_forward == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(dy.occ_backward == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("evaluation is deterministic and rejects non-finite input") {
  const FieldParams params = init_params(tiny_field_config(), 5);
  const Vec3 x(0.1, 0.2, 0.3), d = Vec3(0.2, -0.1, 1).normalized();
  const FieldOutputDynamic a = eval_dynamic(params, x, d, 0.4);
  const FieldOutputDynamic b = eval_dynamic(params, x, d, 0.4);
  CHECK(a.radiance == b.radiance);
  CHECK(a.density == b.density);
  CHECK(a.flow_forward == b.flow_forward);
  CHECK_THROWS_AS(
      eval_dynamic(params, Vec3(0, 0, std::numeric_limits<double>::infinity()),
                   d, 0.4),
      std::invalid_argument);
}

TEST_CASE("activation ranges hold for arbitrary finite parameters") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> wild(0.0, 3.0);
  for (int trial = 0; trial < 5; ++trial) {
    FieldParams params = init_params(tiny_field_config(), trial);
    for (MlpParams* mlp : {&params.static_mlp, &params.dynamic_mlp}) {
      for (auto& w : mlp->w)
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = wild(rng);
      for (auto& w : mlp->head_w)
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = wild(rng);
      for (auto& b : mlp->head_b)
        for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = 10 * wild(rng);
    }
    for (int i = 0; i < 10; ++i) {
      const Vec3 x(wild(rng), wild(rng), wild(rng));
      const Vec3 d = Vec3(wild(rng), wild(rng), 1).normalized();
      const FieldOutputStatic st = eval_static(params, x, d);
      CHECK(st.radiance.minCoeff() >= 0.0);
      CHECK(st.density >= 0.0);
      CHECK(st.blend >= 0.0);
      CHECK(st.blend <= 1.0);
      const FieldOutputDynamic dy = eval_dynamic(params, x, d, 0.3);
      CHECK(dy.radiance.minCoeff() >= 0.0);
      CHECK(dy.density >= 0.0);
      CHECK(dy.occ_forward >= 0.0);
      CHECK(dy.occ_forward <= 1.0);
      CHECK(dy.occ_backward >= 0.0);
      CHECK(dy.occ_backward <= 1.0);
    }
  }
}

TEST_CASE("density gradient w.r.t. every parameter matches finite differences") {
  const FieldConfig fc = tiny_field_config();
  FieldParams params = init_params(fc, 17);
  // Unfrozen random heads so every path is exercised.
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 0.3);
  for (auto& w : params.dynamic_mlp.head_w)
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] += normal(rng);

  const Vec3 x(0.4, -0.3, 0.9);
  const Vec3 d = Vec3(0.1, 0.2, 1.0).normalized();
  const double t = 0.35;

  Eigen::MatrixXd xm(3, 1), dm(3, 1);
  xm.col(0) = x;
  dm.col(0) = d;
  Eigen::ArrayXd tm(1);
  tm << t;
  DynamicEval eval;
  eval_dynamic_batch(params, xm, dm, tm, eval);
  DynamicGradIn gin;
  gin.setZero(1);
  gin.density(0) = 1.0;
  MlpGrad grad = MlpGrad::zeros_like(params.dynamic_mlp);
  dynamic_backward(params, xm, eval, gin, grad, nullptr);

  const std::int64_t n = params.dynamic_mlp.parameter_count();
  Eigen::VectorXd analytic(n);
  mlp_grad_flatten(grad, analytic.data());
  Eigen::VectorXd flat(n);
  mlp_flatten(params.dynamic_mlp, flat.data());

  auto density_of = [&](const Eigen::VectorXd& theta) {
    FieldParams p = params;
    mlp_unflatten(theta.data(), p.dynamic_mlp);
    return eval_dynamic(p, x, d, t).density;
  };
  const Eigen::VectorXd fd = hdrfield::testing::finite_diff(density_of, flat);
  CHECK(hdrfield::testing::max_rel_err(analytic, fd) < 1e-4);
}
