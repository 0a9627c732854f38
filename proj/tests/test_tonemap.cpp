#include <doctest.h>

#include <random>
#include <sstream>

#include "hdrfield/tonemap.hpp"
#include "test_util.hpp"

using namespace hdrfield;
using hdrfield::testing::finite_diff;
using hdrfield::testing::max_rel_err;

namespace {
WhiteBalance make_wb(int frames, int reference = 0) {
  return WhiteBalance::identity(frames, WbSharing::kPerFrame,
                                std::vector<int>(frames, 0), reference);
}
}  // namespace

TEST_CASE("white balance is a componentwise product") {
  WhiteBalance wb = make_wb(3);
  CHECK((apply_white_balance(wb, 0, Vec3(0.3, 0.3, 0.3)) - Vec3(0.3, 0.3, 0.3))
            .norm() < 1e-15);
  wb.log_gains.col(1) = Vec3(std::log(2.0), 0.0, std::log(0.5));
  CHECK((apply_white_balance(wb, 1, Vec3(0.25, 0.25, 0.25)) -
         Vec3(0.5, 0.25, 0.125))
            .norm() < 1e-15);
  CHECK_THROWS_AS(apply_white_balance(wb, 3, Vec3::Zero()),
                  std::invalid_argument);
}

TEST_CASE("piecewise CRF evaluation and leaky branches") {
  CrfParams crf = CrfParams::piecewise_identity();
  CHECK(apply_crf(crf, 0, 0.5, true) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(apply_crf(crf, 1, -0.5, true) ==
        doctest::Approx(-0.005).epsilon(1e-12));
  CHECK(apply_crf(crf, 2, 4.0, true) ==
        doctest::Approx(-0.01 / 2.0 + 0.01 + 1.0).epsilon(1e-12));
  // Continuity at both junctions of g_leaky.
  CHECK(std::abs(apply_crf(crf, 0, 0.0, true) - 0.0) < 1e-12);
  const double above = -crf.leak_alpha + crf.leak_alpha + 1.0;
  CHECK(std::abs(apply_crf(crf, 0, 1.0, true) - above) < 1e-12);
  // Eval mode clamps.
  CHECK(apply_crf(crf, 0, 4.0, false) == doctest::Approx(1.0));
  CHECK(apply_crf(crf, 0, -0.2, false) == doctest::Approx(0.0));
}

TEST_CASE("tonemap examples") {
  const int frames = 2;
  WhiteBalance wb = make_wb(frames);
  CrfParams crf = CrfParams::piecewise_identity();
  CHECK((tonemap(crf, wb, 0, Vec3(0.2, 0.4, 0.6), true) - Vec3(0.2, 0.4, 0.6))
            .norm() < 1e-12);

  const CrfParams gamma = CrfParams::piecewise_gamma(2.2);
  const Vec3 out = tonemap(gamma, wb, 0, Vec3(0.25, 0.25, 0.25), true);
  CHECK(out(0) == doctest::Approx(std::pow(0.25, 1.0 / 2.2)).epsilon(1e-3));

  wb.log_gains.col(1).setConstant(std::log(2.0));
  const Vec3 sat = tonemap(crf, wb, 1, Vec3(0.6, 0.6, 0.6), false);
  CHECK(sat(0) == doctest::Approx(1.0));  // clamped at saturation
}

TEST_CASE("CRF endpoints anchored and curve monotone for random parameters") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    CrfParams crf = CrfParams::piecewise_identity();
    for (Eigen::Index i = 0; i < crf.deltas.size(); ++i) {
      crf.deltas.data()[i] = normal(rng);
    }
    const Eigen::MatrixXd y = crf_control_points(crf);
    for (int c = 0; c < 3; ++c) {
      CHECK(y(0, c) == 0.0);
      CHECK(y(255, c) == doctest::Approx(1.0).epsilon(1e-9));
      for (int k = 0; k + 1 < 256; ++k) CHECK(y(k + 1, c) >= y(k, c));
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double x1 = unit(rng), x2 = unit(rng);
    const double lo = std::min(x1, x2), hi = std::max(x1, x2);
    CHECK(apply_crf(crf, 0, lo, true) <= apply_crf(crf, 0, hi, true) + 1e-12);
  }
}

TEST_CASE("smoothness loss: zero curvature, quadratic closed form, kink") {
  CHECK(crf_smoothness_loss(CrfParams::piecewise_identity()) ==
        doctest::Approx(0.0).epsilon(1e-15));

  // Control points y_k = (k/255)^2: second difference 2/255^2 at every
  // interior point; with the 1/h^3 normalization the sum approximates the
  // curvature integral of g'' = 2 over [0,1], which is 4.
  CrfParams quad = CrfParams::piecewise_identity();
  for (int k = 0; k < 255; ++k) {
    const double y0 = hdrfield::sq(k / 255.0);
    const double y1 = hdrfield::sq((k + 1) / 255.0);
    for (int c = 0; c < 3; ++c) quad.deltas(k, c) = softplus_inv(y1 - y0);
  }
  const double v256 = crf_smoothness_loss(quad);
  const double expected = 3.0 * 254.0 * hdrfield::sq(2.0 / (255.0 * 255.0)) *
                          (255.0 * 255.0 * 255.0);
  CHECK(v256 == doctest::Approx(expected).epsilon(1e-9));

  // Cross-check against an independent 64-point re-gridding of the same
  // quadratic; the normalization keeps both near the continuous value.
  double v64 = 0.0;
  const double h64 = 1.0 / 63.0;
  for (int k = 1; k < 63; ++k) {
    const double d = hdrfield::sq((k + 1) * h64) - 2.0 * hdrfield::sq(k * h64) +
                     hdrfield::sq((k - 1) * h64);
    v64 += hdrfield::sq(d);
  }
  v64 = 3.0 * v64 / (h64 * h64 * h64);
  CHECK(std::abs(v256 - v64) / v256 < 0.05);

  // A single kink has strictly positive curvature.
  CrfParams kink = CrfParams::piecewise_identity();
  kink.deltas.row(127).setConstant(softplus_inv(2.0 / 255.0));
  CHECK(crf_smoothness_loss(kink) > 0.0);
}

TEST_CASE("mu-law operator") {
  CHECK(mulaw(0.0, 500.0) == 0.0);
  CHECK(mulaw(1.0, 500.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(mulaw(0.1, 500.0) ==
        doctest::Approx(0.6324714110546878).epsilon(1e-12));
  CHECK_THROWS_AS(mulaw(-0.1, 500.0), std::invalid_argument);
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double v = mulaw(i / 100.0, 500.0);
    CHECK(v > prev);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    prev = v;
  }
}

TEST_CASE("tonemap gradients match finite differences, leaky regions included") {
  const int frames = 2;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 0.5);
  CrfParams crf = CrfParams::piecewise_identity();
  for (Eigen::Index i = 0; i < crf.deltas.size(); ++i) {
    crf.deltas.data()[i] = 0.3 * normal(rng);
  }
  WhiteBalance wb = make_wb(frames, 0);
  wb.log_gains.col(1) = Vec3(0.2, -0.1, 0.4);

  // Cover the interpolated region, saturation (x > 1) and the negative branch.
  const std::vector<Vec3> inputs = {Vec3(0.3, 0.7, 0.05), Vec3(2.5, 0.5, 1.7),
                                    Vec3(-0.4, 0.2, 3.0)};
  for (const Vec3& e0 : inputs) {
    // d/dE via the backward pass.
    TonemapContext ctx(crf, wb);
    TonemapGradAccum accum(ctx);
    TonemapCache cache;
    const Vec3 y0 = tonemap_forward(ctx, 1, e0, true, cache);
    const Vec3 w_ones = Vec3::Ones();
    const Vec3 dE = tonemap_backward(ctx, cache, w_ones, accum);
    CrfGrad crf_grad = CrfGrad::zeros_like(crf);
    Eigen::MatrixXd wb_grad = Eigen::MatrixXd::Zero(3, frames);
    accum.flush(ctx, crf_grad, wb_grad);
    (void)y0;

    auto loss_at = [&](const CrfParams& c, const WhiteBalance& w,
                       const Vec3& e) {
      TonemapContext lctx(c, w);
      TonemapCache lcache;
      return tonemap_forward(lctx, 1, e, true, lcache).sum();
    };
    // E gradient.
    Eigen::VectorXd fd_e(3), an_e(3);
    for (int c = 0; c < 3; ++c) {
      Vec3 ep = e0, em = e0;
      ep(c) += 1e-6;
      em(c) -= 1e-6;
      fd_e(c) = (loss_at(crf, wb, ep) - loss_at(crf, wb, em)) / 2e-6;
      an_e(c) = dE(c);
    }
    CHECK(max_rel_err(an_e, fd_e) < 1e-4);
    // White-balance (log-gain) gradient.
    Eigen::VectorXd fd_w(3), an_w(3);
    for (int c = 0; c < 3; ++c) {
      WhiteBalance wp = wb, wm = wb;
      wp.log_gains(c, 1) += 1e-6;
      wm.log_gains(c, 1) -= 1e-6;
      fd_w(c) = (loss_at(crf, wp, e0) - loss_at(crf, wm, e0)) / 2e-6;
      an_w(c) = wb_grad(c, 1);
    }
    CHECK(max_rel_err(an_w, fd_w) < 1e-4);
    // Control-delta gradient on a random subset.
    std::uniform_int_distribution<int> pick(0, 254);
    for (int trial = 0; trial < 24; ++trial) {
      const int k = pick(rng);
      const int c = trial % 3;
      CrfParams cp = crf, cm = crf;
      cp.deltas(k, c) += 1e-6;
      cm.deltas(k, c) -= 1e-6;
      const double fd =
          (loss_at(cp, wb, e0) - loss_at(cm, wb, e0)) / 2e-6;
      const double an = crf_grad.deltas(k, c);
      CHECK(std::abs(an - fd) /
                std::max({std::abs(an), std::abs(fd), 1e-6}) <
            1e-4);
    }
  }
}

TEST_CASE("CRF text export/import round trip") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 0.7);
  CrfParams crf = CrfParams::piecewise_identity();
  for (Eigen::Index i = 0; i < crf.deltas.size(); ++i) {
    crf.deltas.data()[i] = normal(rng);
  }
  WhiteBalance wb = make_wb(4, 1);
  wb.log_gains.setRandom();
  wb.log_gains.col(1).setZero();

  std::stringstream ss;
  write_crf_text(ss, crf, wb);
  CrfParams crf2;
  WhiteBalance wb2;
  read_crf_text(ss, crf2, wb2);
  const Eigen::MatrixXd y1 = crf_control_points(crf);
  const Eigen::MatrixXd y2 = crf_control_points(crf2);
  CHECK((y1 - y2).cwiseAbs().maxCoeff() < 1e-9);
  for (int f = 0; f < 4; ++f) {
    CHECK((wb.gains(f) - wb2.gains(f)).norm() < 1e-12);
  }
}

TEST_CASE("fixed, mlp and none CRF kinds behave behind the same interface") {
  const CrfParams fixed = CrfParams::fixed(2.2);
  CHECK(apply_crf(fixed, 0, 0.25, false) ==
        doctest::Approx(std::pow(0.25, 1.0 / 2.2)).epsilon(1e-3));
  CHECK(fixed.parameter_count() == 0);

  const CrfParams none = CrfParams::none();
  CHECK(apply_crf(none, 0, 0.4, true) == 0.4);
  CHECK(apply_crf(none, 0, 1.4, false) == 1.0);
  CHECK(crf_smoothness_loss(none) == 0.0);

  const CrfParams mlp = CrfParams::mlp_crf(9);
  CHECK(mlp.parameter_count() > 0);
  const double v = apply_crf(mlp, 0, 0.5, true);
  CHECK(std::isfinite(v));
  const double clamped = apply_crf(mlp, 1, 2.0, false);
  CHECK(clamped >= 0.0);
  CHECK(clamped <= 1.0);
}
