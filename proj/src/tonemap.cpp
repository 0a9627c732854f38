#include "hdrfield/tonemap.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>

namespace hdrfield {

namespace {

constexpr int kP = CrfParams::kControlPoints;  // 256
constexpr double kGrid = 1.0 / (kP - 1);

MlpParams init_crf_mlp(std::mt19937_64& rng) {
  MlpConfig cfg{1, 16, 2, {1}};
  MlpParams p;
  p.config = cfg;
  std::normal_distribution<double> normal(0.0, 1.0);
  int in = 1;
  for (int l = 0; l < cfg.hidden_layers; ++l) {
    p.w.emplace_back(cfg.hidden_width, in);
    for (Eigen::Index j = 0; j < p.w.back().size(); ++j)
      p.w.back().data()[j] = normal(rng) / std::sqrt(static_cast<double>(in));
    p.b.emplace_back(Eigen::VectorXd::Zero(cfg.hidden_width));
    in = cfg.hidden_width;
  }
  p.head_w.emplace_back(1, in);
  for (Eigen::Index j = 0; j < in; ++j)
    p.head_w.back()(0, j) = normal(rng) / std::sqrt(static_cast<double>(in));
  p.head_b.emplace_back(Eigen::VectorXd::Zero(1));
  return p;
}

double eval_crf_mlp(const MlpParams& mlp, double x) {
  MlpCache cache;
  Eigen::MatrixXd input(1, 1);
  input(0, 0) = x;
  mlp_forward(mlp, input, cache);
  return cache.heads[0](0, 0);
}

// dy/dx of the scalar CRF MLP, by chaining Jacobians through the trunk.
double crf_mlp_input_deriv(const MlpParams& mlp, double x) {
  MlpCache cache;
  Eigen::MatrixXd input(1, 1);
  input(0, 0) = x;
  mlp_forward(mlp, input, cache);
  Eigen::VectorXd j = Eigen::VectorXd::Ones(1);
  for (int l = 0; l < mlp.config.hidden_layers; ++l) {
    Eigen::VectorXd dz = mlp.w[l] * j;
    for (Eigen::Index i = 0; i < dz.size(); ++i) {
      dz(i) *= sigmoid(cache.z[l](i, 0));
    }
    j = dz;
  }
  return (mlp.head_w[0] * j)(0, 0);
}

// Interpolate control points of one channel at clamped-to-range x in [0,1].
double interp_curve(const Eigen::MatrixXd& curve, int channel, double x,
                    int* bin, double* frac) {
  double u = x * (kP - 1);
  int k = std::min(static_cast<int>(u), kP - 2);
  double fr = u - k;
  if (bin != nullptr) *bin = k;
  if (frac != nullptr) *frac = fr;
  return curve(k, channel) * (1.0 - fr) + curve(k + 1, channel) * fr;
}

}  // namespace

std::string to_string(CrfKind kind) {
  switch (kind) {
    case CrfKind::kPiecewise: return "piecewise";
    case CrfKind::kFixed: return "fixed";
    case CrfKind::kMlp: return "mlp";
    case CrfKind::kNone: return "none";
  }
  return "piecewise";
}

CrfKind crf_kind_from_string(const std::string& s) {
  if (s == "piecewise") return CrfKind::kPiecewise;
  if (s == "fixed") return CrfKind::kFixed;
  if (s == "mlp") return CrfKind::kMlp;
  if (s == "none") return CrfKind::kNone;
  throw std::invalid_argument("unknown CRF kind: " + s);
}

CrfParams CrfParams::piecewise_identity() {
  CrfParams crf;
  crf.kind = CrfKind::kPiecewise;
  crf.deltas = Eigen::MatrixXd::Zero(kP - 1, 3);
  return crf;
}

CrfParams CrfParams::piecewise_gamma(double gamma) {
  CrfParams crf = piecewise_identity();
  for (int k = 0; k < kP - 1; ++k) {
    const double y0 = std::pow(k * kGrid, 1.0 / gamma);
    const double y1 = std::pow((k + 1) * kGrid, 1.0 / gamma);
    const double inc = std::max(y1 - y0, 1e-12);
    for (int c = 0; c < 3; ++c) crf.deltas(k, c) = softplus_inv(inc);
  }
  return crf;
}

CrfParams CrfParams::fixed(double gamma) {
  CrfParams crf;
  crf.kind = CrfKind::kFixed;
  crf.fixed_gamma = gamma;
  return crf;
}

CrfParams CrfParams::mlp_crf(std::uint64_t seed) {
  CrfParams crf;
  crf.kind = CrfKind::kMlp;
  std::mt19937_64 rng(seed);
  for (int c = 0; c < 3; ++c) crf.mlp[c] = init_crf_mlp(rng);
  return crf;
}

CrfParams CrfParams::none() {
  CrfParams crf;
  crf.kind = CrfKind::kNone;
  return crf;
}

std::int64_t CrfParams::parameter_count() const {
  switch (kind) {
    case CrfKind::kPiecewise: return deltas.size();
    case CrfKind::kMlp:
      return mlp[0].parameter_count() + mlp[1].parameter_count() +
             mlp[2].parameter_count();
    default: return 0;
  }
}

Eigen::MatrixXd crf_control_points(const CrfParams& crf) {
  Eigen::MatrixXd y(kP, 3);
  switch (crf.kind) {
    case CrfKind::kPiecewise: {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        y(0, c) = 0.0;
        for (int k = 0; k < kP - 1; ++k) {
          acc += softplus(crf.deltas(k, c));
          y(k + 1, c) = acc;
        }
        y.col(c) /= acc;
      }
      break;
    }
    case CrfKind::kFixed: {
      for (int k = 0; k < kP; ++k) {
        const double v = std::pow(k * kGrid, 1.0 / crf.fixed_gamma);
        y.row(k).setConstant(v);
      }
      break;
    }
    case CrfKind::kMlp: {
      for (int c = 0; c < 3; ++c)
        for (int k = 0; k < kP; ++k) y(k, c) = eval_crf_mlp(crf.mlp[c], k * kGrid);
      break;
    }
    case CrfKind::kNone: {
      for (int k = 0; k < kP; ++k) y.row(k).setConstant(k * kGrid);
      break;
    }
  }
  return y;
}

WhiteBalance WhiteBalance::identity(int num_frames, WbSharing sharing,
                                    const std::vector<int>& frame_tags,
                                    int reference_frame) {
  WhiteBalance wb;
  wb.sharing = sharing;
  wb.frame_to_column.resize(num_frames);
  if (sharing == WbSharing::kPerFrame) {
    for (int i = 0; i < num_frames; ++i) wb.frame_to_column[i] = i;
    wb.log_gains = Eigen::MatrixXd::Zero(3, num_frames);
    wb.reference_column = reference_frame;
  } else {
    wb.frame_to_column = frame_tags;
    wb.log_gains = Eigen::MatrixXd::Zero(3, 3);
    wb.reference_column = frame_tags.at(reference_frame);
  }
  wb.anchor_log_gains = wb.log_gains;
  return wb;
}

int WhiteBalance::column(int frame) const {
  if (frame < 0 || frame >= static_cast<int>(frame_to_column.size())) {
    throw std::invalid_argument("white balance: unknown frame index");
  }
  return frame_to_column[frame];
}

Vec3 WhiteBalance::gains(int frame) const {
  return log_gains.col(column(frame)).array().exp();
}

Vec3 apply_white_balance(const WhiteBalance& wb, int frame, const Vec3& E) {
  if (!E.allFinite()) {
    throw std::invalid_argument("white balance: non-finite radiance");
  }
  return wb.gains(frame).cwiseProduct(E);
}

double apply_crf(const CrfParams& crf, int channel, double x, bool training) {
  if (!std::isfinite(x)) {
    throw std::invalid_argument("apply_crf: non-finite input");
  }
  if (crf.kind == CrfKind::kNone) {
    return training ? x : std::clamp(x, 0.0, 1.0);
  }
  if (crf.kind == CrfKind::kMlp) {
    const double xin = training ? x : std::clamp(x, 0.0, 1.0);
    const double y = eval_crf_mlp(crf.mlp[channel], xin);
    return training ? y : std::clamp(y, 0.0, 1.0);
  }
  const Eigen::MatrixXd curve = crf_control_points(crf);
  if (training) {
    if (x < 0.0) return crf.leak_alpha * x;
    if (x > 1.0) return -crf.leak_alpha / std::sqrt(x) + crf.leak_alpha + 1.0;
  } else {
    x = std::clamp(x, 0.0, 1.0);
  }
  return interp_curve(curve, channel, x, nullptr, nullptr);
}

Vec3 tonemap(const CrfParams& crf, const WhiteBalance& wb, int frame,
             const Vec3& E, bool training) {
  const Vec3 balanced = apply_white_balance(wb, frame, E);
  Vec3 out;
  for (int c = 0; c < 3; ++c) out(c) = apply_crf(crf, c, balanced(c), training);
  return out;
}

double crf_smoothness_loss(const CrfParams& crf) {
  if (crf.kind == CrfKind::kNone) return 0.0;
  const Eigen::MatrixXd y = crf_control_points(crf);
  double loss = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int k = 1; k < kP - 1; ++k) {
      loss += sq(y(k + 1, c) - 2.0 * y(k, c) + y(k - 1, c));
    }
  }
  return loss / (kGrid * kGrid * kGrid);
}

Eigen::MatrixXd crf_smoothness_curve_grad(const Eigen::MatrixXd& curve) {
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(kP, 3);
  const double scale = 2.0 / (kGrid * kGrid * kGrid);
  for (int c = 0; c < 3; ++c) {
    for (int k = 1; k < kP - 1; ++k) {
      const double d = curve(k + 1, c) - 2.0 * curve(k, c) + curve(k - 1, c);
      grad(k + 1, c) += scale * d;
      grad(k, c) -= 2.0 * scale * d;
      grad(k - 1, c) += scale * d;
    }
  }
  return grad;
}

double mulaw(double E, double mu) {
  if (E < 0.0 || !std::isfinite(E)) {
    throw std::invalid_argument("mulaw: input must be finite and >= 0");
  }
  if (!(mu > 0.0)) {
    throw std::invalid_argument("mulaw: mu must be positive");
  }
  return std::log1p(mu * E) / std::log1p(mu);
}

Vec3 mulaw(const Vec3& E, double mu) {
  return Vec3(mulaw(E.x(), mu), mulaw(E.y(), mu), mulaw(E.z(), mu));
}

// ---- differentiable path --------------------------------------------------

TonemapContext::TonemapContext(const CrfParams& crf_params,
                               const WhiteBalance& wb_params)
    : crf(&crf_params), wb(&wb_params) {
  curve = crf_control_points(crf_params);
  if (crf_params.kind == CrfKind::kPiecewise) {
    softplus_deltas = crf_params.deltas.unaryExpr([](double d) { return softplus(d); });
    totals = softplus_deltas.colwise().sum();
  }
}

TonemapGradAccum::TonemapGradAccum(const TonemapContext& ctx)
    : d_curve(Eigen::MatrixXd::Zero(kP, 3)),
      d_wb_log(Eigen::MatrixXd::Zero(3, ctx.wb->log_gains.cols())) {}

Vec3 tonemap_forward(const TonemapContext& ctx, int frame, const Vec3& E,
                     bool training, TonemapCache& cache) {
  cache.column = ctx.wb->column(frame);
  const Vec3 w = ctx.wb->log_gains.col(cache.column).array().exp();
  cache.balanced = w.cwiseProduct(E);
  Vec3 out;
  const CrfKind kind = ctx.crf->kind;
  for (int c = 0; c < 3; ++c) {
    double x = cache.balanced(c);
    if (kind == CrfKind::kNone) {
      cache.branch[c] = 0;
      out(c) = training ? x : std::clamp(x, 0.0, 1.0);
      continue;
    }
    if (kind == CrfKind::kMlp) {
      cache.branch[c] = 0;
      const double xin = training ? x : std::clamp(x, 0.0, 1.0);
      const double y = eval_crf_mlp(ctx.crf->mlp[c], xin);
      out(c) = training ? y : std::clamp(y, 0.0, 1.0);
      continue;
    }
    if (training && x < 0.0) {
      cache.branch[c] = -1;
      out(c) = ctx.crf->leak_alpha * x;
    } else if (training && x > 1.0) {
      cache.branch[c] = 1;
      out(c) = -ctx.crf->leak_alpha / std::sqrt(x) + ctx.crf->leak_alpha + 1.0;
    } else {
      cache.branch[c] = 0;
      out(c) = interp_curve(ctx.curve, c, training ? x : std::clamp(x, 0.0, 1.0),
                            &cache.bin[c], &cache.frac[c]);
    }
  }
  return out;
}

Vec3 tonemap_backward(const TonemapContext& ctx, const TonemapCache& cache,
                      const Vec3& d_out, TonemapGradAccum& accum) {
  Vec3 d_balanced = Vec3::Zero();
  const CrfKind kind = ctx.crf->kind;
  const double alpha = ctx.crf->leak_alpha;
  for (int c = 0; c < 3; ++c) {
    const double g = d_out(c);
    if (g == 0.0) continue;
    const double x = cache.balanced(c);
    switch (kind) {
      case CrfKind::kNone:
        d_balanced(c) = g;
        break;
      case CrfKind::kMlp:
        accum.mlp_samples[c].emplace_back(x, g);
        d_balanced(c) = g * crf_mlp_input_deriv(ctx.crf->mlp[c], x);
        break;
      default: {
        if (cache.branch[c] < 0) {
          d_balanced(c) = g * alpha;
        } else if (cache.branch[c] > 0) {
          d_balanced(c) = g * 0.5 * alpha / (x * std::sqrt(x));
        } else {
          const int k = cache.bin[c];
          const double fr = cache.frac[c];
          d_balanced(c) =
              g * (ctx.curve(k + 1, c) - ctx.curve(k, c)) * (kP - 1);
          accum.d_curve(k, c) += g * (1.0 - fr);
          accum.d_curve(k + 1, c) += g * fr;
        }
        break;
      }
    }
  }
  // x = w * E with w = exp(u): dL/du = dL/dx * x, dL/dE = dL/dx * w.
  const Vec3 w = ctx.wb->log_gains.col(cache.column).array().exp();
  accum.d_wb_log.col(cache.column) += d_balanced.cwiseProduct(cache.balanced);
  return d_balanced.cwiseProduct(w);
}

CrfGrad CrfGrad::zeros_like(const CrfParams& crf) {
  CrfGrad g;
  g.deltas = Eigen::MatrixXd::Zero(kP - 1, 3);
  if (crf.kind == CrfKind::kMlp) {
    for (int c = 0; c < 3; ++c) g.mlp[c] = MlpGrad::zeros_like(crf.mlp[c]);
  }
  return g;
}

void TonemapGradAccum::flush(const TonemapContext& ctx, CrfGrad& crf_grad,
                             Eigen::MatrixXd& wb_log_grad) {
  wb_log_grad += d_wb_log;
  const CrfParams& crf = *ctx.crf;
  if (crf.kind == CrfKind::kPiecewise) {
    // y_k = P_k / P_total => dL/ds_j = (sum_{k>j} g_k - sum_k g_k y_k) / P_total.
    for (int c = 0; c < 3; ++c) {
      const double total = ctx.totals(c);
      const double dot = d_curve.col(c).dot(ctx.curve.col(c));
      double suffix = 0.0;
      for (int j = kP - 2; j >= 0; --j) {
        suffix += d_curve(j + 1, c);
        const double ds = (suffix - dot) / total;
        crf_grad.deltas(j, c) += ds * sigmoid(crf.deltas(j, c));
      }
    }
  } else if (crf.kind == CrfKind::kMlp) {
    // Fold accumulated curve-space gradients (e.g. smoothness) into samples.
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < kP; ++k) {
        if (d_curve(k, c) != 0.0)
          mlp_samples[c].emplace_back(k * kGrid, d_curve(k, c));
      }
      if (mlp_samples[c].empty()) continue;
      const auto n = static_cast<Eigen::Index>(mlp_samples[c].size());
      Eigen::MatrixXd input(1, n);
      Eigen::MatrixXd dy(1, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        input(0, i) = mlp_samples[c][i].first;
        dy(0, i) = mlp_samples[c][i].second;
      }
      MlpCache cache;
      mlp_forward(crf.mlp[c], input, cache);
      std::vector<Eigen::MatrixXd> head_grads{dy};
      mlp_backward(crf.mlp[c], cache, head_grads, crf_grad.mlp[c], nullptr);
    }
  }
  d_curve.setZero();
  d_wb_log.setZero();
  for (auto& s : mlp_samples) s.clear();
}

// ---- text export ----------------------------------------------------------

void write_crf_text(std::ostream& os, const CrfParams& crf,
                    const WhiteBalance& wb) {
  os.precision(17);
  os << "hdrfield-crf 1\n";
  os << "kind " << to_string(crf.kind) << " alpha " << crf.leak_alpha
     << " gamma " << crf.fixed_gamma << "\n";
  os << "controls " << kP << "\n";
  const Eigen::MatrixXd y = crf_control_points(crf);
  for (int k = 0; k < kP; ++k) {
    os << y(k, 0) << " " << y(k, 1) << " " << y(k, 2) << "\n";
  }
  os << "whitebalance " << wb.num_frames() << " reference ";
  // Report the reference as a frame index for readability.
  int ref_frame = 0;
  for (int f = 0; f < wb.num_frames(); ++f) {
    if (wb.frame_to_column[f] == wb.reference_column) {
      ref_frame = f;
      break;
    }
  }
  os << ref_frame << "\n";
  for (int f = 0; f < wb.num_frames(); ++f) {
    const Vec3 g = wb.gains(f);
    os << f << " " << g(0) << " " << g(1) << " " << g(2) << "\n";
  }
}

void read_crf_text(std::istream& is, CrfParams& crf, WhiteBalance& wb) {
  std::string magic, kind_word, kind, junk;
  int version = 0;
  is >> magic >> version;
  if (magic != "hdrfield-crf" || version != 1) {
    throw std::runtime_error("not a CRF text file");
  }
  double alpha = 0.01, gamma = 1.0;
  is >> kind_word >> kind >> junk >> alpha >> junk >> gamma;
  int controls = 0;
  is >> junk >> controls;
  if (controls != kP) {
    throw std::runtime_error("unexpected control point count");
  }
  Eigen::MatrixXd y(kP, 3);
  for (int k = 0; k < kP; ++k) is >> y(k, 0) >> y(k, 1) >> y(k, 2);
  // Reconstruct a piecewise parameterization from the sampled curve.
  crf = CrfParams::piecewise_identity();
  crf.leak_alpha = alpha;
  for (int k = 0; k < kP - 1; ++k) {
    for (int c = 0; c < 3; ++c) {
      crf.deltas(k, c) = softplus_inv(std::max(y(k + 1, c) - y(k, c), 1e-12));
    }
  }
  int frames = 0, ref = 0;
  is >> junk >> frames >> junk >> ref;
  wb = WhiteBalance::identity(frames, WbSharing::kPerFrame,
                              std::vector<int>(frames, 0), ref);
  for (int f = 0; f < frames; ++f) {
    int idx;
    Vec3 g;
    is >> idx >> g(0) >> g(1) >> g(2);
    wb.log_gains.col(idx) = g.array().log();
  }
  if (!is) throw std::runtime_error("truncated CRF text file");
}

}  // namespace hdrfield
