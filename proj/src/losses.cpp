#include "hdrfield/losses.hpp"

#include <random>

namespace hdrfield {

double alpha_gen(const LossWeights& weights, std::int64_t step) {
  return step < weights.t_warm ? 0.0 : weights.p_gen;
}

bool generative_gate(const LossWeights& weights, std::int64_t step,
                     std::uint64_t seed) {
  const double p = alpha_gen(weights, step);
  if (p <= 0.0) return false;
  std::mt19937_64 rng(mix_seed(seed, 0x67656e ^ static_cast<std::uint64_t>(step)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return unit(rng) < p;
}

double w_dist(const Vec3& x, const Vec3& y) {
  return std::exp(-2.0 * (x - y).norm());
}

namespace {
LossBreakdown run_term(const FieldParams& fields, const CrfParams& crf,
                       const WhiteBalance& wb, const SceneContext& scene,
                       const SupervisionBatch& batch, unsigned term) {
  LossWeights weights;
  TermCoeffs coeffs;  // values only, no gradient
  return compute_losses(fields, crf, wb, scene, batch, weights, term, coeffs,
                        nullptr);
}

CrfParams identity_crf() { return CrfParams::piecewise_identity(); }

WhiteBalance unit_wb(const SceneContext& scene) {
  std::vector<int> tags(scene.frames.size(), 0);
  return WhiteBalance::identity(static_cast<int>(scene.frames.size()),
                                WbSharing::kPerFrame, tags, 0);
}
}  // namespace

double loss_cb(const FieldParams& fields, const CrfParams& crf,
               const WhiteBalance& wb, const SceneContext& scene,
               const SupervisionBatch& batch) {
  return run_term(fields, crf, wb, scene, batch, kTermCb).cb;
}

double loss_photo(const FieldParams& fields, const CrfParams& crf,
                  const WhiteBalance& wb, const SceneContext& scene,
                  const SupervisionBatch& batch) {
  return run_term(fields, crf, wb, scene, batch, kTermPhoto).photo;
}

double loss_flow(const FieldParams& fields, const SceneContext& scene,
                 const SupervisionBatch& batch) {
  return run_term(fields, identity_crf(), unit_wb(scene), scene, batch,
                  kTermFlow)
      .flow;
}

double loss_depth(const FieldParams& fields, const SceneContext& scene,
                  const SupervisionBatch& batch) {
  return run_term(fields, identity_crf(), unit_wb(scene), scene, batch,
                  kTermDepth)
      .depth;
}

double loss_cyc(const FieldParams& fields, const SceneContext& scene,
                const SupervisionBatch& batch) {
  return run_term(fields, identity_crf(), unit_wb(scene), scene, batch,
                  kTermCyc)
      .cyc;
}

double loss_reg(const FieldParams& fields, const SceneContext& scene,
                const SupervisionBatch& batch) {
  return run_term(fields, identity_crf(), unit_wb(scene), scene, batch,
                  kTermReg)
      .reg();
}

PatchEncoder PatchEncoder::identity() { return PatchEncoder{}; }

PatchEncoder PatchEncoder::random_linear(int input_dim, int output_dim,
                                         std::uint64_t seed) {
  PatchEncoder enc;
  enc.kind = Kind::kRandomLinear;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0,
                                          1.0 / std::sqrt(static_cast<double>(input_dim)));
  enc.projection.resize(output_dim, input_dim);
  for (Eigen::Index j = 0; j < enc.projection.cols(); ++j)
    for (Eigen::Index i = 0; i < enc.projection.rows(); ++i)
      enc.projection(i, j) = normal(rng);
  return enc;
}

Eigen::VectorXd PatchEncoder::apply(const Eigen::VectorXd& flat_patch) const {
  if (kind == Kind::kIdentity) return flat_patch;
  if (projection.cols() != flat_patch.size()) {
    throw std::invalid_argument("patch encoder: wrong patch size");
  }
  return projection * flat_patch;
}

double loss_gen(const std::vector<Eigen::VectorXd>& rendered_patches,
                const std::vector<Eigen::VectorXd>& enhanced_patches,
                const PatchEncoder& encoder) {
  if (rendered_patches.size() != enhanced_patches.size()) {
    throw std::invalid_argument("loss_gen: patch count mismatch");
  }
  if (rendered_patches.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < rendered_patches.size(); ++i) {
    const Eigen::VectorXd diff =
        encoder.apply(rendered_patches[i]) - encoder.apply(enhanced_patches[i]);
    acc += diff.cwiseAbs().mean();
  }
  return acc / static_cast<double>(rendered_patches.size());
}

LossBreakdown total_loss(const FieldParams& fields, const CrfParams& crf,
                         const WhiteBalance& wb, const SceneContext& scene,
                         const SupervisionBatch& batch,
                         const LossWeights& weights, std::int64_t step,
                         Gradients* grads, double gen_value, bool gen_fired) {
  LossBreakdown bd =
      compute_losses(fields, crf, wb, scene, batch, weights, kTermAll,
                     TermCoeffs::from_weights(weights), grads);
  bd.gen = gen_value;
  bd.gen_fired = gen_fired;
  bd.total = bd.cb + bd.photo +
             weights.beta_data * (bd.flow + weights.beta_depth * bd.depth) +
             weights.beta_reg * (bd.reg() + bd.cyc) +
             weights.beta_smooth * bd.smooth +
             weights.beta_wb_anchor * bd.wb_anchor +
             weights.beta_gen * bd.gen;
  return bd;
}

// ---- flat parameter views ---------------------------------------------------

std::int64_t flat_parameter_count(const FieldParams& fields,
                                  const CrfParams& crf,
                                  const WhiteBalance& wb) {
  return fields.parameter_count() + crf.parameter_count() + wb.log_gains.size();
}

Eigen::VectorXd flatten_parameters(const FieldParams& fields,
                                   const CrfParams& crf,
                                   const WhiteBalance& wb) {
  Eigen::VectorXd flat(flat_parameter_count(fields, crf, wb));
  double* p = flat.data();
  mlp_flatten(fields.static_mlp, p);
  p += fields.static_mlp.parameter_count();
  mlp_flatten(fields.dynamic_mlp, p);
  p += fields.dynamic_mlp.parameter_count();
  if (crf.kind == CrfKind::kPiecewise) {
    std::copy(crf.deltas.data(), crf.deltas.data() + crf.deltas.size(), p);
    p += crf.deltas.size();
  } else if (crf.kind == CrfKind::kMlp) {
    for (int c = 0; c < 3; ++c) {
      mlp_flatten(crf.mlp[c], p);
      p += crf.mlp[c].parameter_count();
    }
  }
  std::copy(wb.log_gains.data(), wb.log_gains.data() + wb.log_gains.size(), p);
  return flat;
}

void unflatten_parameters(const Eigen::VectorXd& flat, FieldParams& fields,
                          CrfParams& crf, WhiteBalance& wb) {
  if (flat.size() != flat_parameter_count(fields, crf, wb)) {
    throw std::invalid_argument("unflatten: wrong parameter count");
  }
  const double* p = flat.data();
  mlp_unflatten(p, fields.static_mlp);
  p += fields.static_mlp.parameter_count();
  mlp_unflatten(p, fields.dynamic_mlp);
  p += fields.dynamic_mlp.parameter_count();
  if (crf.kind == CrfKind::kPiecewise) {
    std::copy(p, p + crf.deltas.size(), crf.deltas.data());
    p += crf.deltas.size();
  } else if (crf.kind == CrfKind::kMlp) {
    for (int c = 0; c < 3; ++c) {
      mlp_unflatten(p, crf.mlp[c]);
      p += crf.mlp[c].parameter_count();
    }
  }
  std::copy(p, p + wb.log_gains.size(), wb.log_gains.data());
}

Eigen::VectorXd flatten_gradients(const Gradients& grads,
                                  const FieldParams& fields,
                                  const CrfParams& crf,
                                  const WhiteBalance& wb) {
  Eigen::VectorXd flat(flat_parameter_count(fields, crf, wb));
  double* p = flat.data();
  mlp_grad_flatten(grads.static_mlp, p);
  p += fields.static_mlp.parameter_count();
  mlp_grad_flatten(grads.dynamic_mlp, p);
  p += fields.dynamic_mlp.parameter_count();
  if (crf.kind == CrfKind::kPiecewise) {
    std::copy(grads.crf.deltas.data(),
              grads.crf.deltas.data() + grads.crf.deltas.size(), p);
    p += grads.crf.deltas.size();
  } else if (crf.kind == CrfKind::kMlp) {
    for (int c = 0; c < 3; ++c) {
      mlp_grad_flatten(grads.crf.mlp[c], p);
      p += crf.mlp[c].parameter_count();
    }
  }
  std::copy(grads.wb_log.data(), grads.wb_log.data() + grads.wb_log.size(), p);
  return flat;
}

}  // namespace hdrfield
