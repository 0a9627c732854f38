#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hdrfield/renderer.hpp"
#include "hdrfield/tonemap.hpp"

namespace hdrfield {

struct LossWeights {
  double beta_data = 0.04;
  double beta_depth = 0.5;
  double beta_reg = 0.1;
  double beta_smooth = 1e-10;
  double beta_gen = 0.05;
  // Soft anchor tying the log-gains to the capture metadata; breaks the
  // power-law gauge freedom of (CRF, radiance, exposure gains).
  double beta_wb_anchor = 0.1;
  std::int64_t t_warm = 200000;  // generative warm-up, in steps
  double p_gen = 0.1;            // generative sampling probability
  // NSFF's original squared-error photometric variant (appendix form).
  bool squared_photometric = false;
  // Down-weight the warped photometric term by rendered occlusion confidence.
  bool occlusion_weighted_photo = false;
};

// 0 before the warm-up step, p_gen afterwards.
double alpha_gen(const LossWeights& weights, std::int64_t step);
// Seeded Bernoulli(alpha_gen(step)) draw deciding whether the generative
// term fires at this step.
bool generative_gate(const LossWeights& weights, std::int64_t step,
                     std::uint64_t seed);

struct RayObservation {
  int frame = 0;
  Vec2 pixel = Vec2::Zero();
  Vec3 color = Vec3::Zero();  // LDR in [0,1]
  std::optional<Vec2> flow_forward;   // observed pixel flow to next frame
  std::optional<Vec2> flow_backward;  // to previous frame
  std::optional<double> depth;        // observed depth, up to scale/shift
};

struct SupervisionBatch {
  std::vector<RayObservation> rays;
  int samples_per_ray = 32;
  bool stratified = true;
  std::uint64_t sample_seed = 0;
};

// Frame table plus ray bounds; neighbors are adjacent entries.
struct SceneContext {
  std::vector<FrameMeta> frames;
  double z_near = 0.1;
  double z_far = 10.0;

  int neighbor(int frame, FlowDir dir) const {
    const int j = frame + (dir == FlowDir::kForward ? 1 : -1);
    return (j >= 0 && j < static_cast<int>(frames.size())) ? j : -1;
  }
};

struct Gradients {
  MlpGrad static_mlp;
  MlpGrad dynamic_mlp;
  CrfGrad crf;
  Eigen::MatrixXd wb_log;  // 3 x C

  static Gradients zeros_like(const FieldParams& fields, const CrfParams& crf,
                              const WhiteBalance& wb);
};

struct LossBreakdown {
  double cb = 0.0;
  double photo = 0.0;
  double flow = 0.0;
  double depth = 0.0;
  double cyc = 0.0;
  double reg_sp = 0.0;
  double reg_temp = 0.0;
  double reg_min = 0.0;
  double smooth = 0.0;
  double wb_anchor = 0.0;
  double gen = 0.0;
  double total = 0.0;
  bool gen_fired = false;
  int flow_rays = 0;   // rays contributing to the flow loss
  int depth_rays = 0;  // rays contributing to the depth loss

  double reg() const { return reg_sp + reg_temp + reg_min; }
};

enum LossTerm : unsigned {
  kTermCb = 1u << 0,
  kTermPhoto = 1u << 1,
  kTermFlow = 1u << 2,
  kTermDepth = 1u << 3,
  kTermCyc = 1u << 4,
  kTermReg = 1u << 5,
  kTermSmooth = 1u << 6,
  kTermWbAnchor = 1u << 7,
  kTermAll = (1u << 8) - 1,
};

// Per-term coefficients applied to the gradient; breakdown values stay raw.
struct TermCoeffs {
  double cb = 0, photo = 0, flow = 0, depth = 0, cyc = 0, reg = 0, smooth = 0;
  double wb_anchor = 0;
  static TermCoeffs from_weights(const LossWeights& w);
};

// Batched differentiable evaluation of the selected terms. When `grads` is
// non-null, accumulates coeff-weighted parameter gradients.
LossBreakdown compute_losses(const FieldParams& fields, const CrfParams& crf,
                             const WhiteBalance& wb, const SceneContext& scene,
                             const SupervisionBatch& batch,
                             const LossWeights& weights, unsigned terms,
                             const TermCoeffs& coeffs, Gradients* grads);

// Single-term convenience entry points (unweighted values).
double loss_cb(const FieldParams& fields, const CrfParams& crf,
               const WhiteBalance& wb, const SceneContext& scene,
               const SupervisionBatch& batch);
double loss_photo(const FieldParams& fields, const CrfParams& crf,
                  const WhiteBalance& wb, const SceneContext& scene,
                  const SupervisionBatch& batch);
double loss_flow(const FieldParams& fields, const SceneContext& scene,
                 const SupervisionBatch& batch);
double loss_depth(const FieldParams& fields, const SceneContext& scene,
                  const SupervisionBatch& batch);
double loss_cyc(const FieldParams& fields, const SceneContext& scene,
                const SupervisionBatch& batch);
double loss_reg(const FieldParams& fields, const SceneContext& scene,
                const SupervisionBatch& batch);

// exp(-2 ||x - y||) spatial-smoothness weight.
double w_dist(const Vec3& x, const Vec3& y);

// Patch perceptual encoder phi for the generative term.
struct PatchEncoder {
  enum class Kind { kIdentity, kRandomLinear };
  Kind kind = Kind::kIdentity;
  Eigen::MatrixXd projection;  // out x in, kRandomLinear only

  static PatchEncoder identity();
  static PatchEncoder random_linear(int input_dim, int output_dim,
                                    std::uint64_t seed);
  Eigen::VectorXd apply(const Eigen::VectorXd& flat_patch) const;
};

// Mean L1 in phi-feature space over aligned patch lists.
// Throws std::invalid_argument on count mismatch.
double loss_gen(const std::vector<Eigen::VectorXd>& rendered_patches,
                const std::vector<Eigen::VectorXd>& enhanced_patches,
                const PatchEncoder& encoder);

// The weighted objective over one batch. The generative term is produced by
// the trainer (it renders novel views); `gen_value` folds a precomputed
// beta-weighted value into the breakdown/total without re-deriving it.
LossBreakdown total_loss(const FieldParams& fields, const CrfParams& crf,
                         const WhiteBalance& wb, const SceneContext& scene,
                         const SupervisionBatch& batch,
                         const LossWeights& weights, std::int64_t step,
                         Gradients* grads, double gen_value = 0.0,
                         bool gen_fired = false);

// ---- flat parameter/gradient views (optimizer + finite differences) ------

std::int64_t flat_parameter_count(const FieldParams& fields,
                                  const CrfParams& crf,
                                  const WhiteBalance& wb);
Eigen::VectorXd flatten_parameters(const FieldParams& fields,
                                   const CrfParams& crf,
                                   const WhiteBalance& wb);
void unflatten_parameters(const Eigen::VectorXd& flat, FieldParams& fields,
                          CrfParams& crf, WhiteBalance& wb);
Eigen::VectorXd flatten_gradients(const Gradients& grads,
                                  const FieldParams& fields,
                                  const CrfParams& crf,
                                  const WhiteBalance& wb);

}  // namespace hdrfield
