#pragma once

#include <functional>
#include <random>
#include <string>

#include "hdrfield/checkpoint.hpp"
#include "hdrfield/losses.hpp"
#include "hdrfield/synth_scene.hpp"

namespace hdrfield {

struct TrainConfig {
  std::int64_t steps = 2000;
  int batch_rays = 128;
  int samples_per_ray = 24;
  double lr = 5e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr_half_life = -1.0;  // < 0: steps / 3
  double crf_lr_scale = 10.0;  // learning-rate multiplier for CRF parameters
  std::uint64_t seed = 1;
  LossWeights weights;
  std::int64_t t_warm_override = -1;  // < 0: 0.4 * steps
  CrfKind crf_kind = CrfKind::kPiecewise;
  double fixed_gamma = 1.0;
  double leak_alpha = 0.01;
  WbSharing wb_sharing = WbSharing::kPerFrame;
  FieldConfig field_config;
  std::string enhancer;  // "", "id", "oracle", "blur"
  std::int64_t checkpoint_every = 1000;
  // Generative novel-view rendering.
  int novel_view_downscale = 2;
  double perturb_rot_deg = 2.0;
  double perturb_trans_frac = 0.02;
  int patch_size = 16;
  PatchEncoder::Kind phi_kind = PatchEncoder::Kind::kIdentity;
  int phi_dim = 64;

  std::uint64_t config_hash() const;  // stable across runs
  double half_life() const { return lr_half_life > 0 ? lr_half_life : steps / 3.0; }
  std::int64_t t_warm() const {
    return t_warm_override >= 0
               ? t_warm_override
               : static_cast<std::int64_t>(0.4 * static_cast<double>(steps));
  }
};

struct EnhancerContext {
  const Image& rendered;   // tone-mapped novel view (training-mode CRF)
  const Image& reference;  // the conditioning training frame, same size
  CameraModel camera;
  double frame_pos = 0.0;       // continuous frame position
  double exposure_scale = 1.0;  // ground-truth scale of the reference frame
  const SceneSpec* scene = nullptr;
};

using Enhancer = std::function<Image(const EnhancerContext&)>;

// "id", "oracle" (ground-truth synthetic render) or "blur" (unsharp mask).
Enhancer make_enhancer(const std::string& name);

struct TrainState {
  FieldParams fields;
  CrfParams crf;
  WhiteBalance wb;
  Eigen::VectorXd adam_m, adam_v;
  std::int64_t adam_t = 0;
  std::mt19937_64 rng;
  std::int64_t step = 0;
  LossWeights weights;  // resolved (t_warm filled in)
  std::uint64_t config_hash = 0;
};

TrainState init_state(const TrainConfig& config, const DatasetBundle& bundle);

struct StepResult {
  LossBreakdown losses;
  bool enhancer_failed = false;
};

// One gradient step over a freshly sampled ray batch; updates every
// learnable parameter except the frozen reference white balance.
// Throws std::runtime_error naming the offending term when a loss turns
// non-finite.
StepResult train_step(TrainState& state, const DatasetBundle& bundle,
                      const TrainConfig& config, const Enhancer* enhancer);

struct GenerativeStep {
  bool fired = false;
  double value = 0.0;  // raw patch-space loss (unweighted)
  Image rendered;
  Image enhanced;
};

// Renders a perturbed novel view, calls the enhancer and accumulates the
// beta_gen-weighted perceptual-patch gradient.
GenerativeStep maybe_generative_step(TrainState& state,
                                     const DatasetBundle& bundle,
                                     const TrainConfig& config,
                                     const Enhancer& enhancer,
                                     Gradients* grads);

// Full run with per-term plain-text logging and periodic checkpoints.
// `resume_from` continues bitwise-identically from a saved checkpoint.
Checkpoint run(const TrainConfig& config, const DatasetBundle& bundle,
               const std::string& out_dir, const std::string& resume_from = "");

Checkpoint state_to_checkpoint(const TrainState& state);
TrainState state_from_checkpoint(const Checkpoint& ckpt,
                                 const TrainConfig& config);

SupervisionBatch sample_batch(TrainState& state, const DatasetBundle& bundle,
                              const TrainConfig& config);

}  // namespace hdrfield
