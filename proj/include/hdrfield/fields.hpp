#pragma once

#include <cstdint>

#include "hdrfield/encoding.hpp"
#include "hdrfield/mlp.hpp"

namespace hdrfield {

struct FieldConfig {
  EncodingConfig encoding;
  int static_hidden_layers = 4;
  int static_hidden_width = 64;
  int dynamic_hidden_layers = 4;
  int dynamic_hidden_width = 64;

  int static_input_dim() const;
  int dynamic_input_dim() const;
};

// Outputs are in HDR: radiance is unbounded non-negative, never clamped to 1.
struct FieldOutputStatic {
  Vec3 radiance = Vec3::Zero();  // >= 0, linear
  double density = 0.0;          // >= 0
  double blend = 0.5;            // in [0,1], 1 = fully static
};

struct FieldOutputDynamic {
  Vec3 radiance = Vec3::Zero();
  double density = 0.0;
  Vec3 flow_forward = Vec3::Zero();   // world-unit displacement to t+1
  Vec3 flow_backward = Vec3::Zero();  // to t-1
  double occ_forward = 0.5;           // in [0,1]
  double occ_backward = 0.5;
};

struct FieldParams {
  FieldConfig config;
  MlpParams static_mlp;
  MlpParams dynamic_mlp;

  std::int64_t parameter_count() const {
    return static_mlp.parameter_count() + dynamic_mlp.parameter_count();
  }
};

// Deterministic for a given seed. Hidden layers use fan-in scaling; the
// radiance/density head biases are set so initial sigma and radiance sit
// near 0.1 (keeps early transmittance alive), and the flow heads start at
// exactly zero so the first warped render equals the direct render.
FieldParams init_params(const FieldConfig& config, std::uint64_t seed);

FieldOutputStatic eval_static(const FieldParams& params, const Vec3& x,
                              const Vec3& d);
FieldOutputDynamic eval_dynamic(const FieldParams& params, const Vec3& x,
                                const Vec3& d, double t);

// ---- batched evaluation (columns are samples) ----------------------------

struct StaticEval {
  MlpCache cache;
  Eigen::MatrixXd radiance;  // 3 x B, activated
  Eigen::ArrayXd density;    // B
  Eigen::ArrayXd blend;      // B
};

struct DynamicEval {
  MlpCache cache;
  Eigen::MatrixXd radiance;
  Eigen::ArrayXd density;
  Eigen::MatrixXd flow_forward;   // 3 x B
  Eigen::MatrixXd flow_backward;  // 3 x B
  Eigen::ArrayXd occ_forward;
  Eigen::ArrayXd occ_backward;
};

// Gradients with respect to the *activated* outputs.
struct StaticGradIn {
  Eigen::MatrixXd radiance;
  Eigen::ArrayXd density;
  Eigen::ArrayXd blend;
  void setZero(Eigen::Index batch);
};

struct DynamicGradIn {
  Eigen::MatrixXd radiance;
  Eigen::ArrayXd density;
  Eigen::MatrixXd flow_forward;
  Eigen::MatrixXd flow_backward;
  Eigen::ArrayXd occ_forward;
  Eigen::ArrayXd occ_backward;
  void setZero(Eigen::Index batch);
};

void eval_static_batch(const FieldParams& params, const Eigen::MatrixXd& x,
                       const Eigen::MatrixXd& d, StaticEval& out);
void eval_dynamic_batch(const FieldParams& params, const Eigen::MatrixXd& x,
                        const Eigen::MatrixXd& d, const Eigen::ArrayXd& t,
                        DynamicEval& out);

void static_backward(const FieldParams& params, const Eigen::MatrixXd& x,
                     const StaticEval& eval, const StaticGradIn& grad_in,
                     MlpGrad& grad);
// position_grad (3 x B), when non-null, receives dL/dx; used to chain
// gradients through scene-flow-warped query positions.
void dynamic_backward(const FieldParams& params, const Eigen::MatrixXd& x,
                      const DynamicEval& eval, const DynamicGradIn& grad_in,
                      MlpGrad& grad, Eigen::MatrixXd* position_grad);

}  // namespace hdrfield
