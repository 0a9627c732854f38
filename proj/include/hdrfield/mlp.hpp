#pragma once

#include <cstdint>
#include <vector>

#include "hdrfield/common.hpp"

namespace hdrfield {

struct MlpConfig {
  int input_dim = 0;
  int hidden_width = 0;
  int hidden_layers = 0;
  std::vector<int> head_dims;  // one linear head per entry
};

struct MlpParams {
  MlpConfig config;
  std::vector<Eigen::MatrixXd> w;       // trunk weights, layer k: width x in
  std::vector<Eigen::VectorXd> b;       // trunk biases
  std::vector<Eigen::MatrixXd> head_w;  // head weights: dim x width
  std::vector<Eigen::VectorXd> head_b;

  std::int64_t parameter_count() const;
  bool all_finite() const;
};

struct MlpGrad {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
  std::vector<Eigen::MatrixXd> head_w;
  std::vector<Eigen::VectorXd> head_b;

  static MlpGrad zeros_like(const MlpParams& params);
  void add_scaled(const MlpGrad& other, double scale);
};

// Forward cache for one batched evaluation (columns are samples).
struct MlpCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> z;      // pre-activations
  std::vector<Eigen::MatrixXd> h;      // softplus activations
  std::vector<Eigen::MatrixXd> heads;  // raw (linear) head outputs
};

void mlp_forward(const MlpParams& params, const Eigen::MatrixXd& input,
                 MlpCache& cache);

// head_grads holds dL/d(raw head output); entries may be empty (no grad).
// Accumulates parameter gradients into `grad`; when `input_grad` is non-null
// it is resized and overwritten with dL/dinput.
void mlp_backward(const MlpParams& params, const MlpCache& cache,
                  const std::vector<Eigen::MatrixXd>& head_grads,
                  MlpGrad& grad, Eigen::MatrixXd* input_grad);

// Flat serialization order: trunk (w, b) per layer, then heads (w, b).
void mlp_flatten(const MlpParams& params, double* out);
void mlp_unflatten(const double* in, MlpParams& params);
void mlp_grad_flatten(const MlpGrad& grad, double* out);

}  // namespace hdrfield
