#include "hdrfield/fields.hpp"

#include <random>

namespace hdrfield {

namespace {

// Head order for the static MLP.
constexpr int kStRadiance = 0;
constexpr int kStDensity = 1;
constexpr int kStBlend = 2;
// Head order for the dynamic MLP.
constexpr int kDyRadiance = 0;
constexpr int kDyDensity = 1;
constexpr int kDyFlowFwd = 2;
constexpr int kDyFlowBwd = 3;
constexpr int kDyOcc = 4;  // rows: forward, backward

Eigen::ArrayXXd shifted_softplus(const Eigen::ArrayXXd& z) {
  const Eigen::ArrayXXd s = z - kOutputShift;
  return s.cwiseMax(0.0) + (-s.cwiseAbs()).exp().log1p();
}

Eigen::ArrayXXd shifted_softplus_deriv(const Eigen::ArrayXXd& z) {
  return 0.5 * (0.5 * (z - kOutputShift)).tanh() + 0.5;
}

Eigen::ArrayXXd sigmoid_act(const Eigen::ArrayXXd& z) {
  return 0.5 * (0.5 * z).tanh() + 0.5;
}

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string("non-finite field input: ") + what);
  }
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                              double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

MlpParams init_mlp(const MlpConfig& config, std::mt19937_64& rng) {
  MlpParams p;
  p.config = config;
  int in = config.input_dim;
  for (int l = 0; l < config.hidden_layers; ++l) {
    p.w.push_back(random_matrix(config.hidden_width, in,
                                1.0 / std::sqrt(static_cast<double>(in)), rng));
    p.b.push_back(Eigen::VectorXd::Zero(config.hidden_width));
    in = config.hidden_width;
  }
  for (int dim : config.head_dims) {
    p.head_w.push_back(random_matrix(
        dim, in, 1.0 / std::sqrt(static_cast<double>(in)), rng));
    p.head_b.push_back(Eigen::VectorXd::Zero(dim));
  }
  return p;
}

}  // namespace

int FieldConfig::static_input_dim() const {
  return encoded_dim(3, encoding.num_frequencies_position,
                     encoding.include_identity) +
         encoded_dim(3, encoding.num_frequencies_direction,
                     encoding.include_identity);
}

int FieldConfig::dynamic_input_dim() const {
  return static_input_dim() + encoded_dim(1, encoding.num_frequencies_time,
                                          encoding.include_identity);
}

FieldParams init_params(const FieldConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FieldParams params;
  params.config = config;

  MlpConfig st{config.static_input_dim(), config.static_hidden_width,
               config.static_hidden_layers, {3, 1, 1}};
  params.static_mlp = init_mlp(st, rng);
  MlpConfig dy{config.dynamic_input_dim(), config.dynamic_hidden_width,
               config.dynamic_hidden_layers, {3, 1, 3, 3, 2}};
  params.dynamic_mlp = init_mlp(dy, rng);

  const double head_bias = kOutputShift + softplus_inv(0.1);
  for (MlpParams* mlp : {&params.static_mlp, &params.dynamic_mlp}) {
    // Keep initial radiance/density close to 0.1 everywhere: shrink the head
    // weights and place the bias at softplus^-1(0.1) past the output shift.
    mlp->head_w[kStRadiance] *= 0.1;
    mlp->head_w[kStDensity] *= 0.1;
    mlp->head_b[kStRadiance].setConstant(head_bias);
    mlp->head_b[kStDensity].setConstant(head_bias);
  }
  params.dynamic_mlp.head_w[kDyFlowFwd].setZero();
  params.dynamic_mlp.head_w[kDyFlowBwd].setZero();
  return params;
}

void StaticGradIn::setZero(Eigen::Index batch) {
  radiance = Eigen::MatrixXd::Zero(3, batch);
  density = Eigen::ArrayXd::Zero(batch);
  blend = Eigen::ArrayXd::Zero(batch);
}

void DynamicGradIn::setZero(Eigen::Index batch) {
  radiance = Eigen::MatrixXd::Zero(3, batch);
  density = Eigen::ArrayXd::Zero(batch);
  flow_forward = Eigen::MatrixXd::Zero(3, batch);
  flow_backward = Eigen::MatrixXd::Zero(3, batch);
  occ_forward = Eigen::ArrayXd::Zero(batch);
  occ_backward = Eigen::ArrayXd::Zero(batch);
}

void eval_static_batch(const FieldParams& params, const Eigen::MatrixXd& x,
                       const Eigen::MatrixXd& d, StaticEval& out) {
  check_finite(x, "position");
  check_finite(d, "direction");
  const auto& enc = params.config.encoding;
  const auto batch = x.cols();
  Eigen::MatrixXd input(params.config.static_input_dim(), batch);
  encode_into(x, enc.num_frequencies_position, enc.include_identity, input, 0);
  encode_into(d, enc.num_frequencies_direction, enc.include_identity, input,
              encoded_dim(3, enc.num_frequencies_position, enc.include_identity));
  mlp_forward(params.static_mlp, input, out.cache);
  out.radiance = shifted_softplus(out.cache.heads[kStRadiance].array());
  out.density = shifted_softplus(out.cache.heads[kStDensity].array()).row(0);
  out.blend = sigmoid_act(out.cache.heads[kStBlend].array()).row(0);
}

void eval_dynamic_batch(const FieldParams& params, const Eigen::MatrixXd& x,
                        const Eigen::MatrixXd& d, const Eigen::ArrayXd& t,
                        DynamicEval& out) {
  check_finite(x, "position");
  check_finite(d, "direction");
  check_finite(t.matrix(), "time");
  const auto& enc = params.config.encoding;
  const auto batch = x.cols();
  Eigen::MatrixXd input(params.config.dynamic_input_dim(), batch);
  int row = 0;
  encode_into(x, enc.num_frequencies_position, enc.include_identity, input, row);
  row += encoded_dim(3, enc.num_frequencies_position, enc.include_identity);
  encode_into(d, enc.num_frequencies_direction, enc.include_identity, input, row);
  row += encoded_dim(3, enc.num_frequencies_direction, enc.include_identity);
  encode_into(t.matrix().transpose(), enc.num_frequencies_time,
              enc.include_identity, input, row);
  mlp_forward(params.dynamic_mlp, input, out.cache);
  out.radiance = shifted_softplus(out.cache.heads[kDyRadiance].array());
  out.density = shifted_softplus(out.cache.heads[kDyDensity].array()).row(0);
  out.flow_forward = out.cache.heads[kDyFlowFwd];
  out.flow_backward = out.cache.heads[kDyFlowBwd];
  const Eigen::ArrayXXd occ = sigmoid_act(out.cache.heads[kDyOcc].array());
  out.occ_forward = occ.row(0);
  out.occ_backward = occ.row(1);
}

void static_backward(const FieldParams& params, const Eigen::MatrixXd& x,
                     const StaticEval& eval, const StaticGradIn& grad_in,
                     MlpGrad& grad) {
  std::vector<Eigen::MatrixXd> head_grads(3);
  head_grads[kStRadiance] =
      (grad_in.radiance.array() *
       shifted_softplus_deriv(eval.cache.heads[kStRadiance].array()))
          .matrix();
  head_grads[kStDensity] =
      (grad_in.density.transpose() *
       shifted_softplus_deriv(eval.cache.heads[kStDensity].array()).row(0))
          .matrix();
  const Eigen::ArrayXd s = eval.blend;
  head_grads[kStBlend] = (grad_in.blend.transpose() * (s * (1.0 - s)).transpose()).matrix();
  mlp_backward(params.static_mlp, eval.cache, head_grads, grad, nullptr);
}

void dynamic_backward(const FieldParams& params, const Eigen::MatrixXd& x,
                      const DynamicEval& eval, const DynamicGradIn& grad_in,
                      MlpGrad& grad, Eigen::MatrixXd* position_grad) {
  std::vector<Eigen::MatrixXd> head_grads(5);
  head_grads[kDyRadiance] =
      (grad_in.radiance.array() *
       shifted_softplus_deriv(eval.cache.heads[kDyRadiance].array()))
          .matrix();
  head_grads[kDyDensity] =
      (grad_in.density.transpose() *
       shifted_softplus_deriv(eval.cache.heads[kDyDensity].array()).row(0))
          .matrix();
  head_grads[kDyFlowFwd] = grad_in.flow_forward;
  head_grads[kDyFlowBwd] = grad_in.flow_backward;
  Eigen::MatrixXd occ_grad(2, eval.occ_forward.size());
  occ_grad.row(0) =
      (grad_in.occ_forward * eval.occ_forward * (1.0 - eval.occ_forward))
          .matrix()
          .transpose();
  occ_grad.row(1) =
      (grad_in.occ_backward * eval.occ_backward * (1.0 - eval.occ_backward))
          .matrix()
          .transpose();
  head_grads[kDyOcc] = occ_grad;

  Eigen::MatrixXd input_grad;
  mlp_backward(params.dynamic_mlp, eval.cache, head_grads, grad,
               position_grad != nullptr ? &input_grad : nullptr);
  if (position_grad != nullptr) {
    const auto& enc = params.config.encoding;
    position_grad->setZero(3, x.cols());
    encode_backward(x, enc.num_frequencies_position, enc.include_identity,
                    input_grad, 0, *position_grad);
  }
}

FieldOutputStatic eval_static(const FieldParams& params, const Vec3& x,
                              const Vec3& d) {
  StaticEval eval;
  eval_static_batch(params, x, d, eval);
  FieldOutputStatic out;
  out.radiance = eval.radiance.col(0);
  out.density = eval.density(0);
  out.blend = eval.blend(0);
  return out;
}

FieldOutputDynamic eval_dynamic(const FieldParams& params, const Vec3& x,
                                const Vec3& d, double t) {
  DynamicEval eval;
  Eigen::ArrayXd time(1);
  time(0) = t;
  eval_dynamic_batch(params, x, d, time, eval);
  FieldOutputDynamic out;
  out.radiance = eval.radiance.col(0);
  out.density = eval.density(0);
  out.flow_forward = eval.flow_forward.col(0);
  out.flow_backward = eval.flow_backward.col(0);
  out.occ_forward = eval.occ_forward(0);
  out.occ_backward = eval.occ_backward(0);
  return out;
}

}  // namespace hdrfield
