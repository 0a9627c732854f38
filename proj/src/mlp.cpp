#include "hdrfield/mlp.hpp"

namespace hdrfield {

namespace {

// Numerically stable softplus / sigmoid on arrays.
Eigen::ArrayXXd softplus_array(const Eigen::ArrayXXd& z) {
  return z.cwiseMax(0.0) + (-z.cwiseAbs()).exp().log1p();
}

Eigen::ArrayXXd sigmoid_array(const Eigen::ArrayXXd& z) {
  return 0.5 * (0.5 * z).tanh() + 0.5;
}

}  // namespace

std::int64_t MlpParams::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& m : w) n += m.size();
  for (const auto& v : b) n += v.size();
  for (const auto& m : head_w) n += m.size();
  for (const auto& v : head_b) n += v.size();
  return n;
}

bool MlpParams::all_finite() const {
  for (const auto& m : w)
    if (!m.allFinite()) return false;
  for (const auto& v : b)
    if (!v.allFinite()) return false;
  for (const auto& m : head_w)
    if (!m.allFinite()) return false;
  for (const auto& v : head_b)
    if (!v.allFinite()) return false;
  return true;
}

MlpGrad MlpGrad::zeros_like(const MlpParams& params) {
  MlpGrad g;
  for (const auto& m : params.w) g.w.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
  for (const auto& v : params.b) g.b.push_back(Eigen::VectorXd::Zero(v.size()));
  for (const auto& m : params.head_w)
    g.head_w.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
  for (const auto& v : params.head_b)
    g.head_b.push_back(Eigen::VectorXd::Zero(v.size()));
  return g;
}

void MlpGrad::add_scaled(const MlpGrad& other, double scale) {
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += scale * other.w[i];
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += scale * other.b[i];
  for (std::size_t i = 0; i < head_w.size(); ++i) head_w[i] += scale * other.head_w[i];
  for (std::size_t i = 0; i < head_b.size(); ++i) head_b[i] += scale * other.head_b[i];
}

void mlp_forward(const MlpParams& params, const Eigen::MatrixXd& input,
                 MlpCache& cache) {
  const int layers = params.config.hidden_layers;
  cache.input = input;
  cache.z.resize(layers);
  cache.h.resize(layers);
  const Eigen::MatrixXd* prev = &cache.input;
  for (int l = 0; l < layers; ++l) {
    cache.z[l].noalias() = params.w[l] * (*prev);
    cache.z[l].colwise() += params.b[l];
    cache.h[l] = softplus_array(cache.z[l].array());
    prev = &cache.h[l];
  }
  cache.heads.resize(params.head_w.size());
  for (std::size_t i = 0; i < params.head_w.size(); ++i) {
    cache.heads[i].noalias() = params.head_w[i] * (*prev);
    cache.heads[i].colwise() += params.head_b[i];
  }
}

void mlp_backward(const MlpParams& params, const MlpCache& cache,
                  const std::vector<Eigen::MatrixXd>& head_grads,
                  MlpGrad& grad, Eigen::MatrixXd* input_grad) {
  const int layers = params.config.hidden_layers;
  const Eigen::MatrixXd& top =
      layers > 0 ? cache.h[layers - 1] : cache.input;
  Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(top.rows(), top.cols());
  for (std::size_t i = 0; i < params.head_w.size(); ++i) {
    if (head_grads[i].size() == 0) continue;
    grad.head_w[i].noalias() += head_grads[i] * top.transpose();
    grad.head_b[i] += head_grads[i].rowwise().sum();
    dh.noalias() += params.head_w[i].transpose() * head_grads[i];
  }
  for (int l = layers - 1; l >= 0; --l) {
    // d softplus = sigmoid
    Eigen::MatrixXd dz = (dh.array() * sigmoid_array(cache.z[l].array())).matrix();
    const Eigen::MatrixXd& below = l > 0 ? cache.h[l - 1] : cache.input;
    grad.w[l].noalias() += dz * below.transpose();
    grad.b[l] += dz.rowwise().sum();
    if (l > 0 || input_grad != nullptr) {
      dh.noalias() = params.w[l].transpose() * dz;
    }
  }
  if (input_grad != nullptr) {
    *input_grad = dh;
  }
}

namespace {
template <typename F>
void walk(const MlpParams& p, F&& f) {
  for (const auto& m : p.w) f(m.data(), m.size());
  for (const auto& v : p.b) f(v.data(), v.size());
  for (const auto& m : p.head_w) f(m.data(), m.size());
  for (const auto& v : p.head_b) f(v.data(), v.size());
}
}  // namespace

void mlp_flatten(const MlpParams& params, double* out) {
  walk(params, [&](const double* d, Eigen::Index n) {
    std::copy(d, d + n, out);
    out += n;
  });
}

void mlp_unflatten(const double* in, MlpParams& params) {
  auto read = [&](double* d, Eigen::Index n) {
    std::copy(in, in + n, d);
    in += n;
  };
  for (auto& m : params.w) read(m.data(), m.size());
  for (auto& v : params.b) read(v.data(), v.size());
  for (auto& m : params.head_w) read(m.data(), m.size());
  for (auto& v : params.head_b) read(v.data(), v.size());
}

void mlp_grad_flatten(const MlpGrad& grad, double* out) {
  auto push = [&](const double* d, Eigen::Index n) {
    std::copy(d, d + n, out);
    out += n;
  };
  for (const auto& m : grad.w) push(m.data(), m.size());
  for (const auto& v : grad.b) push(v.data(), v.size());
  for (const auto& m : grad.head_w) push(m.data(), m.size());
  for (const auto& v : grad.head_b) push(v.data(), v.size());
}

}  // namespace hdrfield
