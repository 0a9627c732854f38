#include "hdrfield/encoding.hpp"

namespace hdrfield {

Eigen::VectorXd encode(const Eigen::VectorXd& value, int num_frequencies,
                       bool include_identity) {
  if (!value.allFinite()) {
    throw std::invalid_argument("encode: non-finite input");
  }
  Eigen::MatrixXd dst(encoded_dim(static_cast<int>(value.size()),
                                  num_frequencies, include_identity),
                      1);
  encode_into(value, num_frequencies, include_identity, dst, 0);
  return dst.col(0);
}

void encode_into(const Eigen::MatrixXd& src, int num_frequencies,
                 bool include_identity, Eigen::MatrixXd& dst, int row0) {
  const auto n = src.rows();
  auto r = row0;
  if (include_identity) {
    dst.middleRows(r, n) = src;
    r += n;
  }
  double scale = 1.0;
  for (int k = 0; k < num_frequencies; ++k) {
    dst.middleRows(r, n) = (src.array() * scale).sin();
    dst.middleRows(r + n, n) = (src.array() * scale).cos();
    r += 2 * n;
    scale *= 2.0;
  }
}

void encode_backward(const Eigen::MatrixXd& src, int num_frequencies,
                     bool include_identity, const Eigen::MatrixXd& dst_grad,
                     int row0, Eigen::MatrixXd& src_grad) {
  const auto n = src.rows();
  auto r = row0;
  if (include_identity) {
    src_grad += dst_grad.middleRows(r, n);
    r += n;
  }
  double scale = 1.0;
  for (int k = 0; k < num_frequencies; ++k) {
    // d sin(s x) = s cos(s x) dx; d cos(s x) = -s sin(s x) dx
    src_grad.array() += dst_grad.middleRows(r, n).array() * scale *
                        (src.array() * scale).cos();
    src_grad.array() -= dst_grad.middleRows(r + n, n).array() * scale *
                        (src.array() * scale).sin();
    r += 2 * n;
    scale *= 2.0;
  }
}

}  // namespace hdrfield
