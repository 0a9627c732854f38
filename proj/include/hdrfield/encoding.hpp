#pragma once

#include "hdrfield/common.hpp"

namespace hdrfield {

struct EncodingConfig {
  int num_frequencies_position = 6;
  int num_frequencies_direction = 2;
  int num_frequencies_time = 4;
  bool include_identity = true;
};

inline int encoded_dim(int n, int num_frequencies, bool include_identity) {
  return n * ((include_identity ? 1 : 0) + 2 * num_frequencies);
}

// [x?, sin(2^0 x), cos(2^0 x), ..., sin(2^{K-1} x), cos(2^{K-1} x)],
// sin/cos applied componentwise, frequencies doubling from 1.
Eigen::VectorXd encode(const Eigen::VectorXd& value, int num_frequencies,
                       bool include_identity);

// Batched: encodes the columns of `src` (n x B) into rows
// [row0, row0 + encoded_dim) of `dst`.
void encode_into(const Eigen::MatrixXd& src, int num_frequencies,
                 bool include_identity, Eigen::MatrixXd& dst, int row0);

// Accumulates dL/dsrc given the gradient of the encoded block.
void encode_backward(const Eigen::MatrixXd& src, int num_frequencies,
                     bool include_identity, const Eigen::MatrixXd& dst_grad,
                     int row0, Eigen::MatrixXd& src_grad);

}  // namespace hdrfield
