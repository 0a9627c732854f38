#pragma once

#include <string>

#include "hdrfield/fields.hpp"
#include "hdrfield/tonemap.hpp"

namespace hdrfield {

// Self-describing binary container: JSON header (shapes, step, config hash,
// optimizer/rng state) followed by raw 64-bit parameter payloads.
struct Checkpoint {
  FieldParams fields;
  CrfParams crf;
  WhiteBalance wb;
  std::int64_t step = 0;
  std::uint64_t config_hash = 0;
  Eigen::VectorXd adam_m;  // empty when the checkpoint is not resumable
  Eigen::VectorXd adam_v;
  std::int64_t adam_t = 0;
  std::string rng_state;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hdrfield
