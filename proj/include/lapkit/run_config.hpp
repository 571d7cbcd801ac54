#pragma once

#include <cstdint>

#include "lapkit/pretrain.hpp"
#include "lapkit/representation.hpp"

namespace lapkit {

// Per-run hyperparameters drawn for the 5-seed variation protocol. The
// three seeds cover distinct roles: environment (data order / masking),
// numeric (dropout and other in-training draws), model (initialization).
struct RunConfig {
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double grad_norm_clip = 1.0;
  std::uint64_t env_seed = 0;
  std::uint64_t numeric_seed = 0;
  std::uint64_t model_seed = 0;
  PretrainMode method = PretrainMode::kBase;
  RepresentationMode mode = RepresentationMode::kFrozen;
  int pretrain_epochs = 5;
};

}  // namespace lapkit
