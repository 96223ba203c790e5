#pragma once

#include <cstdint>

#include "mctnet/nn.hpp"

namespace mctnet {

struct OptimConfig {
  double lr0 = 0.001;
  double momentum = 0.99;
  double weight_decay = 0.001;
  double decay_factor = 0.1;
  int64_t total_epochs = 30;
  int64_t batch_size = 8;
  double clip_norm = 0.0;  // 0 disables clipping
  uint64_t seed = 0;

  int64_t decay_epoch() const { return total_epochs / 3; }
  void validate() const;
};

/// Piecewise-constant schedule: lr0 before decay_epoch, lr0 * decay_factor
/// from decay_epoch on (single step).
double lr_at(int64_t epoch, const OptimConfig& cfg);

/// Classic momentum SGD with coupled L2 decay:
/// v <- momentum*v + (grad + weight_decay*param); param <- param - lr*v.
/// Requires populated gradients on every trainable entry.
void sgd_step(ParameterStore& params, double lr, const OptimConfig& cfg);

/// Global L2 norm over all trainable gradients.
double grad_norm(const ParameterStore& params);

/// Scales gradients so the global norm is at most max_norm.
void clip_gradients(ParameterStore& params, double max_norm);

}  // namespace mctnet
