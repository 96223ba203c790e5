#include "mctnet/optim.hpp"

#include <cmath>

namespace mctnet {

void OptimConfig::validate() const {
  if (!(lr0 > 0)) throw ConfigError("optim: lr0 must be > 0");
  if (momentum < 0 || momentum >= 1)
    throw ConfigError("optim: momentum must be in [0,1)");
  if (weight_decay < 0) throw ConfigError("optim: weight_decay must be >= 0");
  if (!(decay_factor > 0) || decay_factor > 1)
    throw ConfigError("optim: decay_factor must be in (0,1]");
  if (total_epochs < 1) throw ConfigError("optim: total_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("optim: batch_size must be >= 1");
  if (clip_norm < 0) throw ConfigError("optim: clip_norm must be >= 0");
}

double lr_at(int64_t epoch, const OptimConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.total_epochs)
    throw UsageError("lr_at: epoch " + std::to_string(epoch) +
                     " outside [0," + std::to_string(cfg.total_epochs) + ")");
  return epoch < cfg.decay_epoch() ? cfg.lr0 : cfg.lr0 * cfg.decay_factor;
}

void sgd_step(ParameterStore& params, double lr, const OptimConfig& cfg) {
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    auto p = e.value.data();
    auto g = e.value.grad();
    auto& v = e.velocity;
    for (size_t i = 0; i < v.size(); ++i) {
      v[i] = cfg.momentum * v[i] + (g[i] + cfg.weight_decay * p[i]);
      p[i] -= lr * v[i];
    }
  }
}

double grad_norm(const ParameterStore& params) {
  double sq = 0.0;
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    for (double g : e.value.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

void clip_gradients(ParameterStore& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    for (double& g : e.value.grad()) g *= scale;
  }
}

}  // namespace mctnet
