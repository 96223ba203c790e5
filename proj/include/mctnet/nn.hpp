#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "mctnet/ops.hpp"
#include "mctnet/tensor.hpp"

namespace mctnet {

using Rng = std::mt19937_64;

/// Named, ordered collection of learnable tensors plus their momentum
/// buffers. Non-trainable buffers (batch-norm running statistics) are
/// registered too so checkpoints capture the full model state.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
    std::vector<double> velocity;  // sized like value for trainable entries
  };

  /// Registers a tensor under a unique name and returns it. Trainable
  /// entries get requires_grad set and a zeroed velocity buffer.
  Tensor add(const std::string& name, Tensor value, bool trainable = true);

  Entry* find(const std::string& name);
  const Entry* find(const std::string& name) const;
  Entry& at(size_t i) { return entries_[i]; }
  const Entry& at(size_t i) const { return entries_[i]; }
  size_t size() const { return entries_.size(); }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  int64_t trainable_numel() const;
  void zero_grads();

  /// First entry whose value or gradient holds a non-finite element, if any.
  std::optional<std::string> first_non_finite() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

namespace init {
/// Kaiming-normal fill for conv/linear weights feeding a ReLU family.
void kaiming_normal(Tensor& t, int64_t fan_in, Rng& rng);
/// Xavier-normal fill for projection weights.
void xavier_normal(Tensor& t, int64_t fan_in, int64_t fan_out, Rng& rng);
}  // namespace init

struct Conv2d {
  Tensor w;  // [Cout,Cin,k,k]
  Tensor b;  // [Cout], undefined when bias-free
  int64_t stride = 1;
  int64_t pad = 0;

  Conv2d() = default;
  Conv2d(ParameterStore& ps, const std::string& name, Rng& rng, int64_t cin,
         int64_t cout, int64_t k, int64_t stride, int64_t pad, bool bias);
  Tensor forward(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
};

struct DepthwiseConv2d {
  Tensor w;  // [C,1,k,k]
  int64_t stride = 1;
  int64_t pad = 0;

  DepthwiseConv2d() = default;
  DepthwiseConv2d(ParameterStore& ps, const std::string& name, Rng& rng,
                  int64_t channels, int64_t k, int64_t stride, int64_t pad);
  Tensor forward(const Tensor& x) const {
    return depthwise_conv2d(x, w, stride, pad);
  }
};

struct Linear {
  Tensor w;  // [Cin,Cout]
  Tensor b;  // [Cout], undefined when bias-free

  Linear() = default;
  Linear(ParameterStore& ps, const std::string& name, Rng& rng, int64_t cin,
         int64_t cout, bool bias);
  Tensor forward(const Tensor& x) const { return linear(x, w, b); }
};

struct BatchNorm2d {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNorm2d() = default;
  BatchNorm2d(ParameterStore& ps, const std::string& name, int64_t channels);
  Tensor forward(const Tensor& x, bool training) {
    return batchnorm2d(x, gamma, beta, running_mean, running_var, training,
                       momentum, eps);
  }
};

struct LayerNorm {
  Tensor gamma, beta;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(ParameterStore& ps, const std::string& name, int64_t channels);
  Tensor forward(const Tensor& x) const {
    return layernorm(x, gamma, beta, eps);
  }
};

}  // namespace mctnet
