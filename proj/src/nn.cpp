#include "mctnet/nn.hpp"

#include <cmath>

namespace mctnet {

Tensor ParameterStore::add(const std::string& name, Tensor value,
                           bool trainable) {
  if (index_.count(name))
    throw UsageError("ParameterStore: duplicate name '" + name + "'");
  if (!value.defined())
    throw UsageError("ParameterStore: undefined tensor for '" + name + "'");
  if (trainable) value.set_requires_grad(true);
  Entry e;
  e.name = name;
  e.value = value;
  e.trainable = trainable;
  if (trainable) e.velocity.assign(static_cast<size_t>(value.numel()), 0.0);
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
  return value;
}

ParameterStore::Entry* ParameterStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

const ParameterStore::Entry* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

int64_t ParameterStore::trainable_numel() const {
  int64_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.value.numel();
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& e : entries_)
    if (e.trainable) e.value.zero_grad();
}

std::optional<std::string> ParameterStore::first_non_finite() const {
  for (const auto& e : entries_) {
    if (!e.value.all_finite()) return e.name;
    if (e.trainable) {
      for (double g : e.value.grad())
        if (!std::isfinite(g)) return e.name + " (grad)";
    }
  }
  return std::nullopt;
}

namespace init {

void kaiming_normal(Tensor& t, int64_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
  for (double& v : t.data()) v = dist(rng);
}

void xavier_normal(Tensor& t, int64_t fan_in, int64_t fan_out, Rng& rng) {
  std::normal_distribution<double> dist(
      0.0, std::sqrt(2.0 / double(fan_in + fan_out)));
  for (double& v : t.data()) v = dist(rng);
}

}  // namespace init

Conv2d::Conv2d(ParameterStore& ps, const std::string& name, Rng& rng,
               int64_t cin, int64_t cout, int64_t k, int64_t stride,
               int64_t pad, bool bias)
    : stride(stride), pad(pad) {
  Tensor weight({cout, cin, k, k});
  init::kaiming_normal(weight, cin * k * k, rng);
  w = ps.add(name + ".w", weight);
  if (bias) b = ps.add(name + ".b", Tensor({cout}, 0.0));
}

DepthwiseConv2d::DepthwiseConv2d(ParameterStore& ps, const std::string& name,
                                 Rng& rng, int64_t channels, int64_t k,
                                 int64_t stride, int64_t pad)
    : stride(stride), pad(pad) {
  Tensor weight({channels, 1, k, k});
  init::kaiming_normal(weight, k * k, rng);
  w = ps.add(name + ".w", weight);
}

Linear::Linear(ParameterStore& ps, const std::string& name, Rng& rng,
               int64_t cin, int64_t cout, bool bias) {
  Tensor weight({cin, cout});
  init::xavier_normal(weight, cin, cout, rng);
  w = ps.add(name + ".w", weight);
  if (bias) b = ps.add(name + ".b", Tensor({cout}, 0.0));
}

BatchNorm2d::BatchNorm2d(ParameterStore& ps, const std::string& name,
                         int64_t channels) {
  gamma = ps.add(name + ".gamma", Tensor({channels}, 1.0));
  beta = ps.add(name + ".beta", Tensor({channels}, 0.0));
  running_mean = ps.add(name + ".running_mean", Tensor({channels}, 0.0),
                        /*trainable=*/false);
  running_var = ps.add(name + ".running_var", Tensor({channels}, 1.0),
                       /*trainable=*/false);
}

LayerNorm::LayerNorm(ParameterStore& ps, const std::string& name,
                     int64_t channels) {
  gamma = ps.add(name + ".gamma", Tensor({channels}, 1.0));
  beta = ps.add(name + ".beta", Tensor({channels}, 0.0));
}

}  // namespace mctnet
