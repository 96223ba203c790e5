#pragma once

#include <cstring>
#include <random>
#include <string>

#include "mctnet/nn.hpp"
#include "mctnet/tensor.hpp"

namespace testutil {

inline mctnet::Tensor random_tensor(mctnet::Shape shape, mctnet::Rng& rng,
                                    bool requires_grad = false,
                                    double away_from_zero = 0.0) {
  mctnet::Tensor t(std::move(shape), 0.0, requires_grad);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : t.data()) {
    v = dist(rng);
    if (away_from_zero > 0 && std::fabs(v) < away_from_zero)
      v = v < 0 ? v - away_from_zero : v + away_from_zero;
  }
  return t;
}

inline double max_abs_diff(const mctnet::Tensor& a, const mctnet::Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst,
                     std::fabs(a.data()[size_t(i)] - b.data()[size_t(i)]));
  return worst;
}

inline bool bit_identical(const mctnet::Tensor& a, const mctnet::Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(),
                     size_t(a.numel()) * sizeof(double)) == 0;
}

inline std::string tensor_bytes(const mctnet::Tensor& t) {
  return std::string(reinterpret_cast<const char*>(t.data().data()),
                     size_t(t.numel()) * sizeof(double));
}

}  // namespace testutil
