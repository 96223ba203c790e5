#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mctnet/nn.hpp"
#include "mctnet/tensor.hpp"

namespace mctnet::verify {

// Self-check suite behind `mctnet verify`: brute-force oracles for the core
// ops and finite-difference sweeps through every layer family. The reference
// implementations here are deliberately naive nested loops, independent of
// the op implementations they check.

namespace reference {
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride,
              int64_t pad);
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int64_t stride,
                        int64_t pad);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
/// Explicit per-head attention matrices, naive loops.
Tensor msa(const Tensor& tokens, const Tensor& wq, const Tensor& wk,
           const Tensor& wv, const Tensor& wo, int64_t n_heads);
}  // namespace reference

/// Central finite differences through `loss_fn` (a pure forward evaluation)
/// against the analytic gradient already stored in `param.grad()`. Checks
/// n_coords randomly sampled coordinates; returns the maximum error
/// |fd - ad| / max(1, |fd|, |ad|).
double fd_check(const std::function<double()>& loss_fn, Tensor param,
                int n_coords, Rng& rng, double step = 1e-5);

struct CheckResult {
  std::string name;
  bool ok = false;
  double worst = 0.0;      // worst observed error for the check
  double tolerance = 0.0;
  std::string detail;
};

std::vector<CheckResult> run_all(uint64_t seed);
bool all_ok(const std::vector<CheckResult>& results);
void print_results(const std::vector<CheckResult>& results, std::ostream& os);

// Individual groups (also used by the acceptance suite).
std::vector<CheckResult> conv_oracle_checks(uint64_t seed, int cases);
std::vector<CheckResult> msa_oracle_checks(uint64_t seed, int cases);
std::vector<CheckResult> op_gradient_checks(uint64_t seed);
/// End-to-end finite differences through the full network at toy scale;
/// samples per-layer-family parameter coordinates.
std::vector<CheckResult> network_gradient_checks(uint64_t seed,
                                                 int coords_per_family,
                                                 int64_t image_size);

}  // namespace mctnet::verify
