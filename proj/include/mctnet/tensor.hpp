#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mctnet/error.hpp"

namespace mctnet {

using Shape = std::vector<int64_t>;

int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // same length as data iff requires_grad
  bool requires_grad = false;
};

/// Dense N-dimensional array of doubles, row-major. Copies are shallow:
/// two Tensor handles may share the same storage. Feature maps use NCHW,
/// token sequences use [N, L, C].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values,
                          bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  size_t ndim() const { return impl_->shape.size(); }
  int64_t dim(size_t i) const { return impl_->shape.at(i); }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  std::span<double> grad();
  std::span<const double> grad() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool rg);
  void zero_grad();

  /// Value of a single-element tensor.
  double item() const;
  double& at(std::initializer_list<int64_t> idx);
  double at(std::initializer_list<int64_t> idx) const;

  /// Deep copy (fresh storage, same values; grad buffer not copied).
  Tensor clone() const;

  bool all_finite() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Reverse-mode tape. Ops append one node per executed op, so the node list
/// is topologically ordered by construction; backward() walks it once in
/// reverse. Node outputs get their grad buffers re-zeroed at the start of
/// every backward pass, so leaf gradients accumulate across repeated calls.
class Tape {
 public:
  struct Node {
    std::shared_ptr<TensorImpl> output;
    std::function<void()> backward;
  };

  void record(std::shared_ptr<TensorImpl> output, std::function<void()> backward);
  void backward(const Tensor& loss);
  void clear() { nodes_.clear(); }
  size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

 private:
  std::vector<Node> nodes_;
};

/// The tape ops currently record onto, or nullptr when recording is off.
Tape* active_tape();

/// RAII: makes a tape active for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

namespace detail {
/// Shared op plumbing: if a tape is active and any input requires grad,
/// marks `out` as requiring grad and records `backward` on the tape.
void autodiff_record(Tensor& out, std::initializer_list<const Tensor*> inputs,
                     std::function<void()> backward);
void check_same_shape(const char* op, const Tensor& a, const Tensor& b);
void check_finite(const char* op, const Tensor& t);
}  // namespace detail

}  // namespace mctnet
