#include "mctnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace mctnet {

int64_t numel_of(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw DimensionError("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<size_t>(numel_of(impl_->shape)), fill);
  if (requires_grad) set_requires_grad(true);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values,
                         bool requires_grad) {
  if (numel_of(shape) != static_cast<int64_t>(values.size())) {
    throw DimensionError("from_data: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(shape));
  }
  Tensor t;
  t.impl_ = std::make_shared<TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(values);
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

std::span<double> Tensor::grad() {
  if (!requires_grad()) throw UsageError("grad(): tensor does not require grad");
  return impl_->grad;
}

std::span<const double> Tensor::grad() const {
  if (!requires_grad()) throw UsageError("grad(): tensor does not require grad");
  return impl_->grad;
}

void Tensor::set_requires_grad(bool rg) {
  if (!impl_) throw UsageError("set_requires_grad on undefined tensor");
  impl_->requires_grad = rg;
  if (rg) {
    impl_->grad.assign(impl_->data.size(), 0.0);
  } else {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

void Tensor::zero_grad() {
  if (requires_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw UsageError("item(): tensor has " + std::to_string(numel()) +
                     " elements");
  }
  return impl_->data[0];
}

namespace {
size_t flat_index(const Shape& shape, std::initializer_list<int64_t> idx) {
  if (idx.size() != shape.size())
    throw DimensionError("index rank mismatch for shape " + shape_str(shape));
  size_t flat = 0;
  size_t i = 0;
  for (int64_t v : idx) {
    if (v < 0 || v >= shape[i])
      throw DimensionError("index out of range for shape " + shape_str(shape));
    flat = flat * static_cast<size_t>(shape[i]) + static_cast<size_t>(v);
    ++i;
  }
  return flat;
}
}  // namespace

double& Tensor::at(std::initializer_list<int64_t> idx) {
  return impl_->data[flat_index(impl_->shape, idx)];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  return impl_->data[flat_index(impl_->shape, idx)];
}

Tensor Tensor::clone() const {
  if (!impl_) return {};
  return from_data(impl_->shape, impl_->data, false);
}

bool Tensor::all_finite() const {
  for (double v : impl_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ---- tape ----

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = prev_; }

void Tape::record(std::shared_ptr<TensorImpl> output,
                  std::function<void()> backward) {
  nodes_.push_back(Node{std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw UsageError("backward: loss must be a defined scalar tensor");
  if (!loss.requires_grad())
    throw UsageError("backward: loss does not require grad (nothing recorded)");

  // Node outputs get fresh gradients every pass; leaves keep accumulating.
  for (auto& n : nodes_) {
    if (n.output && n.output->requires_grad)
      std::fill(n.output->grad.begin(), n.output->grad.end(), 0.0);
  }
  loss.impl()->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward();
  }
}

namespace detail {

void autodiff_record(Tensor& out, std::initializer_list<const Tensor*> inputs,
                     std::function<void()> backward) {
  Tape* tape = active_tape();
  if (!tape) return;
  bool needs = false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) {
      needs = true;
      break;
    }
  }
  if (!needs) return;
  out.set_requires_grad(true);
  tape->record(out.impl(), std::move(backward));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void check_finite(const char* op, const Tensor& t) {
  if (!t.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite values");
  }
}

}  // namespace detail

}  // namespace mctnet
