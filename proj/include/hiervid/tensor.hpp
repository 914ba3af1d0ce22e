#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "hiervid/check.hpp"

namespace hiervid {

using Extent = int64_t;

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Extent> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<Extent> dims) : dims_(std::move(dims)) { validate(); }

  int64_t rank() const { return static_cast<int64_t>(dims_.size()); }
  Extent operator[](int64_t i) const { return dims_[static_cast<size_t>(i)]; }
  const std::vector<Extent>& dims() const { return dims_; }

  int64_t numel() const {
    int64_t n = 1;
    for (Extent d : dims_) n *= d;
    return n;
  }

  bool operator==(const Shape& o) const { return dims_ == o.dims_; }
  bool operator!=(const Shape& o) const { return dims_ != o.dims_; }

  std::string to_string() const {
    std::string s = "[";
    for (size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + "]";
  }

 private:
  void validate() const {
    for (size_t i = 0; i < dims_.size(); ++i)
      HV_REQUIRE(dims_[i] >= 1, "Shape: extent ", i, " must be >= 1, got ",
                 dims_[i]);
  }
  std::vector<Extent> dims_;
};

template <class T>
struct TensorImpl {
  Shape shape;
  std::vector<T> v;
  std::vector<T> g;          // empty until a gradient is accumulated
  bool requires_grad = false;  // leaf parameter / differentiation target
  bool needs_grad = false;     // on a path from some requires_grad tensor

  void ensure_grad() {
    if (g.empty()) g.assign(v.size(), T(0));
  }
};

// Shared handle to a dense N-d array participating in a recorded computation.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.p_ = std::make_shared<TensorImpl<T>>();
    t.p_->shape = std::move(shape);
    t.p_->v.assign(static_cast<size_t>(t.p_->shape.numel()), T(0));
    return t;
  }

  static Tensor full(Shape shape, T value) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.p_->v) x = value;
    return t;
  }

  static Tensor from_vector(Shape shape, std::vector<T> values) {
    HV_REQUIRE(shape.numel() == static_cast<int64_t>(values.size()),
               "Tensor: shape ", shape.to_string(), " wants ", shape.numel(),
               " values, got ", values.size());
    Tensor t;
    t.p_ = std::make_shared<TensorImpl<T>>();
    t.p_->shape = std::move(shape);
    t.p_->v = std::move(values);
    return t;
  }

  static Tensor scalar(T value) { return from_vector(Shape{1}, {value}); }

  bool defined() const { return p_ != nullptr; }
  const Shape& shape() const { return p_->shape; }
  int64_t numel() const { return static_cast<int64_t>(p_->v.size()); }

  T* data() { return p_->v.data(); }
  const T* data() const { return p_->v.data(); }
  std::vector<T>& values() { return p_->v; }
  const std::vector<T>& values() const { return p_->v; }

  T item() const {
    HV_REQUIRE(numel() == 1, "item: tensor has ", numel(), " elements");
    return p_->v[0];
  }

  void set_requires_grad(bool b) {
    p_->requires_grad = b;
    if (b) p_->needs_grad = true;
  }
  bool requires_grad() const { return p_->requires_grad; }
  bool needs_grad() const { return p_->needs_grad; }

  bool has_grad() const { return !p_->g.empty(); }
  // Zero until something was accumulated; allocates on first use.
  std::vector<T>& grad() {
    p_->ensure_grad();
    return p_->g;
  }
  const std::vector<T>& grad() const {
    p_->ensure_grad();
    return p_->g;
  }
  void zero_grad() { p_->g.assign(p_->v.size(), T(0)); }
  void drop_grad() { p_->g.clear(); }

  bool all_finite() const {
    for (T x : p_->v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  std::shared_ptr<TensorImpl<T>> impl() const { return p_; }

 private:
  std::shared_ptr<TensorImpl<T>> p_;
};

// Ordered record of executed ops; replaying it backwards runs reverse-mode
// differentiation, visiting each op exactly once.
template <class T>
class Tape {
 public:
  void record(std::shared_ptr<TensorImpl<T>> out, std::function<void()> fn) {
    steps_.push_back(Step{std::move(out), std::move(fn)});
  }

  size_t size() const { return steps_.size(); }

  void clear() { steps_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and propagates. Ops whose output never
  // received a gradient are skipped, so tensors off the loss path keep
  // exactly-zero gradients.
  void backward(const Tensor<T>& loss) {
    HV_REQUIRE(loss.defined() && loss.numel() == 1,
               "backward: loss must be a scalar tensor");
    loss.impl()->ensure_grad();
    loss.impl()->g[0] = T(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
      if (it->out->g.empty()) continue;
      it->fn();
      if (!it->out->requires_grad) it->out->g.clear();  // consumed; free early
    }
  }

 private:
  struct Step {
    std::shared_ptr<TensorImpl<T>> out;
    std::function<void()> fn;
  };
  std::vector<Step> steps_;
};

}  // namespace hiervid
