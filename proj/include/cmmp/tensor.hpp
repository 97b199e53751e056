#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cmmp/error.hpp"

namespace cmmp {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Dense row-major tensor. T is float for training and double for gradient
// checking. A Tensor is a handle to shared storage: copies alias, operations
// allocate fresh outputs, and only the optimizer writes through an existing
// handle. The gradient buffer exists iff requires_grad.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.d_ = std::make_shared<Data>();
    t.d_->shape = std::move(shape);
    t.d_->values.assign(shape_numel(t.d_->shape), T(0));
    t.set_requires_grad(requires_grad);
    return t;
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.d_->values) v = value;
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size())
      throw ShapeMismatch("value count does not match shape " + shape_str(shape));
    Tensor t;
    t.d_ = std::make_shared<Data>();
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(values);
    t.set_requires_grad(requires_grad);
    return t;
  }

  bool defined() const { return bool(d_); }
  const Shape& shape() const { return d_->shape; }
  std::size_t rank() const { return d_->shape.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape[i]; }
  std::size_t numel() const { return d_->values.size(); }

  std::span<T> values() { return d_->values; }
  std::span<const T> values() const { return d_->values; }
  T* data() { return d_->values.data(); }
  const T* data() const { return d_->values.data(); }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool on) {
    d_->requires_grad = on;
    if (on)
      d_->grad.assign(d_->values.size(), T(0));
    else
      d_->grad.clear();
  }

  std::span<T> grad() { return d_->grad; }
  std::span<const T> grad() const { return d_->grad; }
  T* grad_data() { return d_->grad.data(); }

  void zero_grad() {
    for (auto& g : d_->grad) g = T(0);
  }

  bool same_storage(const Tensor& o) const { return d_ == o.d_; }

 private:
  struct Data {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Data> d_;
};

// Flat offset into an NCHW tensor.
inline std::size_t off4(const Shape& s, std::size_t n, std::size_t c, std::size_t h,
                        std::size_t w) {
  return ((n * s[1] + c) * s[2] + h) * s[3] + w;
}

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace cmmp
