#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmmp/rng.hpp"
#include "cmmp/tensor.hpp"

namespace cmmp {

// Uniform Xavier/Glorot init on [-a, a], a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> xavier_init(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng,
                      bool requires_grad = true) {
  if (fan_in == 0 || fan_out == 0) throw ShapeMismatch("xavier fans must be positive");
  const double a = std::sqrt(6.0 / double(fan_in + fan_out));
  Tensor<T> t = Tensor<T>::zeros(std::move(shape), requires_grad);
  for (auto& v : t.values()) v = T(rng.uniform(-a, a));
  return t;
}

// One named trainable tensor plus its Adam moment state. Fan sizes drive
// initialization; zero fans mean zero init (biases).
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::size_t fan_in = 0, fan_out = 0;
  std::vector<double> m, v;  // first/second moment accumulators
};

struct AdamOpts {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam update, in place. `t` is the 1-based step
// index; moments start at zero.
template <typename T>
void adam_step(Parameter<T>& p, const AdamOpts& opt, std::size_t t) {
  const std::size_t n = p.value.numel();
  if (p.value.grad().size() != n)
    throw ShapeMismatch("adam_step: parameter " + p.name + " has no gradient");
  if (p.m.size() != n) p.m.assign(n, 0.0);
  if (p.v.size() != n) p.v.assign(n, 0.0);
  const double bc1 = 1.0 - std::pow(opt.beta1, double(t));
  const double bc2 = 1.0 - std::pow(opt.beta2, double(t));
  T* w = p.value.data();
  const T* g = p.value.grad().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = double(g[i]);
    p.m[i] = opt.beta1 * p.m[i] + (1.0 - opt.beta1) * gi;
    p.v[i] = opt.beta2 * p.v[i] + (1.0 - opt.beta2) * gi * gi;
    const double mhat = p.m[i] / bc1;
    const double vhat = p.v[i] / bc2;
    w[i] = T(double(w[i]) - opt.lr * mhat / (std::sqrt(vhat) + opt.eps));
  }
}

// Ordered collection of uniquely named parameters. Insertion order is the
// checkpoint order and the initialization order.
template <typename T>
class ParamSet {
 public:
  Parameter<T>& add(std::string name, Tensor<T> value, std::size_t fan_in = 0,
                    std::size_t fan_out = 0) {
    if (index_.count(name)) throw ShapeMismatch("duplicate parameter name " + name);
    index_[name] = params_.size();
    params_.push_back(Parameter<T>{std::move(name), std::move(value), fan_in, fan_out, {}, {}});
    return params_.back();
  }

  Parameter<T>& at(const std::string& name) { return params_[index_.at(name)]; }
  const Parameter<T>& at(const std::string& name) const { return params_[index_.at(name)]; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.value);
    return out;
  }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

  // Xavier for weights (nonzero fans), zeros for biases, in insertion order.
  void init(Rng& rng) {
    for (auto& p : params_) {
      if (p.fan_in && p.fan_out) {
        const double a = std::sqrt(6.0 / double(p.fan_in + p.fan_out));
        for (auto& v : p.value.values()) v = T(rng.uniform(-a, a));
      } else {
        for (auto& v : p.value.values()) v = T(0);
      }
      p.m.clear();
      p.v.clear();
    }
  }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
void adam_step_all(ParamSet<T>& params, const AdamOpts& opt, std::size_t t) {
  for (auto& p : params) adam_step(p, opt, t);
}

}  // namespace cmmp
