#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fvlink/errors.hpp"

namespace fvlink {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

// Dense row-major double tensor. Only rank 1 (vectors, biases) and rank 2
// (row batches, weight matrices) are used; scalars are shape {1}.
class Tensor {
 public:
  Tensor() : shape_{1}, values_(1, 0.0) {}

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_shape();
    values_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape();
    if (values_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor: " + std::to_string(values_.size()) + " values for shape " + shape_str(shape_));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor(Shape{rows, cols}, std::vector<double>(values));
  }

  static Tensor vector(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
  }

  static Tensor identity(std::size_t n) {
    Tensor t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }

  // A rank-1 tensor is treated as a single row.
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.back(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != size()) {
      throw ShapeError("reshape: " + shape_str(shape_) + " -> " + shape_str(shape));
    }
    return Tensor(std::move(shape), values_);
  }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Tensor& other) const = default;

 private:
  void check_shape() const {
    if (shape_.empty()) throw ShapeError("tensor: empty shape");
    for (std::size_t d : shape_)
      if (d == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<double> values_;
};

struct Param {
  Tensor value;
  bool trainable = true;
};

// Named parameters in insertion-independent (sorted) order, each carrying a
// trainable flag. Optimizers only ever touch trainable entries.
class ParamSet {
 public:
  void add(const std::string& name, Tensor value, bool trainable = true) {
    if (params_.count(name)) throw PreconditionError("duplicate parameter name: " + name);
    params_.emplace(name, Param{std::move(value), trainable});
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  const Param& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw LookupError("unknown parameter: " + name);
    return it->second;
  }
  Param& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw LookupError("unknown parameter: " + name);
    return it->second;
  }

  const Tensor& value(const std::string& name) const { return get(name).value; }
  Tensor& value(const std::string& name) { return get(name).value; }

  void set_trainable(const std::string& name, bool trainable) { get(name).trainable = trainable; }

  void erase(const std::string& name) { params_.erase(name); }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  bool operator==(const ParamSet& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (const auto& [name, p] : params_) {
      auto it = other.params_.find(name);
      if (it == other.params_.end() || it->second.trainable != p.trainable || !(it->second.value == p.value)) {
        return false;
      }
    }
    return true;
  }

 private:
  std::map<std::string, Param> params_;
};

using GradMap = std::map<std::string, Tensor>;

}  // namespace fvlink
