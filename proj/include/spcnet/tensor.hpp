#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "spcnet/common.hpp"

namespace spc {

/// Dense row-major tensor. The toolkit only needs ranks 1..4; shape is a
/// small vector and data is a contiguous std::vector of the scalar type.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(numel_of(shape_), T(0));
  }

  Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[size_t(i)]; }
  int rank() const { return int(shape_.size()); }
  int64_t numel() const { return int64_t(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](int64_t i) { return data_[size_t(i)]; }
  const T& operator[](int64_t i) const { return data_[size_t(i)]; }

  // [C,H,W] indexing
  T& at(int c, int h, int w) {
    return data_[size_t((int64_t(c) * shape_[1] + h) * shape_[2] + w)];
  }
  const T& at(int c, int h, int w) const {
    return data_[size_t((int64_t(c) * shape_[1] + h) * shape_[2] + w)];
  }

  // [B,C,H,W] indexing
  T& at(int b, int c, int h, int w) {
    return data_[size_t(((int64_t(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  const T& at(int b, int c, int h, int w) const {
    return data_[size_t(((int64_t(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  void zero() { fill(T(0)); }

  void reshape(std::vector<int> shape) {
    SPC_CHECK(numel_of(shape) == numel(), "reshape changes element count");
    shape_ = std::move(shape);
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void add_(const Tensor& other) {
    SPC_CHECK(same_shape(other), "add_: shape mismatch");
    for (int64_t i = 0; i < numel(); ++i) data_[size_t(i)] += other.data_[size_t(i)];
  }

  void axpy_(T alpha, const Tensor& other) {
    SPC_CHECK(same_shape(other), "axpy_: shape mismatch");
    for (int64_t i = 0; i < numel(); ++i) data_[size_t(i)] += alpha * other.data_[size_t(i)];
  }

  void scale_(T alpha) {
    for (auto& v : data_) v *= alpha;
  }

  T max_value() const {
    T m = data_.empty() ? T(0) : data_[0];
    for (auto v : data_) m = std::max(m, v);
    return m;
  }

  bool all_finite() const {
    for (auto v : data_)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  void fill_normal(Rng& rng, double mean, double stddev) {
    for (auto& v : data_) v = T(rng.normal(mean, stddev));
  }

  void fill_uniform(Rng& rng, double lo, double hi) {
    for (auto& v : data_) v = T(rng.uniform(lo, hi));
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < numel(); ++i) out[i] = U(data_[size_t(i)]);
    return out;
  }

  static int64_t numel_of(const std::vector<int>& shape) {
    int64_t n = shape.empty() ? 0 : 1;
    for (int d : shape) {
      SPC_CHECK(d >= 0, "negative tensor dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = a;
  out.add_(b);
  return out;
}

}  // namespace spc
