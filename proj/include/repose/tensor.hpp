#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace repose {

// Dense row-major numeric array. Rank 1..4; network activations use the
// NCHW convention (batch, channels, height, width).
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> dims, T fill = T(0)) : dims_(std::move(dims)) {
    if (dims_.empty() || dims_.size() > 4)
      throw std::invalid_argument("tensor rank must be 1..4, got " + std::to_string(dims_.size()));
    std::int64_t total = 1;
    for (int d : dims_) {
      if (d <= 0) throw std::invalid_argument("tensor dims must be positive, got " + shape_string());
      total *= d;
    }
    data_.assign(static_cast<std::size_t>(total), fill);
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.dims_); }

  bool defined() const { return !dims_.empty(); }
  int rank() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  const std::vector<int>& dims() const { return dims_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  // NCHW accessors, valid for rank-4 tensors.
  int n() const { return dims_.at(0); }
  int c() const { return dims_.at(1); }
  int h() const { return dims_.at(2); }
  int w() const { return dims_.at(3); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  T& at(int b, int ch, int y, int x) {
    return data_[((static_cast<std::size_t>(b) * dims_[1] + ch) * dims_[2] + y) * dims_[3] + x];
  }
  const T& at(int b, int ch, int y, int x) const {
    return data_[((static_cast<std::size_t>(b) * dims_[1] + ch) * dims_[2] + y) * dims_[3] + x];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

  std::string shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
    os << ']';
    return os.str();
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(dims_);
    for (std::int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool operator==(const Tensor& other) const { return dims_ == other.dims_ && data_ == other.data_; }

 private:
  std::vector<int> dims_;
  std::vector<T> data_;
};

inline void check_same_spatial(const std::vector<int>& a, const std::vector<int>& b, const char* op) {
  if (a.size() != 4 || b.size() != 4 || a[0] != b[0] || a[2] != b[2] || a[3] != b[3]) {
    std::ostringstream os;
    os << op << ": batch/spatial dims differ";
    throw std::invalid_argument(os.str());
  }
}

}  // namespace repose
