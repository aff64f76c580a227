#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mrt {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles. Most of the library works with rank-2
/// tensors (rows x cols); higher ranks are only used as containers.
class Tensor {
 public:
  Tensor() : Tensor(Shape{1}) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : Tensor(Shape{rows, cols}, fill) {}

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);
  static Tensor scalar(double v) { return Tensor(Shape{1, 1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * shape_[1], shape_[1]}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * shape_[1], shape_[1]};
  }

  void fill(double v);
  /// Reinterprets the same row-major data under a new shape of equal size.
  Tensor reshaped(Shape shape) const;
  Tensor transposed() const;
  bool all_finite() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Dense matrix product. Throws DimensionError naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a^T * b and a * b^T without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);

/// Row-wise softmax, stabilized by subtracting each row's maximum.
Tensor softmax_rows(const Tensor& x);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace mrt
