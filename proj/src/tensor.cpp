#include "mrt/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "mrt/error.hpp"

namespace mrt {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + ": expected a rank-2 tensor, got " +
                         shape_string(t.shape()));
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  if (shape_.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be >= 1, got " + shape_string(shape_));
  }
  data_.assign(std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                               std::multiplies<>()),
               fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : Tensor(std::move(shape)) {
  if (data.size() != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_string(shape_));
  }
  data_ = std::move(data);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  require_rank2(*this, "rows");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_rank2(*this, "cols");
  return shape_[1];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  Tensor out(std::move(shape));
  if (out.size() != size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                         shape_string(out.shape()));
  }
  out.data_ = data_;
  return out;
}

Tensor Tensor::transposed() const {
  Tensor out(cols(), rows());
  for (std::size_t i = 0; i < rows(); ++i)
    for (std::size_t j = 0; j < cols(); ++j) out(j, i) = (*this)(i, j);
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw DimensionError("cannot add " + shape_string(other.shape_) + " to " +
                         shape_string(shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ: " + shape_string(a.shape()) +
                         " * " + shape_string(b.shape()));
  }
  Tensor out(a.rows(), b.cols());
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_tn");
  require_rank2(b, "matmul_tn");
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: row counts differ: " + shape_string(a.shape()) +
                         "^T * " + shape_string(b.shape()));
  }
  Tensor out(a.cols(), b.cols());
  as_matrix(out).noalias() = as_matrix(a).transpose() * as_matrix(b);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: column counts differ: " + shape_string(a.shape()) +
                         " * " + shape_string(b.shape()) + "^T");
  }
  Tensor out(a.rows(), b.rows());
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b).transpose();
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  Tensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (auto& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (auto& v : row) v /= sum;
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: shapes differ: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace mrt
