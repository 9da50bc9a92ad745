#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tram {

// Dense row-major tensor of doubles. The model only ever needs rank 1 and 2.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor filled(std::vector<std::size_t> shape, double v);
  static Tensor row_vector(std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // rank-2 accessors
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double v);

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// ---- plain (non-differentiated) numeric kernels ----

Tensor matmul(const Tensor& a, const Tensor& b);

// axis 0 for rank-1; axis 0 (columns) or 1 (rows) for rank-2. Max-subtracted.
Tensor softmax(const Tensor& x, int axis);

// Normalizes the last axis of x: per row zero mean, unit variance, then
// gain/bias. A zero-variance row yields the bias (normalized part is 0).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

std::vector<double> l2_normalize(std::span<const double> x);

// Mean NLL over non-pad positions of logits[t][targets[t]].
double cross_entropy(const Tensor& logits, const std::vector<int>& targets, int pad_id);

Tensor relu(const Tensor& x);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> x);

}  // namespace tram
