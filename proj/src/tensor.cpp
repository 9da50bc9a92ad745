#include "tram/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "tram/common.hpp"

namespace tram {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(product(shape_), 0.0) {
  for (std::size_t d : shape_) check(d > 0, "tensor: extents must be positive");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_) check(d > 0, "tensor: extents must be positive");
  check(product(shape_) == data_.size(), "tensor: shape does not match data length");
}

Tensor Tensor::filled(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::row_vector(std::vector<double> data) {
  std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

std::size_t Tensor::rows() const {
  check(ndim() == 2, "tensor: rows() needs rank 2");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  check(ndim() == 2, "tensor: cols() needs rank 2");
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

std::span<double> Tensor::row(std::size_t r) {
  return std::span<double>(data_.data() + r * cols(), cols());
}

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data_.data() + r * shape_[1], shape_[1]);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.ndim() == 2, "matmul: operands must be rank 2");
  check(a.cols() == b.rows(), "matmul: inner dimensions disagree");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      double av = pa[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = pb + kk * n;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

namespace {

void softmax_span(std::span<const double> in, std::span<double> out) {
  double mx = in[0];
  for (double v : in) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] /= sum;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  check(!x.empty(), "softmax: empty axis");
  if (x.ndim() == 1) {
    check(axis == 0, "softmax: rank-1 tensor only has axis 0");
    Tensor y(x.shape());
    softmax_span(std::span<const double>(x.data()), std::span<double>(y.data()));
    return y;
  }
  check(x.ndim() == 2, "softmax: rank must be 1 or 2");
  check(axis == 0 || axis == 1, "softmax: axis out of range");
  Tensor y(x.shape());
  if (axis == 1) {
    for (std::size_t r = 0; r < x.rows(); ++r) softmax_span(x.row(r), y.row(r));
  } else {
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> col(m), out(m);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < m; ++i) col[i] = x.at(i, j);
      softmax_span(col, std::span<double>(out));
      for (std::size_t i = 0; i < m; ++i) y.at(i, j) = out[i];
    }
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const bool vec = x.ndim() == 1;
  const std::size_t n = vec ? x.numel() : x.cols();
  check(n >= 2, "layer_norm: last axis must have length >= 2");
  check(gain.numel() == n && bias.numel() == n, "layer_norm: gain/bias length mismatch");
  Tensor y(x.shape());
  const std::size_t rows = vec ? 1 : x.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double* out = y.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += in[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double d = in[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double denom = std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      double normed = denom == 0.0 ? 0.0 : (in[j] - mean) / denom;
      out[j] = gain[j] * normed + bias[j];
    }
  }
  return y;
}

std::vector<double> l2_normalize(std::span<const double> x) {
  check(!x.empty(), "l2_normalize: empty vector");
  double n = norm2(x);
  check(n > 0.0, "l2_normalize: zero vector");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / n;
  return out;
}

double cross_entropy(const Tensor& logits, const std::vector<int>& targets, int pad_id) {
  check(logits.ndim() == 2, "cross_entropy: logits must be rank 2");
  check(logits.rows() == targets.size(), "cross_entropy: target count mismatch");
  const std::size_t v = logits.cols();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] == pad_id) continue;
    check(targets[t] >= 0 && static_cast<std::size_t>(targets[t]) < v,
          "cross_entropy: target id out of range");
    auto row = logits.row(t);
    double mx = row[0];
    for (double x : row) mx = std::max(mx, x);
    double sum = 0.0;
    for (double x : row) sum += std::exp(x - mx);
    total += (std::log(sum) + mx) - row[static_cast<std::size_t>(targets[t])];
    ++count;
  }
  check(count > 0, "cross_entropy: all-pad target sequence");
  return total / static_cast<double>(count);
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> x) {
  return std::sqrt(dot(x, x));
}

}  // namespace tram
