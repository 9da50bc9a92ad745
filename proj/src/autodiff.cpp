#include "tram/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "tram/common.hpp"

namespace tram {

Parameter& ParameterSet::create(std::string name, Tensor init) {
  check(find(name) == nullptr, "parameter set: duplicate name " + name);
  items_.push_back(std::make_unique<Parameter>(std::move(name), std::move(init)));
  return *items_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : items_)
    if (p->name == name) return p.get();
  return nullptr;
}

void ParameterSet::zero_grad_all() {
  for (auto& p : items_) p->zero_grad();
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p->value.numel();
  return n;
}

const Tensor& Value::tensor() const {
  check(tape_ != nullptr, "autodiff: value not attached to a tape");
  return tape_->value_of(*this);
}

int relative_bucket(int delta, int clip) {
  if (delta < -clip) delta = -clip;
  if (delta > clip) delta = clip;
  return delta + clip;
}

Value Tape::push(Tensor value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = grad_enabled_ && needs_grad;
  if (n.needs_grad) n.grad = Tensor::zeros(n.value.shape());
  nodes_.push_back(std::move(n));
  return Value(this, nodes_.size() - 1);
}

Tape::Node& Tape::node(Value v) { return nodes_[v.id()]; }

void Tape::expect_same_tape(Value v) const {
  check(v.valid(), "autodiff: unrecorded tensor");
  check(&v.tensor() == &nodes_[v.id()].value, "autodiff: value from another tape");
}

const Tensor& Tape::value_of(Value v) const { return nodes_[v.id()].value; }

const Tensor& Tape::grad_of(Value v) const {
  check(nodes_[v.id()].needs_grad, "autodiff: node has no gradient");
  return nodes_[v.id()].grad;
}

Value Tape::constant(Tensor v) { return push(std::move(v), false); }

Value Tape::leaf(Parameter& p) {
  Value out = push(p.value, true);
  if (!grad_enabled_) return out;
  Parameter* pp = &p;
  std::size_t oi = out.id();
  nodes_[oi].back = [this, pp, oi]() {
    const Tensor& g = nodes_[oi].grad;
    for (std::size_t i = 0; i < g.numel(); ++i) pp->grad[i] += g[i];
  };
  return out;
}

Value Tape::gather_rows(Parameter& table, std::vector<int> ids) {
  check(table.value.ndim() == 2, "gather_rows: table must be rank 2");
  const std::size_t v = table.value.rows(), d = table.value.cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < v, "gather_rows: id out of range");
    auto src = table.value.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  Value node_out = push(std::move(out), true);
  if (!grad_enabled_) return node_out;
  Parameter* pt = &table;
  std::size_t oi = node_out.id();
  nodes_[oi].back = [this, pt, oi, ids = std::move(ids)]() {
    const Tensor& g = nodes_[oi].grad;
    const std::size_t d = g.cols();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto dst = pt->grad.row(static_cast<std::size_t>(ids[i]));
      auto src = g.row(i);
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  };
  return node_out;
}

Value Tape::matmul(Value a, Value b) {
  expect_same_tape(a);
  expect_same_tape(b);
  Tensor c = tram::matmul(value_of(a), value_of(b));
  bool ng = node(a).needs_grad || node(b).needs_grad;
  Value out = push(std::move(c), ng);
  if (!grad_enabled_ || !ng) return out;
  std::size_t ai = a.id(), bi = b.id(), oi = out.id();
  nodes_[oi].back = [this, ai, bi, oi]() {
    const Tensor& A = nodes_[ai].value;
    const Tensor& B = nodes_[bi].value;
    const Tensor& G = nodes_[oi].grad;
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    if (nodes_[ai].needs_grad) {
      Tensor& dA = nodes_[ai].grad;
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G.data().data() + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double* brow = B.data().data() + kk * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          dA.at(i, kk) += s;
        }
      }
    }
    if (nodes_[bi].needs_grad) {
      Tensor& dB = nodes_[bi].grad;
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G.data().data() + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
          double av = A.at(i, kk);
          if (av == 0.0) continue;
          double* drow = dB.data().data() + kk * n;
          for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
        }
      }
    }
  };
  return out;
}

Value Tape::transpose(Value a) {
  expect_same_tape(a);
  const Tensor& A = value_of(a);
  check(A.ndim() == 2, "transpose: rank 2 required");
  Tensor t({A.cols(), A.rows()});
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) t.at(j, i) = A.at(i, j);
  Value out = push(std::move(t), node(a).needs_grad);
  if (!grad_enabled_ || !node(a).needs_grad) return out;
  std::size_t ai = a.id(), oi = out.id();
  nodes_[oi].back = [this, ai, oi]() {
    const Tensor& G = nodes_[oi].grad;
    Tensor& dA = nodes_[ai].grad;
    for (std::size_t i = 0; i < G.rows(); ++i)
      for (std::size_t j = 0; j < G.cols(); ++j) dA.at(j, i) += G.at(i, j);
  };
  return out;
}

Value Tape::add(Value a, Value b) {
  expect_same_tape(a);
  expect_same_tape(b);
  const Tensor& A = value_of(a);
  const Tensor& B = value_of(b);
  check(A.same_shape(B), "add: shape mismatch");
  Tensor c(A.shape());
  for (std::size_t i = 0; i < A.numel(); ++i) c[i] = A[i] + B[i];
  bool ng = node(a).needs_grad || node(b).needs_grad;
  Value out = push(std::move(c), ng);
  if (!grad_enabled_ || !ng) return out;
  std::size_t ai = a.id(), bi = b.id(), oi = out.id();
  nodes_[oi].back = [this, ai, bi, oi]() {
    const Tensor& G = nodes_[oi].grad;
    if (nodes_[ai].needs_grad) {
      Tensor& dA = nodes_[ai].grad;
      for (std::size_t i = 0; i < G.numel(); ++i) dA[i] += G[i];
    }
    if (nodes_[bi].needs_grad) {
      Tensor& dB = nodes_[bi].grad;
      for (std::size_t i = 0; i < G.numel(); ++i) dB[i] += G[i];
    }
  };
  return out;
}

Value Tape::mul(Value a, Value b) {
  expect_same_tape(a);
  expect_same_tape(b);
  const Tensor& A = value_of(a);
  const Tensor& B = value_of(b);
  check(A.same_shape(B), "mul: shape mismatch");
  Tensor c(A.shape());
  for (std::size_t i = 0; i < A.numel(); ++i) c[i] = A[i] * B[i];
  bool ng = node(a).needs_grad || node(b).needs_grad;
  Value out = push(std::move(c), ng);
  if (!grad_enabled_ || !ng) return out;
  std::size_t ai = a.id(), bi = b.id(), oi = out.id();
  nodes_[oi].back = [this, ai, bi, oi]() {
    const Tensor& A = nodes_[ai].value;
    const Tensor& B = nodes_[bi].value;
    const Tensor& G = nodes_[oi].grad;
    if (nodes_[ai].needs_grad) {
      Tensor& dA = nodes_[ai].grad;
      for (std::size_t i = 0; i < G.numel(); ++i) dA[i] += G[i] * B[i];
    }
    if (nodes_[bi].needs_grad) {
      Tensor& dB = nodes_[bi].grad;
      for (std::size_t i = 0; i < G.numel(); ++i) dB[i] += G[i] * A[i];
    }
  };
  return out;
}

Value Tape::mul_scalar(Value a, double c) {
  expect_same_tape(a);
  const Tensor& A = value_of(a);
  Tensor y(A.shape());
  for (std::size_t i = 0; i < A.numel(); ++i) y[i] = A[i] * c;
  Value out = push(std::move(y), node(a).needs_grad);
  if (!grad_enabled_ || !node(a).needs_grad) return out;
  std::size_t ai = a.id(), oi = out.id();
  nodes_[oi].back = [this, ai, oi, c]() {
    const Tensor& G = nodes_[oi].grad;
    Tensor& dA = nodes_[ai].grad;
    for (std::size_t i = 0; i < G.numel(); ++i) dA[i] += G[i] * c;
  };
  return out;
}

Value Tape::add_row_broadcast(Value a, Value bias) {
  expect_same_tape(a);
  expect_same_tape(bias);
  const Tensor& A = value_of(a);
  const Tensor& B = value_of(bias);
  check(A.ndim() == 2 && B.ndim() == 1 && B.numel() == A.cols(),
        "add_row_broadcast: bias length must equal cols");
  Tensor y(A.shape());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) y.at(i, j) = A.at(i, j) + B[j];
  bool ng = node(a).needs_grad || node(bias).needs_grad;
  Value out = push(std::move(y), ng);
  if (!grad_enabled_ || !ng) return out;
  std::size_t ai = a.id(), bi = bias.id(), oi = out.id();
  nodes_[oi].back = [this, ai, bi, oi]() {
    const Tensor& G = nodes_[oi].grad;
    if (nodes_[ai].needs_grad) {
      Tensor& dA = nodes_[ai].grad;
      for (std::size_t i = 0; i < G.numel(); ++i) dA[i] += G[i];
    }
    if (nodes_[bi].needs_grad) {
      Tensor& dB = nodes_[bi].grad;
      for (std::size_t i = 0; i < G.rows(); ++i)
        for (std::size_t j = 0; j < G.cols(); ++j) dB[j] += G.at(i, j);
    }
  };
  return out;
}

Value Tape::add_constant(Value a, Tensor c) {
  expect_same_tape(a);
  const Tensor& A = value_of(a);
  check(A.same_shape(c), "add_constant: shape mismatch");
  Tensor y(A.shape());
  for (std::size_t i = 0; i < A.numel(); ++i) y[i] = A[i] + c[i];
  Value out = push(std::move(y), node(a).needs_grad);
  if (!grad_enabled_ || !node(a).needs_grad) return out;
  std::size_t ai = a.id(), oi = out.id();
  nodes_[oi].back = [this, ai, oi]() {
    const Tensor& G = nodes_[oi].grad;
    Tensor& dA = nodes_[ai].grad;
    for (std::size_t i = 0; i < G.numel(); ++i) dA[i] += G[i];
  };
  return out;
}

Value Tape::relu(Value a) { return leaky_relu(a, 0.0); }

Value Tape::leaky_relu(Value a, double slope) {
  expect_same_tape(a);
  const Tensor& A = value_of(a);
  Tensor y(A.shape());
  for (std::size_t i = 0; i < A.numel(); ++i) y[i] = A[i] > 0.0 ? A[i] : slope * A[i];
  Value out = push(std::move(y), node(a).needs_grad);
  if (!grad_enabled_ || !node(a).needs_grad) return out;
  std::size_t ai = a.id(), oi = out.id();
  nodes_[oi].back = [this, ai, oi, slope]() {
    const Tensor& A = nodes_[ai].value;
    const Tensor& G = nodes_[oi].grad;
    Tensor& dA = nodes_[ai].grad;
    for (std::size_t i = 0; i < G.numel(); ++i) dA[i] += A[i] > 0.0 ? G[i] : slope * G[i];
  };
  return out;
}

Value Tape::softmax_rows(Value a) {
  expect_same_tape(a);
  const Tensor& A = value_of(a);
  check(A.ndim() == 2, "softmax_rows: rank 2 required");
  Tensor y = tram::softmax(A, 1);
  Value out = push(std::move(y), node(a).needs_grad);
  if (!grad_enabled_ || !node(a).needs_grad) return out;
  std::size_t ai = a.id(), oi = out.id();
  nodes_[oi].back = [this, ai, oi]() {
    const Tensor& Y = nodes_[oi].value;
    const Tensor& G = nodes_[oi].grad;
    Tensor& dA = nodes_[ai].grad;
    for (std::size_t i = 0; i < Y.rows(); ++i) {
      auto y = Y.row(i);
      auto g = G.row(i);
      double inner = 0.0;
      for (std::size_t j = 0; j < y.size(); ++j) inner += g[j] * y[j];
      auto d = dA.row(i);
      for (std::size_t j = 0; j < y.size(); ++j) d[j] += y[j] * (g[j] - inner);
    }
  };
  return out;
}

Value Tape::layer_norm_rows(Value a, Value gain, Value bias, double eps) {
  expect_same_tape(a);
  expect_same_tape(gain);
  expect_same_tape(bias);
  const Tensor& A = value_of(a);
  Tensor y = tram::layer_norm(A, value_of(gain), value_of(bias), eps);
  bool ng = node(a).needs_grad || node(gain).needs_grad || node(bias).needs_grad;
  Value out = push(std::move(y), ng);
  if (!grad_enabled_ || !ng) return out;
  std::size_t ai = a.id(), gi = gain.id(), bi = bias.id(), oi = out.id();
  nodes_[oi].back = [this, ai, gi, bi, oi, eps]() {
    const Tensor& A = nodes_[ai].value;
    const Tensor& gainv = nodes_[gi].value;
    const Tensor& G = nodes_[oi].grad;
    const bool vec = A.ndim() == 1;
    const std::size_t n = vec ? A.numel() : A.cols();
    const std::size_t rows = vec ? 1 : A.rows();
    std::vector<double> xhat(n), dxhat(n);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* in = A.data().data() + r * n;
      const double* g = G.data().data() + r * n;
      double mean = 0.0;
      for (std::size_t j = 0; j < n; ++j) mean += in[j];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t j = 0; j < n; ++j) var += (in[j] - mean) * (in[j] - mean);
      var /= static_cast<double>(n);
      double denom = std::sqrt(var + eps);
      for (std::size_t j = 0; j < n; ++j)
        xhat[j] = denom == 0.0 ? 0.0 : (in[j] - mean) / denom;
      if (nodes_[bi].needs_grad) {
        Tensor& dB = nodes_[bi].grad;
        for (std::size_t j = 0; j < n; ++j) dB[j] += g[j];
      }
      if (nodes_[gi].needs_grad) {
        Tensor& dG = nodes_[gi].grad;
        for (std::size_t j = 0; j < n; ++j) dG[j] += g[j] * xhat[j];
      }
      if (nodes_[ai].needs_grad && denom != 0.0) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          dxhat[j] = g[j] * gainv[j];
          m1 += dxhat[j];
          m2 += dxhat[j] * xhat[j];
        }
        m1 /= static_cast<double>(n);
        m2 /= static_cast<double>(n);
        double* dA = nodes_[ai].grad.data().data() + r * n;
        for (std::size_t j = 0; j < n; ++j)
          dA[j] += (dxhat[j] - m1 - xhat[j] * m2) / denom;
      }
    }
  };
  return out;
}

Value Tape::slice_cols(Value a, std::size_t start, std::size_t width) {
  expect_same_tape(a);
  const Tensor& A = value_of(a);
  check(A.ndim() == 2 && start + width <= A.cols(), "slice_cols: out of range");
  Tensor y({A.rows(), width});
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < width; ++j) y.at(i, j) = A.at(i, start + j);
  Value out = push(std::move(y), node(a).needs_grad);
  if (!grad_enabled_ || !node(a).needs_grad) return out;
  std::size_t ai = a.id(), oi = out.id();
  nodes_[oi].back = [this, ai, oi, start]() {
    const Tensor& G = nodes_[oi].grad;
    Tensor& dA = nodes_[ai].grad;
    for (std::size_t i = 0; i < G.rows(); ++i)
      for (std::size_t j = 0; j < G.cols(); ++j) dA.at(i, start + j) += G.at(i, j);
  };
  return out;
}

Value Tape::concat_cols(const std::vector<Value>& parts) {
  check(!parts.empty(), "concat_cols: no parts");
  std::size_t rows = value_of(parts[0]).rows();
  std::size_t total = 0;
  bool ng = false;
  for (Value p : parts) {
    expect_same_tape(p);
    check(value_of(p).rows() == rows, "concat_cols: row mismatch");
    total += value_of(p).cols();
    ng = ng || node(p).needs_grad;
  }
  Tensor y({rows, total});
  std::size_t off = 0;
  for (Value p : parts) {
    const Tensor& P = value_of(p);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < P.cols(); ++j) y.at(i, off + j) = P.at(i, j);
    off += P.cols();
  }
  Value out = push(std::move(y), ng);
  if (!grad_enabled_ || !ng) return out;
  std::vector<std::size_t> ids;
  for (Value p : parts) ids.push_back(p.id());
  std::size_t oi = out.id();
  nodes_[oi].back = [this, ids, oi]() {
    const Tensor& G = nodes_[oi].grad;
    std::size_t off = 0;
    for (std::size_t pi : ids) {
      const std::size_t w = nodes_[pi].value.cols();
      if (nodes_[pi].needs_grad) {
        Tensor& dP = nodes_[pi].grad;
        for (std::size_t i = 0; i < G.rows(); ++i)
          for (std::size_t j = 0; j < w; ++j) dP.at(i, j) += G.at(i, off + j);
      }
      off += w;
    }
  };
  return out;
}

Value Tape::slice_rows(Value a, std::size_t start, std::size_t height) {
  expect_same_tape(a);
  const Tensor& A = value_of(a);
  check(A.ndim() == 2 && start + height <= A.rows(), "slice_rows: out of range");
  Tensor y({height, A.cols()});
  for (std::size_t i = 0; i < height; ++i) {
    auto src = A.row(start + i);
    std::copy(src.begin(), src.end(), y.row(i).begin());
  }
  Value out = push(std::move(y), node(a).needs_grad);
  if (!grad_enabled_ || !node(a).needs_grad) return out;
  std::size_t ai = a.id(), oi = out.id();
  nodes_[oi].back = [this, ai, oi, start]() {
    const Tensor& G = nodes_[oi].grad;
    Tensor& dA = nodes_[ai].grad;
    for (std::size_t i = 0; i < G.rows(); ++i)
      for (std::size_t j = 0; j < G.cols(); ++j) dA.at(start + i, j) += G.at(i, j);
  };
  return out;
}

Value Tape::mean_rows(Value a) {
  expect_same_tape(a);
  const Tensor& A = value_of(a);
  check(A.ndim() == 2, "mean_rows: rank 2 required");
  const std::size_t m = A.rows(), n = A.cols();
  Tensor y({n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j] += A.at(i, j);
  for (std::size_t j = 0; j < n; ++j) y[j] /= static_cast<double>(m);
  Value out = push(std::move(y), node(a).needs_grad);
  if (!grad_enabled_ || !node(a).needs_grad) return out;
  std::size_t ai = a.id(), oi = out.id();
  nodes_[oi].back = [this, ai, oi, m]() {
    const Tensor& G = nodes_[oi].grad;
    Tensor& dA = nodes_[ai].grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < G.numel(); ++j)
        dA.at(i, j) += G[j] / static_cast<double>(m);
  };
  return out;
}

Value Tape::sum(Value a) {
  expect_same_tape(a);
  const Tensor& A = value_of(a);
  double s = 0.0;
  for (std::size_t i = 0; i < A.numel(); ++i) s += A[i];
  Value out = push(Tensor({1}, {s}), node(a).needs_grad);
  if (!grad_enabled_ || !node(a).needs_grad) return out;
  std::size_t ai = a.id(), oi = out.id();
  nodes_[oi].back = [this, ai, oi]() {
    double g = nodes_[oi].grad[0];
    Tensor& dA = nodes_[ai].grad;
    for (std::size_t i = 0; i < dA.numel(); ++i) dA[i] += g;
  };
  return out;
}

Value Tape::dropout(Value a, double rate, Rng& rng) {
  expect_same_tape(a);
  if (rate <= 0.0) return a;
  check(rate < 1.0, "dropout: rate must be < 1");
  const Tensor& A = value_of(a);
  Tensor mask(A.shape());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.numel(); ++i)
    mask[i] = rng.uniform() >= rate ? keep_scale : 0.0;
  Tensor y(A.shape());
  for (std::size_t i = 0; i < A.numel(); ++i) y[i] = A[i] * mask[i];
  Value out = push(std::move(y), node(a).needs_grad);
  if (!grad_enabled_ || !node(a).needs_grad) return out;
  std::size_t ai = a.id(), oi = out.id();
  nodes_[oi].back = [this, ai, oi, mask = std::move(mask)]() {
    const Tensor& G = nodes_[oi].grad;
    Tensor& dA = nodes_[ai].grad;
    for (std::size_t i = 0; i < G.numel(); ++i) dA[i] += G[i] * mask[i];
  };
  return out;
}

Value Tape::relative_attention_scores(Value q, Value k, Value rel, int clip, double scale) {
  expect_same_tape(q);
  expect_same_tape(k);
  expect_same_tape(rel);
  const Tensor& Q = value_of(q);
  const Tensor& K = value_of(k);
  const Tensor& R = value_of(rel);
  check(Q.ndim() == 2 && K.ndim() == 2 && R.ndim() == 2, "rel scores: rank 2 required");
  check(Q.cols() == K.cols() && Q.cols() == R.cols(), "rel scores: head dim mismatch");
  check(R.rows() == static_cast<std::size_t>(2 * clip + 1), "rel scores: table must have 2*clip+1 rows");
  const std::size_t tq = Q.rows(), tk = K.rows(), d = Q.cols();
  Tensor s({tq, tk});
  for (std::size_t i = 0; i < tq; ++i) {
    auto qi = Q.row(i);
    for (std::size_t j = 0; j < tk; ++j) {
      auto kj = K.row(j);
      auto rb = R.row(static_cast<std::size_t>(
          relative_bucket(static_cast<int>(j) - static_cast<int>(i), clip)));
      double acc = 0.0;
      for (std::size_t x = 0; x < d; ++x) acc += qi[x] * (kj[x] + rb[x]);
      s.at(i, j) = acc * scale;
    }
  }
  bool ng = node(q).needs_grad || node(k).needs_grad || node(rel).needs_grad;
  Value out = push(std::move(s), ng);
  if (!grad_enabled_ || !ng) return out;
  std::size_t qi_ = q.id(), ki_ = k.id(), ri_ = rel.id(), oi = out.id();
  nodes_[oi].back = [this, qi_, ki_, ri_, oi, clip, scale]() {
    const Tensor& Q = nodes_[qi_].value;
    const Tensor& K = nodes_[ki_].value;
    const Tensor& R = nodes_[ri_].value;
    const Tensor& G = nodes_[oi].grad;
    const std::size_t tq = Q.rows(), tk = K.rows(), d = Q.cols();
    for (std::size_t i = 0; i < tq; ++i) {
      auto qrow = Q.row(i);
      for (std::size_t j = 0; j < tk; ++j) {
        double g = G.at(i, j) * scale;
        if (g == 0.0) continue;
        std::size_t b = static_cast<std::size_t>(
            relative_bucket(static_cast<int>(j) - static_cast<int>(i), clip));
        auto krow = K.row(j);
        auto rrow = R.row(b);
        if (nodes_[qi_].needs_grad) {
          auto dq = nodes_[qi_].grad.row(i);
          for (std::size_t x = 0; x < d; ++x) dq[x] += g * (krow[x] + rrow[x]);
        }
        if (nodes_[ki_].needs_grad) {
          auto dk = nodes_[ki_].grad.row(j);
          for (std::size_t x = 0; x < d; ++x) dk[x] += g * qrow[x];
        }
        if (nodes_[ri_].needs_grad) {
          auto dr = nodes_[ri_].grad.row(b);
          for (std::size_t x = 0; x < d; ++x) dr[x] += g * qrow[x];
        }
      }
    }
  };
  return out;
}

Value Tape::cross_entropy_sum(Value logits, std::vector<int> targets, int pad_id,
                              std::size_t* count) {
  expect_same_tape(logits);
  const Tensor& L = value_of(logits);
  check(L.ndim() == 2, "cross_entropy_sum: logits must be rank 2");
  check(L.rows() == targets.size(), "cross_entropy_sum: target count mismatch");
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] == pad_id) continue;
    check(targets[t] >= 0 && static_cast<std::size_t>(targets[t]) < L.cols(),
          "cross_entropy_sum: target id out of range");
    auto row = L.row(t);
    double mx = row[0];
    for (double x : row) mx = std::max(mx, x);
    double sum = 0.0;
    for (double x : row) sum += std::exp(x - mx);
    total += std::log(sum) + mx - row[static_cast<std::size_t>(targets[t])];
    ++n;
  }
  check(n > 0, "cross_entropy_sum: all-pad target sequence");
  if (count) *count = n;
  Value out = push(Tensor({1}, {total}), node(logits).needs_grad);
  if (!grad_enabled_ || !node(logits).needs_grad) return out;
  std::size_t li = logits.id(), oi = out.id();
  nodes_[oi].back = [this, li, oi, pad_id, targets = std::move(targets)]() {
    const Tensor& L = nodes_[li].value;
    double g = nodes_[oi].grad[0];
    Tensor& dL = nodes_[li].grad;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (targets[t] == pad_id) continue;
      auto row = L.row(t);
      double mx = row[0];
      for (double x : row) mx = std::max(mx, x);
      double sum = 0.0;
      for (double x : row) sum += std::exp(x - mx);
      auto d = dL.row(t);
      for (std::size_t j = 0; j < row.size(); ++j) {
        double p = std::exp(row[j] - mx) / sum;
        d[j] += g * (p - (static_cast<std::size_t>(targets[t]) == j ? 1.0 : 0.0));
      }
    }
  };
  return out;
}

void Tape::backward(Value root) {
  expect_same_tape(root);
  check(grad_enabled_, "backward: tape was recorded with gradients disabled");
  check(value_of(root).numel() == 1, "backward: root must be scalar");
  check(!backward_done_, "backward: already run on this tape");
  backward_done_ = true;
  if (!nodes_[root.id()].needs_grad) return;
  nodes_[root.id()].grad[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back();
  }
}

}  // namespace tram
