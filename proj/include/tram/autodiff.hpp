#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tram/rng.hpp"
#include "tram/tensor.hpp"

namespace tram {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}

  void zero_grad() { grad.fill(0.0); }
};

// Owns parameters in creation order; order is the serialization contract.
class ParameterSet {
 public:
  Parameter& create(std::string name, Tensor init);
  Parameter* find(const std::string& name);
  std::size_t size() const { return items_.size(); }
  Parameter& at(std::size_t i) { return *items_[i]; }
  const Parameter& at(std::size_t i) const { return *items_[i]; }
  void zero_grad_all();
  std::size_t total_elements() const;

 private:
  std::vector<std::unique_ptr<Parameter>> items_;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; dies with its tape.
class Value {
 public:
  Value() = default;
  const Tensor& tensor() const;
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Value(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. One tape per forward pass; ops append nodes and record
// closures that scatter the node gradient back onto input nodes or straight
// into Parameter::grad. backward() walks the node list in reverse, which is
// a topological order by construction.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t node_count() const { return nodes_.size(); }

  Value constant(Tensor v);
  Value leaf(Parameter& p);
  Value gather_rows(Parameter& table, std::vector<int> ids);

  Value matmul(Value a, Value b);
  Value transpose(Value a);
  Value add(Value a, Value b);
  Value mul(Value a, Value b);
  Value mul_scalar(Value a, double c);
  Value add_row_broadcast(Value a, Value bias);  // bias rank 1, length = cols(a)
  Value add_constant(Value a, Tensor c);
  Value relu(Value a);
  Value leaky_relu(Value a, double slope);
  Value softmax_rows(Value a);
  Value layer_norm_rows(Value a, Value gain, Value bias, double eps);
  Value slice_cols(Value a, std::size_t start, std::size_t width);
  Value concat_cols(const std::vector<Value>& parts);
  Value slice_rows(Value a, std::size_t start, std::size_t height);
  Value mean_rows(Value a);
  Value sum(Value a);
  Value dropout(Value a, double rate, Rng& rng);

  // scores[i][j] = scale * (q_i . k_j + q_i . rel[clip(j - i, +-clip) + clip])
  Value relative_attention_scores(Value q, Value k, Value rel, int clip, double scale);

  // Sum of per-position NLL over non-pad targets; *count reports positions.
  Value cross_entropy_sum(Value logits, std::vector<int> targets, int pad_id,
                          std::size_t* count = nullptr);

  const Tensor& value_of(Value v) const;
  const Tensor& grad_of(Value v) const;

  // Seeds d(root)=1 and accumulates gradients for every recorded node and
  // every touched Parameter. root must be scalar.
  void backward(Value root);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void()> back;
    bool needs_grad = false;
  };

  Value push(Tensor value, bool needs_grad);
  Node& node(Value v);
  void expect_same_tape(Value v) const;

  std::vector<Node> nodes_;
  bool grad_enabled_;
  bool backward_done_ = false;
};

// clip(delta, +-clip) + clip, the row index into a relative-position table.
int relative_bucket(int delta, int clip);

}  // namespace tram
