#pragma once

#include <cstdint>
#include <vector>

#include "tram/autodiff.hpp"
#include "tram/tensor.hpp"

namespace tram {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. Moment slots are keyed by position in
// the ParameterSet, which is stable for a model's lifetime.
class Adam {
 public:
  explicit Adam(const AdamConfig& cfg) : cfg_(cfg) {}

  void step(ParameterSet& params);

  std::uint64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const Tensor& first_moment(std::size_t i) const { return slots_[i].m; }
  const Tensor& second_moment(std::size_t i) const { return slots_[i].v; }

 private:
  struct Slot {
    Tensor m;
    Tensor v;
  };

  AdamConfig cfg_;
  std::vector<Slot> slots_;
  std::uint64_t step_ = 0;
};

}  // namespace tram
