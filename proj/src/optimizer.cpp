#include "tram/optimizer.hpp"

#include <cmath>

#include "tram/common.hpp"

namespace tram {

void Adam::step(ParameterSet& params) {
  if (slots_.empty()) {
    slots_.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      slots_.push_back({Tensor::zeros(params.at(i).value.shape()),
                        Tensor::zeros(params.at(i).value.shape())});
  }
  check(slots_.size() == params.size(), "adam: parameter count changed");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params.at(i);
    check(p.grad.same_shape(p.value), "adam: gradient shape mismatch for " + p.name);
    Slot& s = slots_[i];
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      double g = p.grad[j];
      s.m[j] = cfg_.beta1 * s.m[j] + (1.0 - cfg_.beta1) * g;
      s.v[j] = cfg_.beta2 * s.v[j] + (1.0 - cfg_.beta2) * g * g;
      double mhat = s.m[j] / bc1;
      double vhat = s.v[j] / bc2;
      p.value[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace tram
