#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ntk/tagger.hpp"
#include "ntk/tensor.hpp"

namespace ntk {

// Cosine annealing with warm restarts, lr_min = 0. Cycle i spans
// t0_epochs * t_mult^i epochs; within a cycle at elapsed fraction u,
// lr = lr_max * (1 + cos(pi * u)) / 2. step_epoch is fractional.
double lr_schedule(double step_epoch, const TaggerConfig& cfg);

// Decoupled-weight-decay Adam over a fixed parameter list. Tensors named
// *.b are biases and are excluded from decay.
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, Tensor*>> params, double weight_decay);

  // Applies one update. grads aligns with the parameter list; throws
  // StateError on shape mismatch or non-finite gradients.
  void step(const std::vector<const Tensor*>& grads, double lr);

  int64_t steps_done() const { return t_; }

 private:
  std::vector<std::pair<std::string, Tensor*>> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  double weight_decay_;
  int64_t t_ = 0;
};

}  // namespace ntk
