#pragma once

#include "prednext/nn.hpp"

namespace prednext {

struct OptimConfig {
  float lr = 2e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 1e-6f;
  int epochs = 30;
  int warmup_epochs = 3;
  int batch_size = 64;
};

// AdamW with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, const OptimConfig& cfg);
  void step(float lr);
  void zero_grad();
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_, v_;
  OptimConfig cfg_;
  int64_t t_ = 0;
};

// Cosine annealing with linear warmup; step counts are global across epochs.
float cosine_warmup_lr(float base_lr, int64_t step, int64_t total_steps,
                       int64_t warmup_steps);

}  // namespace prednext
