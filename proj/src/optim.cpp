#include "prednext/optim.hpp"

#include <cmath>

namespace prednext {

AdamW::AdamW(std::vector<Tensor> params, const OptimConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back((size_t)p.numel(), 0.f);
    v_.emplace_back((size_t)p.numel(), 0.f);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void AdamW::step(float lr) {
  ++t_;
  const float b1 = cfg_.beta1, b2 = cfg_.beta2;
  const float bc1 = 1.f - std::pow(b1, (float)t_);
  const float bc2 = 1.f - std::pow(b2, (float)t_);
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    const auto& g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    float* w = p.data();
    for (int64_t k = 0; k < p.numel(); ++k) {
      m[k] = b1 * m[k] + (1.f - b1) * g[k];
      v[k] = b2 * v[k] + (1.f - b2) * g[k] * g[k];
      float mhat = m[k] / bc1;
      float vhat = v[k] / bc2;
      w[k] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[k]);
    }
  }
}

float cosine_warmup_lr(float base_lr, int64_t step, int64_t total_steps,
                       int64_t warmup_steps) {
  if (warmup_steps > 0 && step < warmup_steps)
    return base_lr * (float)(step + 1) / (float)warmup_steps;
  if (total_steps <= warmup_steps) return base_lr;
  double progress =
      (double)(step - warmup_steps) / (double)(total_steps - warmup_steps);
  progress = std::min(1.0, std::max(0.0, progress));
  return base_lr * 0.5f * (1.f + (float)std::cos(M_PI * progress));
}

}  // namespace prednext
