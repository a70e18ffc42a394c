#pragma once

#include <optional>
#include <string>

#include "prednext/snn.hpp"

namespace prednext {

enum class SslMethod { simclr, moco, byol, simsiam, barlowtwins };

SslMethod ssl_method_from_string(const std::string& s);
std::string ssl_method_to_string(SslMethod m);

struct SslConfig {
  SslMethod method = SslMethod::simsiam;
  int proj_hidden = 0;  // 0 -> proj_out
  int proj_out = 0;     // 0 -> per-method default
  int pred_hidden = 512;
  float tau = 0.5f;
  float momentum_ema = 0.99f;
  int queue_size = 4096;
  float lambda_bt = 5e-3f;

  int resolved_proj_out() const;
  int resolved_proj_hidden() const;
  bool uses_predictor() const {
    return method == SslMethod::simsiam || method == SslMethod::byol;
  }
  bool uses_momentum() const {
    return method == SslMethod::moco || method == SslMethod::byol;
  }
  bool uses_queue() const { return method == SslMethod::moco; }
};

// FIFO ring buffer of L2-normalized negatives for MoCo.
class NegativeQueue {
 public:
  NegativeQueue(int capacity, int dim);
  // Rows are L2-normalized before insertion; oldest entries evicted.
  void push(const Tensor& batch);
  // Snapshot [size, dim] in FIFO order, constant (no grad).
  Tensor snapshot() const;
  int size() const { return size_; }
  int capacity() const { return capacity_; }
  int dim() const { return dim_; }

 private:
  int capacity_, dim_, size_ = 0, cursor_ = 0;
  std::vector<float> data_;
};

// InfoNCE. With `negatives` (MoCo mode): positives z_j row-wise, negatives
// shared, one direction. Without: NT-Xent over the 2B in-batch views.
Tensor info_nce_loss(const Tensor& z_i, const Tensor& z_j,
                     const std::optional<Tensor>& negatives, float tau);

// mean(1 - cos(p, stopgrad(z_target))), epsilon-stabilized norms.
Tensor cosine_pred_loss(const Tensor& p, const Tensor& z_target);

Tensor barlow_twins_loss(const Tensor& z_i, const Tensor& z_j, float lambda_bt);

// theta_target <- m*theta_target + (1-m)*theta_online, values and buffers.
void momentum_update(ParamRegistry& target, const ParamRegistry& online,
                     float m_ema);

// The online model of one SSL method: shared spiking encoder plus heads.
struct SslModel {
  SslModel(ParamRegistry& reg, const EncoderConfig& ecfg, const LIFConfig& lif,
           const SslConfig& scfg);

  SpikingEncoder encoder;
  MlpHead projection;
  std::optional<MlpHead> predictor;
  SslConfig cfg;

  // Projects every timestep, then aggregates (project-then-average).
  TemporalFeatureSequence project(const TemporalFeatureSequence& feats, bool train);
};

struct SslForwardOut {
  Tensor loss;
  TemporalFeatureSequence feats_i, feats_j;  // online encoder features
  TemporalFeatureSequence proj_i, proj_j;   // online per-timestep projections
  Tensor moco_keys;  // normalized keys to enqueue (moco only)
};

// Full per-batch objective for the configured method. `target` is the
// momentum model (moco/byol); `frames_*` are needed to run the target branch.
SslForwardOut ssl_forward(SslModel& model, SslModel* target, NegativeQueue* queue,
                          const std::vector<Tensor>& frames_i,
                          const std::vector<Tensor>& frames_j, bool train);

}  // namespace prednext
