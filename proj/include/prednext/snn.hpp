#pragma once

#include <optional>
#include <utility>

#include "prednext/nn.hpp"

namespace prednext {

enum class ResetMode { hard_to_zero, soft_subtract };
enum class SurrogateKind { atan, sigmoid, triangular };

struct LIFConfig {
  float threshold = 1.f;
  float decay_tau = 2.f;
  ResetMode reset_mode = ResetMode::hard_to_zero;
  SurrogateKind surrogate = SurrogateKind::atan;
  float surrogate_width = 2.f;
  // Test hook: replaces the hard spike with the smooth primitive whose
  // derivative is the surrogate, making the whole network differentiable.
  bool smooth_spike = false;

  void validate() const;
};

// Pseudo-derivative of the spike nonlinearity at membrane-minus-threshold x.
float surrogate_grad_value(float x, const LIFConfig& cfg);
// Smooth primitive s(x) with s'(x) == surrogate_grad_value(x).
float smooth_spike_value(float x, const LIFConfig& cfg);

// Elementwise pseudo-derivative over a tensor (no autograd; plain values).
Tensor surrogate_grad(const Tensor& membrane_minus_threshold,
                      const LIFConfig& cfg);

// Spike nonlinearity applied to (v - threshold): forward is the Heaviside
// step (or the smooth primitive in smooth mode), backward the surrogate.
Tensor spike_threshold(const Tensor& v_minus_threshold, const LIFConfig& cfg);

// One LIF update: v' = v + (x - v)/tau, spike where v' >= threshold, reset
// per reset_mode. Returns (new membrane state, spikes).
std::pair<Tensor, Tensor> lif_step(const Tensor& state, const Tensor& input_current,
                                   const LIFConfig& cfg);

enum class SewConnect { add, and_, iand };

struct EncoderConfig {
  std::vector<int> block_widths = {16, 32, 64, 128};
  std::vector<int> blocks_per_stage = {1, 1, 1, 1};
  int input_channels = 3;
  SewConnect sew_connect = SewConnect::add;

  int feature_dim() const { return block_widths.back(); }
  void validate() const;
};

// Membrane potentials (and last spikes) of every LIF site, in site order.
// Reset between clips; not shareable across concurrent callers.
struct EncoderState {
  std::vector<Tensor> potentials;
  std::vector<Tensor> spikes;
  void reset() {
    potentials.clear();
    spikes.clear();
  }
};

// Per-timestep projected or encoder features plus their time average.
struct TemporalFeatureSequence {
  std::vector<Tensor> per_step;  // T tensors of [B, D]
  Tensor aggregate;              // [B, D]
};

TemporalFeatureSequence make_feature_sequence(std::vector<Tensor> per_step);

struct SewBlock {
  SewBlock() = default;
  SewBlock(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch,
           int stride);
  // Consumes 2 (plain) or 3 (downsample) LIF sites from `state`, appending
  // fresh sites when the state is empty (start of a clip).
  Tensor forward(const Tensor& x_spikes, EncoderState& state, size_t& site,
                 const EncoderConfig& ecfg, const LIFConfig& lif, bool train);

  Conv2d conv1, conv2, down_conv;
  BatchNorm bn1, bn2, down_bn;
  bool has_down = false;
};

class SpikingEncoder {
 public:
  SpikingEncoder(ParamRegistry& reg, const std::string& name,
                 const EncoderConfig& cfg, const LIFConfig& lif);

  // frames: T tensors of [B, C, H, W]; state reset internally per clip.
  TemporalFeatureSequence encode_clip(const std::vector<Tensor>& frames,
                                      bool train);
  // clip: flat [B, T, C, H, W].
  TemporalFeatureSequence encode_clip(const Tensor& clip, bool train);

  // Runs all timesteps of one clip while exposing the final state (for the
  // state-contract tests).
  TemporalFeatureSequence encode_clip_with_state(const std::vector<Tensor>& frames,
                                                 bool train, EncoderState* out_state);

  const EncoderConfig& config() const { return cfg_; }
  const LIFConfig& lif_config() const { return lif_; }
  LIFConfig& lif_config() { return lif_; }

 private:
  Tensor forward_step(const Tensor& frame, EncoderState& state, bool train);

  EncoderConfig cfg_;
  LIFConfig lif_;
  Conv2d stem_;
  BatchNorm stem_bn_;
  std::vector<SewBlock> blocks_;
};

Tensor sew_connect_spikes(const Tensor& branch, const Tensor& shortcut,
                          SewConnect mode);

}  // namespace prednext
