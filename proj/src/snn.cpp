#include "prednext/snn.hpp"

#include <cmath>

namespace prednext {

void LIFConfig::validate() const {
  if (!(threshold > 0.f)) throw std::invalid_argument("LIFConfig: threshold must be > 0");
  if (!(decay_tau > 1.f)) throw std::invalid_argument("LIFConfig: decay_tau must be > 1");
  if (!(surrogate_width > 0.f))
    throw std::invalid_argument("LIFConfig: surrogate_width must be > 0");
}

void EncoderConfig::validate() const {
  if (block_widths.empty() || block_widths.size() != blocks_per_stage.size())
    throw std::invalid_argument("EncoderConfig: stage lists empty or mismatched");
  for (int w : block_widths)
    if (w <= 0) throw std::invalid_argument("EncoderConfig: width must be > 0");
  for (int b : blocks_per_stage)
    if (b <= 0) throw std::invalid_argument("EncoderConfig: blocks must be > 0");
  if (input_channels <= 0)
    throw std::invalid_argument("EncoderConfig: input_channels must be > 0");
}

float surrogate_grad_value(float x, const LIFConfig& cfg) {
  const float a = cfg.surrogate_width;
  switch (cfg.surrogate) {
    case SurrogateKind::atan: {
      float u = (float)M_PI * a * x / 2.f;
      return (a / 2.f) / (1.f + u * u);
    }
    case SurrogateKind::sigmoid: {
      float s = 1.f / (1.f + std::exp(-a * x));
      return a * s * (1.f - s);
    }
    case SurrogateKind::triangular: {
      float t = a - std::fabs(x);
      return t > 0.f ? t / (a * a) : 0.f;
    }
  }
  return 0.f;
}

float smooth_spike_value(float x, const LIFConfig& cfg) {
  const float a = cfg.surrogate_width;
  switch (cfg.surrogate) {
    case SurrogateKind::atan:
      return std::atan((float)M_PI * a * x / 2.f) / (float)M_PI + 0.5f;
    case SurrogateKind::sigmoid:
      return 1.f / (1.f + std::exp(-a * x));
    case SurrogateKind::triangular: {
      if (x <= -a) return 0.f;
      if (x >= a) return 1.f;
      if (x < 0.f) {
        float u = x + a;
        return u * u / (2.f * a * a);
      }
      float u = a - x;
      return 1.f - u * u / (2.f * a * a);
    }
  }
  return 0.f;
}

Tensor surrogate_grad(const Tensor& x, const LIFConfig& cfg) {
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i)
    out.data()[i] = surrogate_grad_value(x.data()[i], cfg);
  return out;
}

Tensor spike_threshold(const Tensor& x, const LIFConfig& cfg) {
  auto xn = x.node();
  LIFConfig c = cfg;
  Tensor out = make_op_node(x.shape(), {x}, [xn, c](TensorNode& o) {
    xn->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i)
      xn->grad[i] += o.grad[i] * surrogate_grad_value(xn->value[i], c);
  });
  if (cfg.smooth_spike) {
    for (int64_t i = 0; i < x.numel(); ++i)
      out.data()[i] = smooth_spike_value(x.data()[i], cfg);
  } else {
    for (int64_t i = 0; i < x.numel(); ++i)
      out.data()[i] = x.data()[i] >= 0.f ? 1.f : 0.f;
  }
  return out;
}

std::pair<Tensor, Tensor> lif_step(const Tensor& state, const Tensor& input_current,
                                   const LIFConfig& cfg) {
  if (!same_shape(state.shape(), input_current.shape()))
    throw std::invalid_argument("lif_step: state/input shape mismatch " +
                                shape_str(state.shape()) + " vs " +
                                shape_str(input_current.shape()));
  const float inv_tau = 1.f / cfg.decay_tau;
  Tensor v_pre = add_scaled(state, input_current, 1.f - inv_tau, inv_tau);
  Tensor spikes = spike_threshold(add_scalar(v_pre, -cfg.threshold), cfg);
  Tensor v_next;
  if (cfg.reset_mode == ResetMode::hard_to_zero) {
    Tensor keep = add_scalar(scale(spikes, -1.f), 1.f);  // 1 - s
    v_next = mul(v_pre, keep);
  } else {
    v_next = add_scaled(v_pre, spikes, 1.f, -cfg.threshold);
  }
  return {v_next, spikes};
}

TemporalFeatureSequence make_feature_sequence(std::vector<Tensor> per_step) {
  if (per_step.empty())
    throw std::invalid_argument("TemporalFeatureSequence: T must be >= 1");
  TemporalFeatureSequence seq;
  seq.aggregate = mean_tensors(per_step);
  seq.per_step = std::move(per_step);
  return seq;
}

Tensor sew_connect_spikes(const Tensor& branch, const Tensor& shortcut,
                          SewConnect mode) {
  if (!same_shape(branch.shape(), shortcut.shape()))
    throw std::invalid_argument("sew_connect: branch/shortcut channel mismatch " +
                                shape_str(branch.shape()) + " vs " +
                                shape_str(shortcut.shape()));
  switch (mode) {
    case SewConnect::add:
      return add(branch, shortcut);
    case SewConnect::and_:
      return mul(branch, shortcut);
    case SewConnect::iand:
      // (NOT branch) AND shortcut
      return sub(shortcut, mul(branch, shortcut));
  }
  throw std::invalid_argument("sew_connect: unknown mode");
}

namespace {

Tensor lif_site(const Tensor& current, EncoderState& state, size_t& site,
                const LIFConfig& lif) {
  if (site == state.potentials.size()) {
    state.potentials.emplace_back(current.shape());
    state.spikes.emplace_back();
  }
  auto [v_next, spikes] = lif_step(state.potentials[site], current, lif);
  state.potentials[site] = v_next;
  state.spikes[site] = spikes;
  ++site;
  return spikes;
}

}  // namespace

SewBlock::SewBlock(ParamRegistry& reg, const std::string& name, int in_ch,
                   int out_ch, int stride) {
  conv1 = Conv2d(reg, name + ".conv1", in_ch, out_ch, 3, stride, 1);
  bn1 = BatchNorm(reg, name + ".bn1", out_ch);
  conv2 = Conv2d(reg, name + ".conv2", out_ch, out_ch, 3, 1, 1);
  bn2 = BatchNorm(reg, name + ".bn2", out_ch);
  has_down = (stride != 1 || in_ch != out_ch);
  if (has_down) {
    down_conv = Conv2d(reg, name + ".down.conv", in_ch, out_ch, 1, stride, 0);
    down_bn = BatchNorm(reg, name + ".down.bn", out_ch);
  }
}

Tensor SewBlock::forward(const Tensor& x_spikes, EncoderState& state,
                         size_t& site, const EncoderConfig& ecfg,
                         const LIFConfig& lif, bool train) {
  Tensor s1 = lif_site(bn1.forward(conv1.forward(x_spikes), train), state, site, lif);
  Tensor s2 = lif_site(bn2.forward(conv2.forward(s1), train), state, site, lif);
  Tensor shortcut = x_spikes;
  if (has_down)
    shortcut = lif_site(down_bn.forward(down_conv.forward(x_spikes), train),
                        state, site, lif);
  return sew_connect_spikes(s2, shortcut, ecfg.sew_connect);
}

SpikingEncoder::SpikingEncoder(ParamRegistry& reg, const std::string& name,
                               const EncoderConfig& cfg, const LIFConfig& lif)
    : cfg_(cfg), lif_(lif) {
  cfg_.validate();
  lif_.validate();
  stem_ = Conv2d(reg, name + ".stem.conv", cfg.input_channels, cfg.block_widths[0],
                 3, 1, 1);
  stem_bn_ = BatchNorm(reg, name + ".stem.bn", cfg.block_widths[0]);
  int in_ch = cfg.block_widths[0];
  for (size_t s = 0; s < cfg.block_widths.size(); ++s) {
    for (int b = 0; b < cfg.blocks_per_stage[s]; ++b) {
      int stride = (b == 0 && s > 0) ? 2 : 1;
      blocks_.emplace_back(reg,
                           name + ".stage" + std::to_string(s) + ".block" +
                               std::to_string(b),
                           in_ch, cfg.block_widths[s], stride);
      in_ch = cfg.block_widths[s];
    }
  }
}

Tensor SpikingEncoder::forward_step(const Tensor& frame, EncoderState& state,
                                    bool train) {
  size_t site = 0;
  Tensor x = lif_site(stem_bn_.forward(stem_.forward(frame), train), state, site,
                      lif_);
  for (auto& blk : blocks_) x = blk.forward(x, state, site, cfg_, lif_, train);
  return global_avg_pool(x);
}

TemporalFeatureSequence SpikingEncoder::encode_clip(const std::vector<Tensor>& frames,
                                                    bool train) {
  return encode_clip_with_state(frames, train, nullptr);
}

TemporalFeatureSequence SpikingEncoder::encode_clip_with_state(
    const std::vector<Tensor>& frames, bool train, EncoderState* out_state) {
  if (frames.empty()) throw std::invalid_argument("encode_clip: T must be >= 1");
  EncoderState state;  // fresh per clip: no leakage across clips
  std::vector<Tensor> per_step;
  per_step.reserve(frames.size());
  for (const auto& f : frames)
    per_step.push_back(forward_step(f, state, train));
  if (out_state) *out_state = std::move(state);
  return make_feature_sequence(std::move(per_step));
}

TemporalFeatureSequence SpikingEncoder::encode_clip(const Tensor& clip, bool train) {
  if (clip.ndim() != 5)
    throw std::invalid_argument("encode_clip: expected [B,T,C,H,W]");
  const int64_t B = clip.dim(0), T = clip.dim(1);
  if (T < 1) throw std::invalid_argument("encode_clip: T must be >= 1");
  const int64_t C = clip.dim(2), H = clip.dim(3), W = clip.dim(4);
  const int64_t frame_sz = C * H * W;
  std::vector<Tensor> frames;
  frames.reserve((size_t)T);
  for (int64_t t = 0; t < T; ++t) {
    Tensor f({B, C, H, W});
    for (int64_t b = 0; b < B; ++b)
      std::copy_n(clip.data() + (b * T + t) * frame_sz, frame_sz,
                  f.data() + b * frame_sz);
    frames.push_back(std::move(f));
  }
  return encode_clip(frames, train);
}

}  // namespace prednext
