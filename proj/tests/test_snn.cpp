#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "prednext/snn.hpp"

using namespace prednext;
using testutil::random_tensor;

TEST_CASE("lif_step hand-evaluated update rule") {
  LIFConfig cfg;  // threshold 1, tau 2, hard reset, atan width 2

  Tensor zero({1, 2}, 0.f);
  auto [v0, s0] = lif_step(zero, zero, cfg);
  CHECK(v0.data()[0] == 0.f);
  CHECK(s0.data()[0] == 0.f);

  Tensor drive({1, 2}, 2.f);
  auto [v1, s1] = lif_step(zero, drive, cfg);
  // potential pre-threshold = 0 + (2-0)/2 = 1 >= 1 -> spike, hard reset
  CHECK(s1.data()[0] == 1.f);
  CHECK(v1.data()[0] == 0.f);

  Tensor rest({1, 2}, 0.4f);
  auto [v2, s2] = lif_step(rest, zero, cfg);
  CHECK(v2.data()[0] == doctest::Approx(0.2f));
  CHECK(s2.data()[0] == 0.f);

  CHECK_THROWS_AS(lif_step(Tensor({1, 2}), Tensor({1, 3}), cfg),
                  std::invalid_argument);
}

TEST_CASE("soft reset subtracts the threshold") {
  LIFConfig cfg;
  cfg.reset_mode = ResetMode::soft_subtract;
  auto [v, s] = lif_step(Tensor({1, 1}, 0.f), Tensor({1, 1}, 3.f), cfg);
  CHECK(s.data()[0] == 1.f);
  CHECK(v.data()[0] == doctest::Approx(0.5f));  // 1.5 - threshold
}

TEST_CASE("surrogate gradient shape: peak at zero, even, vanishing tails") {
  for (auto kind :
       {SurrogateKind::atan, SurrogateKind::sigmoid, SurrogateKind::triangular}) {
    LIFConfig cfg;
    cfg.surrogate = kind;
    float peak = surrogate_grad_value(0.f, cfg);
    CHECK(peak > 0.f);
    for (float x : {0.3f, 0.9f, 1.7f}) {
      CHECK(surrogate_grad_value(x, cfg) ==
            doctest::Approx(surrogate_grad_value(-x, cfg)));
      CHECK(surrogate_grad_value(x, cfg) <= peak);
      CHECK(surrogate_grad_value(x, cfg) <
            surrogate_grad_value(x * 0.5f, cfg) + 1e-9f);
    }
    CHECK(surrogate_grad_value(50.f, cfg) == doctest::Approx(0.f).scale(1).epsilon(1e-3));
  }
  LIFConfig cfg;
  cfg.surrogate_width = 3.f;
  // d/dx[(1/pi) atan(pi a x / 2) + 1/2] at 0 is a/2
  CHECK(surrogate_grad_value(0.f, cfg) == doctest::Approx(1.5f));
}

TEST_CASE("smooth spike primitive differentiates to the surrogate") {
  for (auto kind :
       {SurrogateKind::atan, SurrogateKind::sigmoid, SurrogateKind::triangular}) {
    LIFConfig cfg;
    cfg.surrogate = kind;
    for (float x : {-1.2f, -0.3f, 0.05f, 0.7f}) {
      float h = 1e-3f;
      float fd =
          (smooth_spike_value(x + h, cfg) - smooth_spike_value(x - h, cfg)) /
          (2 * h);
      CHECK(fd == doctest::Approx(surrogate_grad_value(x, cfg)).epsilon(1e-3));
    }
  }
}

TEST_CASE("spike outputs are binary and sew add stays in {0,1,2}") {
  LIFConfig lif;
  ParamRegistry reg(11);
  SewBlock blk(reg, "blk", 2, 2, 1);
  EncoderConfig ecfg;
  ecfg.sew_connect = SewConnect::add;
  EncoderState state;
  Tensor spikes_in = random_tensor({2, 2, 4, 4}, 1);
  for (int64_t i = 0; i < spikes_in.numel(); ++i)
    spikes_in.data()[i] = spikes_in.data()[i] > 0 ? 1.f : 0.f;
  for (int t = 0; t < 3; ++t) {
    size_t site = 0;
    Tensor out = blk.forward(spikes_in, state, site, ecfg, lif, true);
    for (int64_t i = 0; i < out.numel(); ++i) {
      float v = out.data()[i];
      CHECK((v == 0.f || v == 1.f || v == 2.f));
    }
    for (const auto& s : state.spikes)
      for (int64_t i = 0; i < s.numel(); ++i)
        CHECK((s.data()[i] == 0.f || s.data()[i] == 1.f));
  }
}

TEST_CASE("sew connect truth tables on binary inputs") {
  Tensor b = Tensor::from({1, 4}, {0, 0, 1, 1});
  Tensor s = Tensor::from({1, 4}, {0, 1, 0, 1});
  Tensor a = sew_connect_spikes(b, s, SewConnect::add);
  CHECK(std::vector<float>(a.data(), a.data() + 4) ==
        std::vector<float>{0, 1, 1, 2});
  Tensor n = sew_connect_spikes(b, s, SewConnect::and_);
  CHECK(std::vector<float>(n.data(), n.data() + 4) ==
        std::vector<float>{0, 0, 0, 1});
  // iand: (NOT branch) AND shortcut
  Tensor i = sew_connect_spikes(b, s, SewConnect::iand);
  CHECK(std::vector<float>(i.data(), i.data() + 4) ==
        std::vector<float>{0, 1, 0, 0});
  CHECK_THROWS_AS(sew_connect_spikes(b, Tensor({1, 3}), SewConnect::add),
                  std::invalid_argument);

  // zero input spikes, zero state -> zero output through a whole block
  ParamRegistry reg(3);
  SewBlock blk(reg, "z", 1, 1, 1);
  EncoderConfig ecfg;
  EncoderState st;
  size_t site = 0;
  LIFConfig lif;
  Tensor zero({1, 1, 3, 3}, 0.f);
  Tensor out = blk.forward(zero, st, site, ecfg, lif, false);
  for (int64_t k = 0; k < out.numel(); ++k) CHECK(out.data()[k] == 0.f);
}

namespace {

// Scalar double-precision re-simulation of one SewBlock timestep sequence:
// conv3x3(pad 1) -> BN(batch stats) -> LIF, twice, then add-connect.
struct BlockOracle {
  int N, C, H, W;
  std::vector<double> v1, v2;  // membrane per LIF site

  std::vector<double> conv3x3(const std::vector<double>& x, const Tensor& w,
                              int in_c, int out_c) const {
    std::vector<double> y((size_t)N * out_c * H * W, 0.0);
    for (int n = 0; n < N; ++n)
      for (int oc = 0; oc < out_c; ++oc)
        for (int oy = 0; oy < H; ++oy)
          for (int ox = 0; ox < W; ++ox) {
            double acc = 0;
            for (int c = 0; c < in_c; ++c)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                  int iy = oy + ky - 1, ix = ox + kx - 1;
                  if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                  acc += x[(((size_t)n * in_c + c) * H + iy) * W + ix] *
                         (double)w.data()[((oc * in_c + c) * 3 + ky) * 3 + kx];
                }
            y[(((size_t)n * out_c + oc) * H + oy) * W + ox] = acc;
          }
    return y;
  }

  void bn(std::vector<double>& x, const Tensor& gamma, const Tensor& beta) const {
    const double eps = 1e-5;
    int64_t per = (int64_t)N * H * W;
    for (int c = 0; c < C; ++c) {
      double m = 0, var = 0;
      for (int n = 0; n < N; ++n)
        for (int i = 0; i < H * W; ++i) m += x[((size_t)n * C + c) * H * W + i];
      m /= (double)per;
      for (int n = 0; n < N; ++n)
        for (int i = 0; i < H * W; ++i) {
          double d = x[((size_t)n * C + c) * H * W + i] - m;
          var += d * d;
        }
      var /= (double)per;
      for (int n = 0; n < N; ++n)
        for (int i = 0; i < H * W; ++i) {
          auto& v = x[((size_t)n * C + c) * H * W + i];
          v = gamma.data()[c] * (v - m) / std::sqrt(var + eps) + beta.data()[c];
        }
    }
  }

  std::vector<double> lif(std::vector<double>& v, const std::vector<double>& x,
                          const LIFConfig& cfg) const {
    std::vector<double> s(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
      double vp = v[i] + (x[i] - v[i]) / cfg.decay_tau;
      double spike = vp >= cfg.threshold ? 1.0 : 0.0;
      v[i] = vp * (1.0 - spike);
      s[i] = spike;
    }
    return s;
  }

  std::vector<double> step(const std::vector<double>& in, SewBlock& blk,
                           const LIFConfig& cfg) {
    if (v1.empty()) {
      v1.assign((size_t)N * C * H * W, 0.0);
      v2.assign((size_t)N * C * H * W, 0.0);
    }
    auto h1 = conv3x3(in, blk.conv1.W, C, C);
    bn(h1, blk.bn1.gamma, blk.bn1.beta);
    auto s1 = lif(v1, h1, cfg);
    auto h2 = conv3x3(s1, blk.conv2.W, C, C);
    bn(h2, blk.bn2.gamma, blk.bn2.beta);
    auto s2 = lif(v2, h2, cfg);
    for (size_t i = 0; i < s2.size(); ++i) s2[i] += in[i];  // add connect
    return s2;
  }
};

}  // namespace

TEST_CASE("sew block forward matches an independent scalar oracle") {
  ParamRegistry reg(21);
  SewBlock blk(reg, "oracle_blk", 2, 2, 1);
  // break the symmetric defaults so BN does real work
  for (int64_t i = 0; i < blk.bn1.gamma.numel(); ++i) {
    blk.bn1.gamma.data()[i] = 0.8f + 0.2f * (float)i;
    blk.bn1.beta.data()[i] = 0.1f * (float)i;
  }
  LIFConfig lif;
  lif.threshold = 0.7f;  // below the typical post-BN scale so spikes occur
  EncoderConfig ecfg;
  EncoderState state;
  BlockOracle oracle{2, 2, 4, 4, {}, {}};

  Tensor spikes = random_tensor({2, 2, 4, 4}, 5);
  for (int64_t i = 0; i < spikes.numel(); ++i)
    spikes.data()[i] = spikes.data()[i] > 0.3f ? 1.f : 0.f;
  std::vector<double> in(spikes.data(), spikes.data() + spikes.numel());

  bool any_spike = false;
  for (int t = 0; t < 3; ++t) {
    size_t site = 0;
    Tensor out = blk.forward(spikes, state, site, ecfg, lif, true);
    auto expect = oracle.step(in, blk, lif);
    REQUIRE(out.numel() == (int64_t)expect.size());
    for (int64_t i = 0; i < out.numel(); ++i) {
      CHECK(out.data()[i] == doctest::Approx(expect[(size_t)i]).epsilon(1e-5));
      if (expect[(size_t)i] > in[(size_t)i]) any_spike = true;
    }
  }
  CHECK(any_spike);
}

TEST_CASE("encoder statefulness, reset, and aggregation contracts") {
  ParamRegistry reg(31);
  EncoderConfig ecfg;
  ecfg.block_widths = {4, 8};
  ecfg.blocks_per_stage = {1, 1};
  LIFConfig lif;
  SpikingEncoder enc(reg, "enc", ecfg, lif);

  Tensor frame = random_tensor({2, 3, 8, 8}, 6, 0.8f);
  std::vector<Tensor> clip = {frame, frame, frame};

  NoGradGuard ng;
  auto seq = enc.encode_clip(clip, false);
  REQUIRE(seq.per_step.size() == 3);
  CHECK(seq.aggregate.shape() == Shape{2, 8});

  // membrane state is carried across timesteps: after a clip, some LIF
  // site holds a nonzero sub-threshold potential
  EncoderState final_state;
  auto seq_s = enc.encode_clip_with_state(clip, false, &final_state);
  for (size_t t = 0; t < 3; ++t)
    CHECK(seq_s.per_step[t].values() == seq.per_step[t].values());
  REQUIRE(!final_state.potentials.empty());
  bool any_nonzero_potential = false;
  for (const auto& v : final_state.potentials)
    for (int64_t i = 0; i < v.numel(); ++i)
      if (v.data()[i] != 0.f) any_nonzero_potential = true;
  CHECK(any_nonzero_potential);

  // aggregate is the per-step mean
  for (int64_t i = 0; i < seq.aggregate.numel(); ++i) {
    double m = (seq.per_step[0].data()[i] + seq.per_step[1].data()[i] +
                seq.per_step[2].data()[i]) /
               3.0;
    CHECK(seq.aggregate.data()[i] == doctest::Approx(m).epsilon(1e-5));
  }

  // no inter-clip leakage: same clip twice, bitwise-equal outputs
  auto seq2 = enc.encode_clip(clip, false);
  for (size_t t = 0; t < 3; ++t)
    CHECK(seq.per_step[t].values() == seq2.per_step[t].values());

  // T=1: aggregate equals the only step exactly
  auto one = enc.encode_clip(std::vector<Tensor>{frame}, false);
  CHECK(one.aggregate.values() == one.per_step[0].values());

  CHECK_THROWS_AS(enc.encode_clip(std::vector<Tensor>{}, false),
                  std::invalid_argument);
}

TEST_CASE("sub-threshold LIF dynamics are linear by superposition") {
  LIFConfig cfg;
  cfg.threshold = 1e9f;  // spiking effectively disabled
  const int T = 5;
  auto run = [&](const std::vector<Tensor>& inputs) {
    Tensor v({2, 3}, 0.f);
    for (int t = 0; t < T; ++t) v = lif_step(v, inputs[(size_t)t], cfg).first;
    return v;
  };
  std::vector<Tensor> a, b, ab;
  for (int t = 0; t < T; ++t) {
    a.push_back(random_tensor({2, 3}, 100 + (uint64_t)t));
    b.push_back(random_tensor({2, 3}, 200 + (uint64_t)t));
    ab.push_back(add(a.back(), b.back()));
  }
  Tensor va = run(a), vb = run(b), vab = run(ab);
  for (int64_t i = 0; i < va.numel(); ++i)
    CHECK(vab.data()[i] ==
          doctest::Approx(va.data()[i] + vb.data()[i]).epsilon(1e-5));
}

TEST_CASE("smooth-spike network gradients match finite differences") {
  ParamRegistry reg(41);
  EncoderConfig ecfg;
  ecfg.block_widths = {3};
  ecfg.blocks_per_stage = {1};
  LIFConfig lif;
  lif.smooth_spike = true;  // surrogate-smoothed spiking: fully differentiable
  SpikingEncoder enc(reg, "enc", ecfg, lif);
  Tensor frames = random_tensor({2, 3, 5, 5}, 7, 0.8f);
  Tensor target = random_tensor({2, 3}, 8);
  std::vector<Tensor> params;
  for (auto& [n, p] : reg.params()) params.push_back(p);
  auto st = testutil::gradcheck(
      [&] {
        auto seq = enc.encode_clip({frames, frames}, true);
        return mean_all(square(sub(seq.aggregate, target)));
      },
      params, 12, 9);
  CHECK(st.checked >= 100);
  CHECK(st.failed == 0);
}

TEST_CASE("config validation") {
  LIFConfig bad;
  bad.decay_tau = 1.f;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  EncoderConfig e;
  e.block_widths = {};
  CHECK_THROWS_AS(e.validate(), std::invalid_argument);
}
