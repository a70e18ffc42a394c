#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "prednext/prednext.hpp"

using namespace prednext;
using testutil::gradcheck;
using testutil::random_tensor;

namespace {

// Builds an MLP head that computes the identity in eval mode: fc1 maps x to
// [x, -x], ReLU keeps the positive halves, fc2 recombines them. Fresh running
// stats make the eval-mode BN a uniform scaling, which cosine ignores.
MlpHead identity_head(ParamRegistry& reg, const std::string& name, int dim) {
  MlpHead h(reg, name, dim, 2 * dim, dim);
  std::fill(h.fc1.W.data(), h.fc1.W.data() + h.fc1.W.numel(), 0.f);
  std::fill(h.fc1.b.data(), h.fc1.b.data() + h.fc1.b.numel(), 0.f);
  std::fill(h.fc2.W.data(), h.fc2.W.data() + h.fc2.W.numel(), 0.f);
  std::fill(h.fc2.b.data(), h.fc2.b.data() + h.fc2.b.numel(), 0.f);
  for (int d = 0; d < dim; ++d) {
    h.fc1.W.data()[d * 2 * dim + d] = 1.f;        // x
    h.fc1.W.data()[d * 2 * dim + dim + d] = -1.f; // -x
    h.fc2.W.data()[d * dim + d] = 1.f;
    h.fc2.W.data()[(dim + d) * dim + d] = -1.f;
  }
  return h;
}

double mean_row_cos(const Tensor& a, const Tensor& b) {
  const int64_t B = a.dim(0), D = a.dim(1);
  double acc = 0;
  for (int64_t n = 0; n < B; ++n) {
    std::vector<double> x(a.data() + n * D, a.data() + (n + 1) * D);
    std::vector<double> y(b.data() + n * D, b.data() + (n + 1) * D);
    acc += testutil::cos_d(x, y);
  }
  return acc / (double)B;
}

}  // namespace

TEST_CASE("identity head sanity") {
  ParamRegistry reg(1);
  MlpHead h = identity_head(reg, "id", 3);
  Tensor x = random_tensor({4, 3}, 2);
  Tensor y = h.forward(x, false);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-4));
}

TEST_CASE("step prediction hits -1 on a perfectly predictable sequence") {
  ParamRegistry reg(3);
  MlpHead h = identity_head(reg, "p", 3);
  Tensor x = random_tensor({4, 3}, 4);
  std::vector<Tensor> steps = {x, x, x};  // constant through time, both views
  float loss = step_pred_loss(steps, steps, h, 1, true, true, false).item();
  CHECK(loss == doctest::Approx(-1.f).epsilon(1e-5));
}

TEST_CASE("step prediction is 0 when targets are orthogonal to predictions") {
  ParamRegistry reg(5);
  MlpHead h = identity_head(reg, "p", 2);
  Tensor a = Tensor::from({2, 2}, {1, 0, 0, 2});
  Tensor b = Tensor::from({2, 2}, {0, 3, 1, 0});  // rowwise orthogonal to a
  std::vector<Tensor> steps = {a, b};
  float loss = step_pred_loss(steps, steps, h, 1, true, true, false).item();
  CHECK(loss == doctest::Approx(0.f).scale(1).epsilon(1e-5));
}

TEST_CASE("step prediction matches a double-precision oracle at T=3") {
  ParamRegistry reg(6);
  const int D = 3;
  MlpHead h = identity_head(reg, "p", D);
  std::vector<Tensor> zi, zj;
  for (int t = 0; t < 3; ++t) {
    zi.push_back(random_tensor({4, D}, 10 + (uint64_t)t));
    zj.push_back(random_tensor({4, D}, 20 + (uint64_t)t));
  }
  // cross-view: predict the other view m steps ahead, symmetric over views
  double expect = 0;
  for (int t = 0; t < 2; ++t)
    expect += -0.5 * (mean_row_cos(zi[(size_t)t], zj[(size_t)t + 1]) +
                      mean_row_cos(zj[(size_t)t], zi[(size_t)t + 1]));
  expect /= 2.0;  // mean over the T-m valid steps
  float got = step_pred_loss(zi, zj, h, 1, true, true, false).item();
  CHECK(got == doctest::Approx(expect).epsilon(1e-4));
  CHECK(got >= -1.f);
  CHECK(got <= 1.f);

  // same-view variant targets the view's own future
  double expect_same = 0;
  for (int t = 0; t < 2; ++t)
    expect_same += -0.5 * (mean_row_cos(zi[(size_t)t], zi[(size_t)t + 1]) +
                           mean_row_cos(zj[(size_t)t], zj[(size_t)t + 1]));
  expect_same /= 2.0;
  CHECK(step_pred_loss(zi, zj, h, 1, false, true, false).item() ==
        doctest::Approx(expect_same).epsilon(1e-4));

  // view-swap symmetry
  CHECK(step_pred_loss(zj, zi, h, 1, true, true, false).item() ==
        doctest::Approx(got).epsilon(1e-5));
  // m = 2 uses only the single valid step
  double e2 = -0.5 * (mean_row_cos(zi[0], zj[2]) + mean_row_cos(zj[0], zi[2]));
  CHECK(step_pred_loss(zi, zj, h, 2, true, true, false).item() ==
        doctest::Approx(e2).epsilon(1e-4));
  // rescaling the features does not move a cosine objective
  std::vector<Tensor> zi_s, zj_s;
  for (auto& t : zi) zi_s.push_back(scale(t, 4.f));
  for (auto& t : zj) zj_s.push_back(scale(t, 0.3f));
  CHECK(step_pred_loss(zi_s, zj_s, h, 1, true, true, false).item() ==
        doctest::Approx(got).epsilon(1e-4));

  CHECK_THROWS_AS(step_pred_loss(zi, zj, h, 3, true, true, false),
                  std::invalid_argument);
  CHECK_THROWS_AS(step_pred_loss(zi, zj, h, 0, true, true, false),
                  std::invalid_argument);
  std::vector<Tensor> shorter = {zi[0], zi[1]};
  CHECK_THROWS_AS(step_pred_loss(zi, shorter, h, 1, true, true, false),
                  std::invalid_argument);
}

TEST_CASE("clip prediction endpoints and oracle") {
  ParamRegistry reg(7);
  const int D = 3;
  MlpHead h = identity_head(reg, "c", D);
  Tensor a = random_tensor({4, D}, 30);
  CHECK(clip_pred_loss(a, a, a, a, h, true, true, false).item() ==
        doctest::Approx(-1.f).epsilon(1e-5));
  Tensor na = scale(a, -1.f);
  CHECK(clip_pred_loss(a, a, na, na, h, true, true, false).item() ==
        doctest::Approx(1.f).epsilon(1e-5));

  Tensor ai = random_tensor({4, D}, 31), aj = random_tensor({4, D}, 32);
  Tensor ni = random_tensor({4, D}, 33), nj = random_tensor({4, D}, 34);
  double cross = -0.5 * (mean_row_cos(ai, nj) + mean_row_cos(aj, ni));
  CHECK(clip_pred_loss(ai, aj, ni, nj, h, true, true, false).item() ==
        doctest::Approx(cross).epsilon(1e-4));
  double same = -0.5 * (mean_row_cos(ai, ni) + mean_row_cos(aj, nj));
  CHECK(clip_pred_loss(ai, aj, ni, nj, h, false, true, false).item() ==
        doctest::Approx(same).epsilon(1e-4));

  CHECK_THROWS_AS(clip_pred_loss(ai, aj, Tensor(), nj, h, true, true, false),
                  std::invalid_argument);
}

TEST_CASE("stop-gradient keeps targets out of the backward pass") {
  ParamRegistry reg(8);
  MlpHead h = identity_head(reg, "p", 3);
  Tensor z0 = random_tensor({4, 3}, 40, 1.f, true);
  Tensor z1 = random_tensor({4, 3}, 41, 1.f, true);  // target only (T=2, m=1)
  std::vector<Tensor> steps = {z0, z1};
  backward(step_pred_loss(steps, steps, h, 1, true, true, true));
  CHECK(z0.has_grad());
  CHECK_FALSE(z1.has_grad());

  Tensor agg = random_tensor({4, 3}, 42, 1.f, true);
  Tensor nxt = random_tensor({4, 3}, 43, 1.f, true);
  backward(clip_pred_loss(agg, agg, nxt, nxt, h, true, true, true));
  CHECK(agg.has_grad());
  CHECK_FALSE(nxt.has_grad());

  // without stop-grad the target does receive gradient
  Tensor nxt2 = random_tensor({4, 3}, 44, 1.f, true);
  backward(clip_pred_loss(agg, agg, nxt2, nxt2, h, true, false, true));
  CHECK(nxt2.has_grad());
}

TEST_CASE("loss composition arithmetic") {
  PredNextConfig cfg;  // alpha 0.5, both terms, per_term_half
  Tensor l_ssl = Tensor::scalar(0.5f);
  Tensor l_step = Tensor::scalar(-1.f);
  Tensor l_clip = Tensor::scalar(-1.f);
  auto out = compose_total(l_ssl, l_step, l_clip, cfg, 2);
  CHECK(out.l_pred == doctest::Approx(-1.f));
  CHECK(out.total_value == doctest::Approx(-0.25f));
  CHECK(out.l_ssl == doctest::Approx(0.5f));
  CHECK(out.l_step == doctest::Approx(-1.f));
  CHECK(out.l_clip == doctest::Approx(-1.f));

  cfg.composition = PredComposition::quarter_sum;
  auto q = compose_total(l_ssl, Tensor::scalar(-0.5f), l_clip, cfg, 3);
  // 0.5 * (3 * -0.5 + -1) = -1.25; total = 0.5*0.5 + 0.5*(-1.25)
  CHECK(q.l_pred == doctest::Approx(-1.25f));
  CHECK(q.total_value == doctest::Approx(-0.375f));

  cfg.composition = PredComposition::per_term_half;
  cfg.include_clip = false;
  CHECK(compose_total(l_ssl, l_step, l_clip, cfg, 2).l_pred == doctest::Approx(-1.f));
  cfg.include_clip = true;
  cfg.include_step = false;
  CHECK(compose_total(l_ssl, l_step, l_clip, cfg, 2).l_pred == doctest::Approx(-1.f));
  cfg.include_step = true;

  // alpha = 0 returns the SSL loss untouched (same graph node)
  cfg.alpha = 0.f;
  auto base = compose_total(l_ssl, l_step, l_clip, cfg, 2);
  CHECK(base.total_value == 0.5f);
  CHECK(base.total.node() == l_ssl.node());

  // alpha = 1 or prediction-only mode drops the SSL term entirely
  cfg.alpha = 1.f;
  CHECK(compose_total(l_ssl, l_step, l_clip, cfg, 2).total_value ==
        doctest::Approx(-1.f));
  cfg.alpha = 0.25f;
  cfg.same_view_only = true;
  CHECK(cfg.effective_alpha() == 1.f);
  CHECK_FALSE(cfg.effective_cross_view());
  CHECK(compose_total(Tensor(), l_step, l_clip, cfg, 2).total_value ==
        doctest::Approx(-1.f));

  PredNextConfig bad;
  bad.alpha = 1.5f;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  PredNextConfig none;
  none.include_step = none.include_clip = false;
  CHECK_THROWS_AS(none.validate(), std::invalid_argument);
}

TEST_CASE("forced temporal consistency penalty") {
  Tensor x = random_tensor({4, 3}, 50);
  // identical steps: every pairwise cosine is 1 -> zero penalty
  CHECK(forced_consistency_loss({x, x, x}, 0.8f).item() ==
        doctest::Approx(0.f).scale(1).epsilon(1e-5));
  // orthogonal steps: every pairwise cosine is 0 -> penalty = beta
  Tensor e1 = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor e2 = Tensor::from({2, 2}, {0, 1, 1, 0});
  CHECK(forced_consistency_loss({e1, e2}, 0.8f).item() ==
        doctest::Approx(0.8f).epsilon(1e-5));
  // linear in beta
  std::vector<Tensor> seq = {random_tensor({4, 3}, 51), random_tensor({4, 3}, 52),
                             random_tensor({4, 3}, 53)};
  float l1 = forced_consistency_loss(seq, 1.f).item();
  CHECK(forced_consistency_loss(seq, 0.3f).item() ==
        doctest::Approx(0.3f * l1).epsilon(1e-4));
  CHECK(l1 >= 0.f);
  CHECK(l1 <= 2.f);
  CHECK_THROWS_AS(forced_consistency_loss({x}, 0.8f), std::invalid_argument);
}

TEST_CASE("prediction losses differentiate through heads and inputs") {
  ParamRegistry reg(9);
  PredNextHeads heads(reg, 4, 6);
  std::vector<Tensor> zi, zj;
  for (int t = 0; t < 3; ++t) {
    zi.push_back(random_tensor({3, 4}, 60 + (uint64_t)t, 1.f, true));
    zj.push_back(random_tensor({3, 4}, 70 + (uint64_t)t, 1.f, true));
  }
  std::vector<Tensor> params = {zi[0], zj[0], heads.step_predictor.fc1.W,
                                heads.step_predictor.fc2.W,
                                heads.step_predictor.bn.gamma};
  auto st = gradcheck(
      [&] { return step_pred_loss(zi, zj, heads.step_predictor, 1, true, true, true); },
      params, 10, 80);
  CHECK(st.failed == 0);

  Tensor ai = random_tensor({3, 4}, 81, 1.f, true);
  Tensor aj = random_tensor({3, 4}, 82, 1.f, true);
  Tensor ni = random_tensor({3, 4}, 83);
  Tensor nj = random_tensor({3, 4}, 84);
  auto st2 = gradcheck(
      [&] {
        return clip_pred_loss(ai, aj, ni, nj, heads.clip_predictor, true, true, true);
      },
      {ai, aj, heads.clip_predictor.fc1.W, heads.clip_predictor.fc2.W}, 10, 85);
  CHECK(st2.failed == 0);

  Tensor f0 = random_tensor({3, 4}, 86, 1.f, true);
  Tensor f1 = random_tensor({3, 4}, 87, 1.f, true);
  auto st3 = gradcheck([&] { return forced_consistency_loss({f0, f1}, 0.8f); },
                       {f0, f1}, 10, 88);
  CHECK(st3.failed == 0);
}
