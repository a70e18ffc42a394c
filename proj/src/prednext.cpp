#include "prednext/prednext.hpp"

namespace prednext {

void PredNextConfig::validate() const {
  if (alpha < 0.f || alpha > 1.f)
    throw std::invalid_argument("PredNextConfig: alpha must be in [0,1]");
  if (step_interval < 1)
    throw std::invalid_argument("PredNextConfig: step_interval must be >= 1");
  if (predictor_hidden < 1)
    throw std::invalid_argument("PredNextConfig: predictor_hidden must be >= 1");
  if (!include_step && !include_clip)
    throw std::invalid_argument(
        "PredNextConfig: at least one of step/clip prediction must be active");
}

namespace {

Tensor neg_mean_cos(const Tensor& p, const Tensor& target, bool stop_grad) {
  Tensor t = stop_grad ? detach(target) : target;
  return scale(mean_all(rowwise_dot(row_l2_normalize(p), row_l2_normalize(t))),
               -1.f);
}

}  // namespace

Tensor step_pred_loss(const std::vector<Tensor>& z_i_steps,
                      const std::vector<Tensor>& z_j_steps, MlpHead& step_predictor,
                      int m, bool cross_view, bool target_stop_grad, bool train) {
  const int T = (int)z_i_steps.size();
  if ((int)z_j_steps.size() != T)
    throw std::invalid_argument("step_pred_loss: view lengths differ");
  if (m < 1 || m >= T)
    throw std::invalid_argument("step_pred_loss: need 1 <= m <= T-1");

  Tensor acc_ij, acc_ji;
  for (int t = 0; t + m < T; ++t) {
    Tensor p_i = step_predictor.forward(z_i_steps[(size_t)t], train);
    Tensor p_j = step_predictor.forward(z_j_steps[(size_t)t], train);
    const Tensor& tgt_for_i = cross_view ? z_j_steps[(size_t)(t + m)]
                                         : z_i_steps[(size_t)(t + m)];
    const Tensor& tgt_for_j = cross_view ? z_i_steps[(size_t)(t + m)]
                                         : z_j_steps[(size_t)(t + m)];
    Tensor qi = neg_mean_cos(p_i, tgt_for_i, target_stop_grad);
    Tensor qj = neg_mean_cos(p_j, tgt_for_j, target_stop_grad);
    acc_ij = acc_ij.defined() ? add(acc_ij, qi) : qi;
    acc_ji = acc_ji.defined() ? add(acc_ji, qj) : qj;
  }
  const float inv_steps = 1.f / (float)(T - m);
  // 0.5*Q(i->j) + 0.5*Q(j->i), each averaged over valid steps.
  return scale(add(acc_ij, acc_ji), 0.5f * inv_steps);
}

Tensor clip_pred_loss(const Tensor& agg_i, const Tensor& agg_j,
                      const Tensor& next_agg_i, const Tensor& next_agg_j,
                      MlpHead& clip_predictor, bool cross_view,
                      bool target_stop_grad, bool train) {
  if (!next_agg_i.defined() || !next_agg_j.defined())
    throw std::invalid_argument("clip_pred_loss: missing next-clip features");
  Tensor c_i = clip_predictor.forward(agg_i, train);
  Tensor c_j = clip_predictor.forward(agg_j, train);
  const Tensor& tgt_for_i = cross_view ? next_agg_j : next_agg_i;
  const Tensor& tgt_for_j = cross_view ? next_agg_i : next_agg_j;
  Tensor mi = neg_mean_cos(c_i, tgt_for_i, target_stop_grad);
  Tensor mj = neg_mean_cos(c_j, tgt_for_j, target_stop_grad);
  return scale(add(mi, mj), 0.5f);
}

LossBreakdown compose_total(const Tensor& l_ssl, const Tensor& l_step,
                            const Tensor& l_clip, const PredNextConfig& cfg,
                            int steps_summed) {
  cfg.validate();
  LossBreakdown out;
  Tensor l_pred;
  const bool has_step = cfg.include_step && l_step.defined();
  const bool has_clip = cfg.include_clip && l_clip.defined();
  if (has_step && has_clip) {
    if (cfg.composition == PredComposition::per_term_half) {
      l_pred = scale(add(l_step, l_clip), 0.5f);
    } else {
      // Algorithm-1 scale: 0.25 * (sum_t Q terms + M terms), with our step
      // loss stored as a per-step mean.
      l_pred = scale(add(scale(l_step, (float)steps_summed), l_clip), 0.5f);
    }
  } else if (has_step) {
    l_pred = l_step;
  } else if (has_clip) {
    l_pred = l_clip;
  }
  const float alpha = cfg.effective_alpha();
  Tensor total;
  if (!l_pred.defined()) {
    total = l_ssl;
  } else if (alpha == 0.f) {
    total = l_ssl;
  } else if (!l_ssl.defined() || alpha == 1.f) {
    total = l_pred;
  } else {
    total = add_scaled(l_ssl, l_pred, 1.f - alpha, alpha);
  }
  out.l_ssl = l_ssl.defined() ? l_ssl.item() : 0.f;
  out.l_step = has_step ? l_step.item() : 0.f;
  out.l_clip = has_clip ? l_clip.item() : 0.f;
  out.l_pred = l_pred.defined() ? l_pred.item() : 0.f;
  out.total = total;
  out.total_value = total.item();
  return out;
}

Tensor forced_consistency_loss(const std::vector<Tensor>& f_steps, float beta) {
  const int T = (int)f_steps.size();
  if (T < 2) throw std::invalid_argument("forced_consistency_loss: T must be >= 2");
  std::vector<Tensor> normed;
  normed.reserve((size_t)T);
  for (const auto& f : f_steps) normed.push_back(row_l2_normalize(f));
  Tensor acc;
  int pairs = 0;
  for (int t = 0; t < T; ++t)
    for (int s = 0; s < T; ++s) {
      if (s == t) continue;
      Tensor c = mean_all(rowwise_dot(normed[(size_t)t], normed[(size_t)s]));
      acc = acc.defined() ? add(acc, c) : c;
      ++pairs;
    }
  // mean over pairs of (1 - cos), times beta
  Tensor mean_cos = scale(acc, 1.f / (float)pairs);
  return scale(add_scalar(scale(mean_cos, -1.f), 1.f), beta);
}

PredNextHeads::PredNextHeads(ParamRegistry& reg, int proj_dim, int hidden)
    : step_predictor(reg, "prednext.step_predictor", proj_dim, hidden, proj_dim),
      clip_predictor(reg, "prednext.clip_predictor", proj_dim, hidden, proj_dim) {}

}  // namespace prednext
