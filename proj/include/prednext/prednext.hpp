#pragma once

#include "prednext/ssl.hpp"

namespace prednext {

enum class PredComposition { per_term_half, quarter_sum };

struct PredNextConfig {
  float alpha = 0.5f;
  int step_interval = 1;  // m
  int predictor_hidden = 512;
  bool cross_view = true;
  bool same_view_only = false;  // same-view prediction with no SSL term
  bool include_step = true;
  bool include_clip = true;
  bool target_stop_grad = true;
  PredComposition composition = PredComposition::per_term_half;

  void validate() const;
  // same_view_only implies the whole objective is the prediction loss.
  float effective_alpha() const { return same_view_only ? 1.f : alpha; }
  bool effective_cross_view() const { return same_view_only ? false : cross_view; }
};

struct LossBreakdown {
  float l_ssl = 0.f;
  float l_step = 0.f;
  float l_clip = 0.f;
  float l_pred = 0.f;
  float l_forced = 0.f;
  float total_value = 0.f;
  Tensor total;  // graph node to backprop
};

// Step Prediction: predictions P_T(z^t) against the other view's features
// m steps ahead, symmetric over views, cosine terms averaged over the T-m
// valid steps and the batch.
Tensor step_pred_loss(const std::vector<Tensor>& z_i_steps,
                      const std::vector<Tensor>& z_j_steps, MlpHead& step_predictor,
                      int m, bool cross_view, bool target_stop_grad, bool train);

// Clip Prediction: P_C over the aggregated features against the aggregated
// features of the subsequently sampled clip, symmetric over views.
Tensor clip_pred_loss(const Tensor& agg_i, const Tensor& agg_j,
                      const Tensor& next_agg_i, const Tensor& next_agg_j,
                      MlpHead& clip_predictor, bool cross_view,
                      bool target_stop_grad, bool train);

// l_pred from the active components plus the (1-alpha)/alpha weighting.
// `steps_summed` is T-m (needed only by the quarter_sum composition, which
// reproduces the sum-over-t scale).
LossBreakdown compose_total(const Tensor& l_ssl, const Tensor& l_step,
                            const Tensor& l_clip, const PredNextConfig& cfg,
                            int steps_summed = 1);

// Mean over samples and ordered timestep pairs of 1 - cos, times beta.
Tensor forced_consistency_loss(const std::vector<Tensor>& f_steps, float beta);

// Both temporal prediction heads.
struct PredNextHeads {
  PredNextHeads(ParamRegistry& reg, int proj_dim, int hidden);
  MlpHead step_predictor;  // P_T
  MlpHead clip_predictor;  // P_C
};

}  // namespace prednext
