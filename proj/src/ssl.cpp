#include "prednext/ssl.hpp"

#include <cmath>

namespace prednext {

SslMethod ssl_method_from_string(const std::string& s) {
  if (s == "simclr") return SslMethod::simclr;
  if (s == "moco") return SslMethod::moco;
  if (s == "byol") return SslMethod::byol;
  if (s == "simsiam") return SslMethod::simsiam;
  if (s == "barlowtwins") return SslMethod::barlowtwins;
  throw std::invalid_argument("unknown ssl method: " + s);
}

std::string ssl_method_to_string(SslMethod m) {
  switch (m) {
    case SslMethod::simclr: return "simclr";
    case SslMethod::moco: return "moco";
    case SslMethod::byol: return "byol";
    case SslMethod::simsiam: return "simsiam";
    case SslMethod::barlowtwins: return "barlowtwins";
  }
  return "?";
}

int SslConfig::resolved_proj_out() const {
  if (proj_out > 0) return proj_out;
  switch (method) {
    case SslMethod::simclr:
    case SslMethod::moco: return 256;
    case SslMethod::byol:
    case SslMethod::simsiam: return 2048;
    case SslMethod::barlowtwins: return 1024;
  }
  return 256;
}

int SslConfig::resolved_proj_hidden() const {
  return proj_hidden > 0 ? proj_hidden : resolved_proj_out();
}

NegativeQueue::NegativeQueue(int capacity, int dim)
    : capacity_(capacity), dim_(dim), data_((size_t)capacity * dim, 0.f) {
  if (capacity <= 0 || dim <= 0)
    throw std::invalid_argument("NegativeQueue: capacity and dim must be > 0");
}

void NegativeQueue::push(const Tensor& batch) {
  if (batch.ndim() != 2 || batch.dim(1) != dim_)
    throw std::invalid_argument("NegativeQueue::push: dim mismatch");
  const int B = (int)batch.dim(0);
  if (B > capacity_)
    throw std::invalid_argument("NegativeQueue::push: batch larger than queue");
  for (int n = 0; n < B; ++n) {
    const float* row = batch.data() + (size_t)n * dim_;
    double s = 0;
    for (int d = 0; d < dim_; ++d) s += (double)row[d] * row[d];
    float inv = 1.f / std::max((float)std::sqrt(s), 1e-8f);
    float* dst = data_.data() + (size_t)cursor_ * dim_;
    for (int d = 0; d < dim_; ++d) dst[d] = row[d] * inv;
    cursor_ = (cursor_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }
}

Tensor NegativeQueue::snapshot() const {
  Tensor out({size_, dim_});
  // FIFO order: oldest first.
  int start = (size_ < capacity_) ? 0 : cursor_;
  for (int i = 0; i < size_; ++i) {
    int src = (start + i) % capacity_;
    std::copy_n(data_.data() + (size_t)src * dim_, dim_,
                out.data() + (size_t)i * dim_);
  }
  return out;
}

namespace {

// Constant tensor helper (no grad).
Tensor constant_like(Shape shape, float fill) { return Tensor(std::move(shape), fill); }

Tensor mean_cos(const Tensor& a, const Tensor& b) {
  return mean_all(rowwise_dot(row_l2_normalize(a), row_l2_normalize(b)));
}

}  // namespace

Tensor info_nce_loss(const Tensor& z_i, const Tensor& z_j,
                     const std::optional<Tensor>& negatives, float tau) {
  if (!(tau > 0.f)) throw std::invalid_argument("info_nce_loss: tau must be > 0");
  if (!same_shape(z_i.shape(), z_j.shape()) || z_i.ndim() != 2)
    throw std::invalid_argument("info_nce_loss: expected matching [B,D] views");
  const int64_t B = z_i.dim(0);

  if (negatives) {
    // MoCo mode: per-sample positive z_j, shared negatives, one direction.
    Tensor q = row_l2_normalize(z_i);
    Tensor k = row_l2_normalize(z_j);
    Tensor neg = row_l2_normalize(*negatives);
    Tensor pos = reshape(rowwise_dot(q, k), {B, 1});
    Tensor neg_logits = matmul(q, transpose(neg));  // [B,K]
    Tensor logits = scale(cat_cols(pos, neg_logits), 1.f / tau);
    std::vector<int> targets((size_t)B, 0);
    return cross_entropy_with_index(logits, targets);
  }

  if (B < 2)
    throw std::invalid_argument("info_nce_loss: B must be >= 2 without a queue");
  // NT-Xent: 2B rows, self-similarity masked, positive = the partner view.
  Tensor u = row_l2_normalize(cat_rows(z_i, z_j));
  Tensor logits = scale(matmul(u, transpose(u)), 1.f / tau);
  Tensor mask = constant_like({2 * B, 2 * B}, 0.f);
  for (int64_t r = 0; r < 2 * B; ++r) mask.data()[r * 2 * B + r] = -1e9f;
  logits = add(logits, mask);
  std::vector<int> targets;
  targets.reserve((size_t)(2 * B));
  for (int64_t r = 0; r < 2 * B; ++r)
    targets.push_back((int)((r + B) % (2 * B)));
  return cross_entropy_with_index(logits, targets);
}

Tensor cosine_pred_loss(const Tensor& p, const Tensor& z_target) {
  if (!same_shape(p.shape(), z_target.shape()) || p.ndim() != 2)
    throw std::invalid_argument("cosine_pred_loss: expected matching [B,D]");
  Tensor c = mean_cos(p, detach(z_target));
  return add_scalar(scale(c, -1.f), 1.f);
}

Tensor barlow_twins_loss(const Tensor& z_i, const Tensor& z_j, float lambda_bt) {
  if (!same_shape(z_i.shape(), z_j.shape()) || z_i.ndim() != 2)
    throw std::invalid_argument("barlow_twins_loss: expected matching [B,D]");
  const int64_t B = z_i.dim(0), D = z_i.dim(1);
  if (B < 2) throw std::invalid_argument("barlow_twins_loss: B must be >= 2");
  Tensor ni = standardize_cols(z_i, 1e-8f);
  Tensor nj = standardize_cols(z_j, 1e-8f);
  Tensor C = scale(matmul(transpose(ni), nj), 1.f / (float)B);  // [D,D]
  Tensor eye = constant_like({D, D}, 0.f);
  Tensor diag_mask = constant_like({D, D}, 0.f);
  Tensor off_mask = constant_like({D, D}, 1.f);
  for (int64_t d = 0; d < D; ++d) {
    eye.data()[d * D + d] = 1.f;
    diag_mask.data()[d * D + d] = 1.f;
    off_mask.data()[d * D + d] = 0.f;
  }
  Tensor diag_term = sum_all(mul(square(sub(C, eye)), diag_mask));
  Tensor off_term = sum_all(mul(square(C), off_mask));
  return add_scaled(diag_term, off_term, 1.f, lambda_bt);
}

void momentum_update(ParamRegistry& target, const ParamRegistry& online,
                     float m_ema) {
  const auto& tp = target.params();
  const auto& op = online.params();
  if (tp.size() != op.size())
    throw std::invalid_argument("momentum_update: parameter count mismatch");
  for (size_t i = 0; i < tp.size(); ++i) {
    Tensor t = tp[i].second;
    const Tensor o = op[i].second;
    if (tp[i].first != op[i].first || !same_shape(t.shape(), o.shape()))
      throw std::invalid_argument("momentum_update: shape mismatch at " +
                                  tp[i].first);
    for (int64_t k = 0; k < t.numel(); ++k)
      t.data()[k] = m_ema * t.data()[k] + (1.f - m_ema) * o.data()[k];
  }
  for (auto& [name, buf] : target.buffers()) {
    auto it = online.buffers().find(name);
    if (it == online.buffers().end())
      throw std::invalid_argument("momentum_update: missing buffer " + name);
    for (size_t k = 0; k < buf->size(); ++k)
      (*buf)[k] = m_ema * (*buf)[k] + (1.f - m_ema) * (*it->second)[k];
  }
}

SslModel::SslModel(ParamRegistry& reg, const EncoderConfig& ecfg,
                   const LIFConfig& lif, const SslConfig& scfg)
    : encoder(reg, "encoder", ecfg, lif),
      projection(reg, "projection", ecfg.feature_dim(), scfg.resolved_proj_hidden(),
                 scfg.resolved_proj_out()),
      cfg(scfg) {
  if (scfg.uses_predictor())
    predictor.emplace(reg, "predictor", scfg.resolved_proj_out(), scfg.pred_hidden,
                      scfg.resolved_proj_out());
}

TemporalFeatureSequence SslModel::project(const TemporalFeatureSequence& feats,
                                          bool train) {
  std::vector<Tensor> z;
  z.reserve(feats.per_step.size());
  for (const auto& f : feats.per_step) z.push_back(projection.forward(f, train));
  return make_feature_sequence(std::move(z));
}

SslForwardOut ssl_forward(SslModel& model, SslModel* target, NegativeQueue* queue,
                          const std::vector<Tensor>& frames_i,
                          const std::vector<Tensor>& frames_j, bool train) {
  SslForwardOut out;
  TemporalFeatureSequence feats_i = model.encoder.encode_clip(frames_i, train);
  TemporalFeatureSequence feats_j = model.encoder.encode_clip(frames_j, train);
  out.proj_i = model.project(feats_i, train);
  out.proj_j = model.project(feats_j, train);
  out.feats_i = std::move(feats_i);
  out.feats_j = std::move(feats_j);
  const Tensor& zi = out.proj_i.aggregate;
  const Tensor& zj = out.proj_j.aggregate;

  switch (model.cfg.method) {
    case SslMethod::simclr:
      out.loss = info_nce_loss(zi, zj, std::nullopt, model.cfg.tau);
      break;
    case SslMethod::moco: {
      if (!target || !queue)
        throw std::invalid_argument("ssl_forward: moco needs target and queue");
      Tensor keys;
      {
        NoGradGuard ng;
        auto tf = target->encoder.encode_clip(frames_j, train);
        keys = row_l2_normalize(target->project(tf, train).aggregate);
      }
      out.moco_keys = keys;
      if (queue->size() > 0) {
        out.loss = info_nce_loss(zi, keys, queue->snapshot(), model.cfg.tau);
      } else {
        // Cold start: fall back to in-batch negatives for the first step.
        out.loss = info_nce_loss(zi, keys, std::nullopt, model.cfg.tau);
      }
      break;
    }
    case SslMethod::byol: {
      if (!target) throw std::invalid_argument("ssl_forward: byol needs target");
      Tensor tzi, tzj;
      {
        NoGradGuard ng;
        tzi = target->project(target->encoder.encode_clip(frames_i, train), train)
                  .aggregate;
        tzj = target->project(target->encoder.encode_clip(frames_j, train), train)
                  .aggregate;
      }
      Tensor pi = model.predictor->forward(zi, train);
      Tensor pj = model.predictor->forward(zj, train);
      out.loss = scale(add(cosine_pred_loss(pi, tzj), cosine_pred_loss(pj, tzi)),
                       0.5f);
      break;
    }
    case SslMethod::simsiam: {
      Tensor pi = model.predictor->forward(zi, train);
      Tensor pj = model.predictor->forward(zj, train);
      out.loss = scale(add(cosine_pred_loss(pi, zj), cosine_pred_loss(pj, zi)),
                       0.5f);
      break;
    }
    case SslMethod::barlowtwins:
      out.loss = barlow_twins_loss(zi, zj, model.cfg.lambda_bt);
      break;
  }
  return out;
}

}  // namespace prednext
