#include "prednext/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace prednext {

using nlohmann::json;

SplitDataset load_split(const ExperimentConfig& cfg) {
  SplitDataset out;
  if (cfg.dataset.source == "synthetic") {
    out.ds = synth_dataset(cfg.dataset.synth_classes, cfg.dataset.synth_videos,
                           cfg.dataset.synth_length, cfg.dataset.synth_height,
                           cfg.dataset.synth_width, cfg.seed);
  } else {
    out.ds = ingest_frame_folders(data_root(), data_root() / cfg.dataset.manifest);
  }
  std::vector<size_t> order(out.ds.size());
  std::iota(order.begin(), order.end(), size_t{0});
  auto rng = substream(cfg.seed, "split");
  std::shuffle(order.begin(), order.end(), rng.gen());
  size_t n_val = (size_t)std::llround((double)order.size() *
                                      (double)cfg.dataset.val_fraction);
  n_val = std::min(std::max<size_t>(n_val, 1), order.size() - 1);
  out.val_idx.assign(order.begin(), order.begin() + (long)n_val);
  out.train_idx.assign(order.begin() + (long)n_val, order.end());
  return out;
}

TrainContext::TrainContext(const ExperimentConfig& c)
    : cfg(c), reg(c.seed), model(reg, c.encoder, c.lif, c.method) {
  if (cfg.prednext)
    heads.emplace(reg, cfg.method.resolved_proj_out(),
                  cfg.prednext->predictor_hidden);
  if (cfg.method.uses_momentum()) {
    target_reg = std::make_unique<ParamRegistry>(cfg.seed);
    target_model =
        std::make_unique<SslModel>(*target_reg, cfg.encoder, cfg.lif, cfg.method);
    target_reg->copy_values_from(reg);
  }
  if (cfg.method.uses_queue())
    queue = std::make_unique<NegativeQueue>(cfg.method.queue_size,
                                            cfg.method.resolved_proj_out());
}

bool TrainContext::prednext_active() const {
  return cfg.prednext && cfg.prednext->effective_alpha() > 0.f;
}

std::vector<Tensor> TrainContext::trainable_params() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : reg.params()) {
    if (!prednext_active() && name.rfind("prednext.", 0) == 0) continue;
    out.push_back(t);
  }
  return out;
}

std::string TrainContext::checkpoint_exclude_prefix() const {
  return prednext_active() ? "" : "prednext.";
}

namespace {

// pairs -> T tensors of [B, C, H, W] for one view.
std::vector<Tensor> view_tensors(const std::vector<ClipPair>& pairs,
                                 const std::vector<float> ClipPair::* view) {
  int B = (int)pairs.size();
  int T = pairs[0].T, C = pairs[0].C, H = pairs[0].H, W = pairs[0].W;
  size_t frame = (size_t)C * H * W;
  std::vector<Tensor> out;
  for (int t = 0; t < T; ++t) {
    Tensor x({B, C, H, W});
    for (int b = 0; b < B; ++b)
      std::copy_n((pairs[(size_t)b].*view).data() + (size_t)t * frame, frame,
                  x.data() + (size_t)b * frame);
    out.push_back(std::move(x));
  }
  return out;
}

LossBreakdown batch_loss(TrainContext& ctx, const std::vector<ClipPair>& pairs) {
  const auto& cfg = ctx.cfg;
  auto frames_i = view_tensors(pairs, &ClipPair::view_i);
  auto frames_j = view_tensors(pairs, &ClipPair::view_j);

  bool pred_on = ctx.prednext_active();
  float alpha = pred_on ? cfg.prednext->effective_alpha() : 0.f;

  Tensor l_ssl;
  TemporalFeatureSequence feats_i, feats_j, proj_i, proj_j;
  Tensor moco_keys;
  if (!pred_on || alpha < 1.f) {
    SslForwardOut out = ssl_forward(ctx.model, ctx.target_model.get(),
                                    ctx.queue.get(), frames_i, frames_j, true);
    l_ssl = out.loss;
    feats_i = std::move(out.feats_i);
    feats_j = std::move(out.feats_j);
    proj_i = std::move(out.proj_i);
    proj_j = std::move(out.proj_j);
    moco_keys = out.moco_keys;
  } else {
    // Prediction-only objective: still run both views through the online
    // model so BN statistics and feature plumbing match the mixed case.
    feats_i = ctx.model.encoder.encode_clip(frames_i, true);
    feats_j = ctx.model.encoder.encode_clip(frames_j, true);
    proj_i = ctx.model.project(feats_i, true);
    proj_j = ctx.model.project(feats_j, true);
    l_ssl = Tensor::scalar(0.f);
  }

  LossBreakdown lb;
  if (pred_on) {
    const PredNextConfig& pc = *cfg.prednext;
    bool cross = pc.effective_cross_view();
    Tensor l_step = Tensor::scalar(0.f);
    Tensor l_clip = Tensor::scalar(0.f);
    if (pc.include_step)
      l_step = step_pred_loss(proj_i.per_step, proj_j.per_step,
                              ctx.heads->step_predictor, pc.step_interval, cross,
                              pc.target_stop_grad, true);
    if (pc.include_clip) {
      auto next_i = view_tensors(pairs, &ClipPair::next_view_i);
      auto next_j = view_tensors(pairs, &ClipPair::next_view_j);
      Tensor next_agg_i, next_agg_j;
      {
        // Stop-grad targets need no graph; skip it to bound BPTT memory.
        std::optional<NoGradGuard> ng;
        if (pc.target_stop_grad) ng.emplace();
        next_agg_i =
            ctx.model.project(ctx.model.encoder.encode_clip(next_i, true), true)
                .aggregate;
        next_agg_j =
            ctx.model.project(ctx.model.encoder.encode_clip(next_j, true), true)
                .aggregate;
      }
      l_clip = clip_pred_loss(proj_i.aggregate, proj_j.aggregate, next_agg_i,
                              next_agg_j, ctx.heads->clip_predictor, cross,
                              pc.target_stop_grad, true);
    }
    lb = compose_total(l_ssl, l_step, l_clip, pc,
                       cfg.dataset.clip.frames - pc.step_interval);
  } else {
    lb.l_ssl = l_ssl.item();
    lb.total = l_ssl;
    lb.total_value = lb.l_ssl;
  }

  if (cfg.forced.enabled) {
    // The penalty targets the encoder features themselves — the same
    // representation the consistency metric evaluates — not the projections.
    Tensor lf = scale(add(forced_consistency_loss(feats_i.per_step, cfg.forced.beta),
                          forced_consistency_loss(feats_j.per_step, cfg.forced.beta)),
                      0.5f);
    lb.l_forced = lf.item();
    lb.total = add(lb.total, lf);
    lb.total_value = lb.total.item();
  }

  if (moco_keys.defined() && ctx.queue) ctx.queue->push(moco_keys);
  return lb;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
  }
  std::filesystem::rename(tmp, path);
}

json manifest_json(const ExperimentConfig& cfg, const std::string& status,
                   double wall_seconds) {
  json j;
  j["format"] = "prednext-run-v1";
  j["version"] = "0.1.0";
  j["status"] = status;
  j["seed"] = cfg.seed;
  j["deterministic"] = cfg.deterministic;
  j["config"] = json::parse(cfg.to_json());
  j["files"] = {{"config", "config.json"},
                {"loss_log", "loss_log.jsonl"},
                {"curves", "curves.csv"},
                {"checkpoint", "checkpoint.ckpt"},
                {"eval_report", "eval_report.json"}};
  j["wall_clock_seconds"] = wall_seconds;
  return j;
}

std::vector<size_t> head_subset(const std::vector<size_t>& idx, int cap) {
  size_t n = std::min(idx.size(), (size_t)std::max(cap, 1));
  return {idx.begin(), idx.begin() + (long)n};
}

}  // namespace

FeatureBank build_feature_bank(SpikingEncoder& encoder, const VideoDataset& ds,
                               const std::vector<size_t>& indices,
                               const ClipSpec& spec, int n_clips, int batch_size) {
  if (n_clips < 1) throw std::invalid_argument("n_clips must be >= 1");
  NoGradGuard ng;
  int64_t N = (int64_t)indices.size();
  int64_t D = encoder.config().feature_dim();
  int64_t T = spec.frames;
  FeatureBank bank;
  bank.n = N;
  bank.dim = D;
  bank.steps = T;
  bank.aggregated.assign((size_t)(N * D), 0.f);
  bank.per_step.assign((size_t)(N * T * D), 0.f);
  for (size_t i : indices) {
    bank.labels.push_back(ds.meta(i).label);
    bank.ids.push_back(ds.meta(i).id);
  }
  int C = ds.channels();
  size_t frame = (size_t)C * spec.height * spec.width;
  for (int64_t base = 0; base < N; base += batch_size) {
    int B = (int)std::min<int64_t>(batch_size, N - base);
    for (int c = 0; c < n_clips; ++c) {
      std::vector<Tensor> frames((size_t)T);
      for (int64_t t = 0; t < T; ++t) frames[(size_t)t] = Tensor({B, C, spec.height, spec.width});
      for (int b = 0; b < B; ++b) {
        auto clip = eval_clip(ds, indices[(size_t)(base + b)], spec, c, n_clips);
        for (int64_t t = 0; t < T; ++t)
          std::copy_n(clip.data() + (size_t)t * frame, frame,
                      frames[(size_t)t].data() + (size_t)b * frame);
      }
      auto feats = encoder.encode_clip(frames, false);
      const float* agg = feats.aggregate.data();
      for (int b = 0; b < B; ++b)
        for (int64_t d = 0; d < D; ++d)
          bank.aggregated[(size_t)((base + b) * D + d)] +=
              agg[(size_t)b * D + d] / (float)n_clips;
      if (c == 0)
        for (int64_t t = 0; t < T; ++t) {
          const float* st = feats.per_step[(size_t)t].data();
          for (int b = 0; b < B; ++b)
            std::copy_n(st + (size_t)b * D, (size_t)D,
                        bank.per_step.data() + (size_t)((base + b) * T * D + t * D));
        }
    }
  }
  bank.validate();
  return bank;
}

RunSummary run_pretraining(const ExperimentConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  write_text_atomic(out / "config.json", cfg.to_json());
  write_text_atomic(out / "manifest.json", manifest_json(cfg, "running", 0).dump(2));

  SplitDataset split = load_split(cfg);
  TrainContext ctx(cfg);
  AdamW opt(ctx.trainable_params(), cfg.optim);

  int64_t spe = std::max<int64_t>(1, (int64_t)split.train_idx.size() /
                                         cfg.optim.batch_size);
  int64_t total_steps = spe * cfg.optim.epochs;
  int64_t warmup_steps = spe * cfg.optim.warmup_epochs;

  auto eval_train = head_subset(split.train_idx, cfg.eval_subset);
  auto eval_val = head_subset(split.val_idx, cfg.eval_subset);

  std::ofstream loss_log(out / "loss_log.jsonl", std::ios::binary);
  std::ofstream curves_csv(out / "curves.csv", std::ios::binary);
  curves_csv << "epoch,consistency_error,consistency,knn_top1,knn_top5\n";

  RunSummary summary;
  summary.run_dir = out;
  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.optim.epochs; ++epoch) {
    std::vector<size_t> order = split.train_idx;
    {
      auto rng = substream(cfg.seed, "shuffle.epoch" + std::to_string(epoch));
      std::shuffle(order.begin(), order.end(), rng.gen());
    }
    auto rng_data = substream(cfg.seed, "data.epoch" + std::to_string(epoch));
    auto rng_aug_i = substream(cfg.seed, "aug.view_i.epoch" + std::to_string(epoch));
    auto rng_aug_j = substream(cfg.seed, "aug.view_j.epoch" + std::to_string(epoch));
    for (int64_t b = 0; b < spe; ++b) {
      std::vector<ClipPair> pairs;
      std::vector<std::string> skipped;
      for (int s = 0; s < cfg.optim.batch_size; ++s) {
        size_t vid = order[(size_t)(b * cfg.optim.batch_size + s)];
        auto res = sample_clip_pair(split.ds, vid, cfg.dataset.clip,
                                    cfg.dataset.aug, rng_data, rng_aug_i,
                                    rng_aug_j);
        if (res.pair)
          pairs.push_back(std::move(*res.pair));
        else
          skipped.push_back(split.ds.meta(vid).id + ": " + res.skip_reason);
      }
      if ((int)pairs.size() < 2) continue;

      LossBreakdown lb = batch_loss(ctx, pairs);
      if (!std::isfinite(lb.total_value)) {
        json dump;
        dump["epoch"] = epoch;
        dump["batch"] = b;
        dump["losses"] = {{"l_ssl", lb.l_ssl},     {"l_step", lb.l_step},
                          {"l_clip", lb.l_clip},   {"l_pred", lb.l_pred},
                          {"l_forced", lb.l_forced}, {"total", lb.total_value}};
        std::vector<std::string> vids;
        for (const auto& p : pairs) vids.push_back(p.video_id);
        dump["videos"] = vids;
        write_text_atomic(out / "nan_dump.json", dump.dump(2));
        throw std::runtime_error("non-finite loss at epoch " +
                                 std::to_string(epoch) + " batch " +
                                 std::to_string(b) + "; see nan_dump.json");
      }

      ctx.reg.zero_grads();
      if (ctx.target_reg) ctx.target_reg->zero_grads();
      backward(lb.total);
      float lr = cosine_warmup_lr(cfg.optim.lr, step, total_steps, warmup_steps);
      opt.step(lr);
      if (ctx.target_reg)
        momentum_update(*ctx.target_reg, ctx.reg, cfg.method.momentum_ema);
      ++step;

      json row = {{"epoch", epoch},       {"batch", b},
                  {"l_ssl", lb.l_ssl},    {"l_step", lb.l_step},
                  {"l_clip", lb.l_clip},  {"l_pred", lb.l_pred},
                  {"l_forced", lb.l_forced}, {"total", lb.total_value}};
      if (!skipped.empty()) row["skipped"] = skipped;
      loss_log << row.dump() << "\n";
      summary.final_total_loss = lb.total_value;
    }

    if (cfg.eval_every > 0 &&
        ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.optim.epochs)) {
      FeatureBank tb = build_feature_bank(ctx.model.encoder, split.ds, eval_train,
                                          cfg.dataset.clip, cfg.eval_clips,
                                          cfg.optim.batch_size);
      FeatureBank vb = build_feature_bank(ctx.model.encoder, split.ds, eval_val,
                                          cfg.dataset.clip, cfg.eval_clips,
                                          cfg.optim.batch_size);
      auto cons = consistency_error(vb);
      auto knn = knn_eval(tb, vb, std::min<int>(cfg.knn_k, (int)tb.n));
      EpochCurve c{epoch, cons.error, cons.consistency, knn.top1, knn.top5};
      summary.curves.push_back(c);
      curves_csv << c.epoch << "," << c.consistency_error << ","
                 << c.consistency << "," << c.knn_top1 << "," << c.knn_top5
                 << "\n";
      curves_csv.flush();
    }
  }
  loss_log.flush();

  summary.checkpoint_path = out / "checkpoint.ckpt";
  save_checkpoint(summary.checkpoint_path,
                  registry_to_checkpoint(ctx.reg, ctx.checkpoint_exclude_prefix()));

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
  write_text_atomic(out / "manifest.json",
                    manifest_json(cfg, "complete", wall).dump(2));
  return summary;
}

namespace {

EvalReport evaluate_context(TrainContext& ctx, const ExperimentConfig& cfg,
                            bool with_probe) {
  SplitDataset split = load_split(cfg);
  FeatureBank tb = build_feature_bank(ctx.model.encoder, split.ds,
                                      split.train_idx, cfg.dataset.clip,
                                      cfg.eval_clips, cfg.optim.batch_size);
  FeatureBank vb = build_feature_bank(ctx.model.encoder, split.ds, split.val_idx,
                                      cfg.dataset.clip, cfg.eval_clips,
                                      cfg.optim.batch_size);
  EvalReport rep;
  auto cons = consistency_error(vb);
  rep.consistency_error = cons.error;
  rep.consistency = cons.consistency;
  auto knn = knn_eval(tb, vb, std::min<int>(cfg.knn_k, (int)tb.n));
  rep.knn_top1 = knn.top1;
  rep.knn_top5 = knn.top5;
  std::vector<int> ks;
  for (int k : {1, 5, 10, 20})
    if (k <= (int)tb.n) ks.push_back(k);
  rep.recall_at = retrieval_eval(vb, tb, ks).recall_at;
  rep.collapse_std = collapse_metric(vb);
  if (with_probe) {
    auto probe = linear_probe_on_banks(tb, vb, 200, 0.01f, cfg.seed);
    rep.probe_top1 = probe.top1;
    rep.probe_top5 = probe.top5;
  }
  return rep;
}

}  // namespace

EvalReport evaluate_run(const ExperimentConfig& cfg,
                        const std::filesystem::path& checkpoint, bool with_probe) {
  TrainContext ctx(cfg);
  // Prediction heads are training-only state; some checkpoints omit them.
  checkpoint_to_registry(load_checkpoint(checkpoint), ctx.reg, "prednext.");
  return evaluate_context(ctx, cfg, with_probe);
}

EvalReport evaluate_random_init(const ExperimentConfig& cfg) {
  TrainContext ctx(cfg);
  // A freshly constructed encoder has BatchNorm running statistics at their
  // mean-0 / var-1 defaults, which rarely match the actual pre-norm activation
  // statistics; evaluated as-is the random baseline mostly measures that
  // mismatch. Warm the running statistics with forward passes (no gradients,
  // no weight updates) so the baseline reflects random *features* on data.
  {
    NoGradGuard ng;
    SplitDataset split = load_split(cfg);
    const ClipSpec& spec = cfg.dataset.clip;
    int C = split.ds.channels();
    size_t frame = (size_t)C * spec.height * spec.width;
    int64_t N = (int64_t)split.train_idx.size();
    for (int64_t base = 0; base < N; base += cfg.optim.batch_size) {
      int B = (int)std::min<int64_t>(cfg.optim.batch_size, N - base);
      std::vector<Tensor> frames((size_t)spec.frames);
      for (int t = 0; t < spec.frames; ++t)
        frames[(size_t)t] = Tensor({B, C, spec.height, spec.width});
      for (int b = 0; b < B; ++b) {
        auto clip = eval_clip(split.ds, split.train_idx[(size_t)(base + b)],
                              spec, 0, 1);
        for (int t = 0; t < spec.frames; ++t)
          std::copy_n(clip.data() + (size_t)t * frame, frame,
                      frames[(size_t)t].data() + (size_t)b * frame);
      }
      ctx.model.encoder.encode_clip(frames, true);
    }
  }
  return evaluate_context(ctx, cfg, false);
}

}  // namespace prednext
