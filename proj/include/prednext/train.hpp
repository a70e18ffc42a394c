#pragma once

#include <memory>

#include "prednext/config.hpp"
#include "prednext/eval.hpp"
#include "prednext/serialize.hpp"

namespace prednext {

// Dataset plus its deterministic train/val index split (derived from the
// experiment seed).
struct SplitDataset {
  VideoDataset ds;
  std::vector<size_t> train_idx, val_idx;
};

SplitDataset load_split(const ExperimentConfig& cfg);

// All mutable training state for one run: the online registry/model, the
// temporal prediction heads, and (per method) the momentum target and the
// negative queue.
struct TrainContext {
  explicit TrainContext(const ExperimentConfig& cfg);

  ExperimentConfig cfg;
  ParamRegistry reg;
  SslModel model;
  std::optional<PredNextHeads> heads;
  std::unique_ptr<ParamRegistry> target_reg;
  std::unique_ptr<SslModel> target_model;
  std::unique_ptr<NegativeQueue> queue;

  // Predictor heads train only when the prediction term carries weight.
  bool prednext_active() const;
  // Parameters the optimizer updates (target params are never optimized).
  std::vector<Tensor> trainable_params() const;
  // Prefix dropped from checkpoints when the prediction term is inactive,
  // so an alpha=0 run and a baseline run serialize identically.
  std::string checkpoint_exclude_prefix() const;
};

struct EpochCurve {
  int epoch = 0;
  double consistency_error = 0.0;
  double consistency = 0.0;
  double knn_top1 = 0.0;
  double knn_top5 = 0.0;
};

struct RunSummary {
  std::filesystem::path run_dir;
  std::filesystem::path checkpoint_path;
  std::vector<EpochCurve> curves;
  double final_total_loss = 0.0;
};

// Full pretraining run: writes loss_log.jsonl, curves.csv, config.json,
// manifest.json and checkpoint.ckpt under cfg.out_dir.
RunSummary run_pretraining(const ExperimentConfig& cfg);

// Aggregated (mean over `n_clips` uniform clips) and per-timestep encoder
// features for the given videos; eval mode, no augmentation.
FeatureBank build_feature_bank(SpikingEncoder& encoder, const VideoDataset& ds,
                               const std::vector<size_t>& indices,
                               const ClipSpec& spec, int n_clips, int batch_size);

// Restores a model from a checkpoint and runs the full metric suite on the
// config's dataset split. Throws on encoder/checkpoint mismatch.
EvalReport evaluate_run(const ExperimentConfig& cfg,
                        const std::filesystem::path& checkpoint,
                        bool with_probe = false);

// Metric suite against a freshly initialized (random) encoder; the collapse
// reference point.
EvalReport evaluate_random_init(const ExperimentConfig& cfg);

}  // namespace prednext
