#pragma once

#include <optional>

#include "prednext/data.hpp"
#include "prednext/optim.hpp"
#include "prednext/prednext.hpp"
#include "prednext/ssl.hpp"

namespace prednext {

struct DatasetConfig {
  std::string source = "synthetic";  // "synthetic" | "manifest"
  std::string manifest;              // path, relative to the data root
  int synth_classes = 4;
  int synth_videos = 400;
  int synth_length = 32;
  int synth_height = 12;
  int synth_width = 12;
  float val_fraction = 0.25f;
  ClipSpec clip;
  AugmentParams aug;
};

struct ForcedConsistencyConfig {
  bool enabled = false;
  float beta = 0.8f;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  EncoderConfig encoder;
  LIFConfig lif;
  SslConfig method;
  std::optional<PredNextConfig> prednext;
  ForcedConsistencyConfig forced;
  OptimConfig optim;
  uint64_t seed = 0;
  bool deterministic = true;
  std::string out_dir = "runs/run";
  int eval_every = 1;
  int eval_subset = 256;
  int knn_k = 10;
  int eval_clips = 3;
  bool allow_pred_and_forced = false;

  void validate() const;
  std::string to_json() const;
};

// Loads a config file (JSON), resolving an `extends` chain of preset names
// (`synthetic-desk`, `ucf101-like`, `minikinetics-like`) or file paths.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig config_from_json_text(const std::string& text,
                                       const std::filesystem::path& base_dir = {});

const std::vector<std::string>& preset_names();
std::string preset_json(const std::string& name);

// $PREDNEXT_DATA_ROOT, or "." when unset.
std::filesystem::path data_root();

}  // namespace prednext
