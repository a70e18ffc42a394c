#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prednext/rng.hpp"
#include "prednext/tensor.hpp"

namespace prednext {

struct ClipSpec {
  int frames = 8;  // T
  int stride = 1;  // tau
  int height = 12;
  int width = 12;
  int next_clip_offset = 0;

  void validate() const;
  // Last usable start index for a (clip, next clip) pair, or -1 if the
  // video is too short.
  int max_pair_start(int video_len) const;
  int max_clip_start(int video_len) const;
};

struct AugmentParams {
  float scale_min = 0.2f, scale_max = 0.766f;
  float ratio_min = 0.75f, ratio_max = 1.3333f;
  float flip_prob = 0.5f;
  float brightness = 0.6f, contrast = 0.6f, saturation = 0.6f, hue = 0.1f;
  float gray_prob = 0.2f;
  bool identity = false;  // eval mode: full-frame resize, no jitter

  void validate() const;
};

// One drawn augmentation: constant across every frame of one view of one
// sample (current and next clip), so a view is temporally coherent.
struct AugmentInstance {
  int crop_x = 0, crop_y = 0, crop_w = 0, crop_h = 0;
  bool flip = false;
  float brightness = 1.f, contrast = 1.f, saturation = 1.f, hue = 0.f;
  bool grayscale = false;
};

AugmentInstance draw_augment(const AugmentParams& p, int src_h, int src_w,
                             RngStream& rng);

// frame: CHW float in [0,1]; writes [C, out_h, out_w].
void apply_augment(const float* frame, int C, int H, int W,
                   const AugmentInstance& a, int out_h, int out_w, float* out);

class VideoDataset {
 public:
  struct Meta {
    std::string id;
    int label = -1;
    int length = 0;
    std::filesystem::path dir;  // empty for in-memory videos
  };

  size_t size() const { return meta_.size(); }
  const Meta& meta(size_t i) const { return meta_.at(i); }
  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int num_classes() const;

  // [L, C, H, W]; file-backed videos are loaded on first access.
  const std::vector<float>& frames(size_t i) const;

  void add_video(Meta m, std::vector<float> data);
  void add_lazy_video(Meta m);
  void set_frame_shape(int c, int h, int w);

 private:
  std::vector<Meta> meta_;
  mutable std::vector<std::vector<float>> cache_;
  int channels_ = 3, height_ = 0, width_ = 0;
};

struct ClipPair {
  // Each view: [T, C, H, W] at the ClipSpec resolution.
  std::vector<float> view_i, view_j, next_view_i, next_view_j;
  int T = 0, C = 0, H = 0, W = 0;
  int label = -1;
  std::string video_id;
};

struct SampleResult {
  std::optional<ClipPair> pair;
  std::string skip_reason;
};

// Samples one clip + its successor and applies per-view augmentation.
// Augmentations are drawn independently per view; each view's instance is
// shared by its current and next clip.
SampleResult sample_clip_pair(const VideoDataset& ds, size_t video_idx,
                              const ClipSpec& spec, const AugmentParams& aug,
                              RngStream& rng_data, RngStream& rng_aug_i,
                              RngStream& rng_aug_j);

// Deterministic evaluation clip at one of `n_clips` uniform positions,
// identity augmentation.
std::vector<float> eval_clip(const VideoDataset& ds, size_t video_idx,
                             const ClipSpec& spec, int clip_idx, int n_clips);

// Synthetic temporal dataset: each class is a motion program (axis x speed
// of a moving blob, with a random sign per video) over a per-video random
// background, so class identity is carried by the clip dynamics, not by any
// single frame. Frames are quantized to 8-bit levels so a PPM export
// round-trips exactly.
VideoDataset synth_dataset(int n_classes, int n_videos, int length, int height,
                           int width, uint64_t seed);

struct IngestReport {
  std::vector<std::pair<std::string, std::string>> errors;  // (video id, reason)
};

// Manifest line format: video_id<TAB>relative_dir<TAB>num_frames<TAB>label_or_dash
VideoDataset ingest_frame_folders(const std::filesystem::path& root,
                                  const std::filesystem::path& manifest,
                                  IngestReport* report = nullptr);

// Writes per-frame binary PPMs plus a manifest mirroring the ingest layout.
void export_frame_folders(const VideoDataset& ds,
                          const std::filesystem::path& root);

}  // namespace prednext
