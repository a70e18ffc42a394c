#include "prednext/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace prednext {

namespace fs = std::filesystem;

void ClipSpec::validate() const {
  if (frames < 1) throw std::invalid_argument("ClipSpec: frames must be >= 1");
  if (stride < 1) throw std::invalid_argument("ClipSpec: stride must be >= 1");
  if (height < 1 || width < 1)
    throw std::invalid_argument("ClipSpec: resolution must be positive");
  if (next_clip_offset < 0)
    throw std::invalid_argument("ClipSpec: next_clip_offset must be >= 0");
}

int ClipSpec::max_clip_start(int video_len) const {
  return video_len - ((frames - 1) * stride + 1);
}

int ClipSpec::max_pair_start(int video_len) const {
  // Current clip spans (T-1)*stride+1 frames from start; the next clip
  // begins at start + T*stride + offset and spans the same length.
  int last_needed = frames * stride + next_clip_offset + (frames - 1) * stride;
  return video_len - 1 - last_needed;
}

void AugmentParams::validate() const {
  if (flip_prob < 0.f || flip_prob > 1.f || gray_prob < 0.f || gray_prob > 1.f)
    throw std::invalid_argument("AugmentParams: probabilities must be in [0,1]");
  if (!(scale_min > 0.f) || scale_max > 1.f || scale_min > scale_max)
    throw std::invalid_argument("AugmentParams: scale range must be within (0,1]");
}

AugmentInstance draw_augment(const AugmentParams& p, int src_h, int src_w,
                             RngStream& rng) {
  AugmentInstance a;
  if (p.identity) {
    a.crop_x = 0;
    a.crop_y = 0;
    a.crop_w = src_w;
    a.crop_h = src_h;
    return a;
  }
  float area = (float)(src_h * src_w);
  float s = rng.uniform(p.scale_min, p.scale_max);
  float r = rng.uniform(p.ratio_min, p.ratio_max);
  int cw = std::clamp((int)std::lround(std::sqrt(s * area * r)), 1, src_w);
  int ch = std::clamp((int)std::lround(std::sqrt(s * area / r)), 1, src_h);
  a.crop_x = (int)rng.uniform_int(0, src_w - cw);
  a.crop_y = (int)rng.uniform_int(0, src_h - ch);
  a.crop_w = cw;
  a.crop_h = ch;
  a.flip = rng.bernoulli(p.flip_prob);
  a.brightness = rng.uniform(1.f - p.brightness, 1.f + p.brightness);
  a.contrast = rng.uniform(1.f - p.contrast, 1.f + p.contrast);
  a.saturation = rng.uniform(1.f - p.saturation, 1.f + p.saturation);
  a.hue = rng.uniform(-p.hue, p.hue);
  a.grayscale = rng.bernoulli(p.gray_prob);
  return a;
}

namespace {

float sample_bilinear(const float* plane, int H, int W, float y, float x) {
  y = std::clamp(y, 0.f, (float)(H - 1));
  x = std::clamp(x, 0.f, (float)(W - 1));
  int y0 = (int)y, x0 = (int)x;
  int y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
  float fy = y - y0, fx = x - x0;
  float top = plane[y0 * W + x0] * (1.f - fx) + plane[y0 * W + x1] * fx;
  float bot = plane[y1 * W + x0] * (1.f - fx) + plane[y1 * W + x1] * fx;
  return top * (1.f - fy) + bot * fy;
}

}  // namespace

void apply_augment(const float* frame, int C, int H, int W,
                   const AugmentInstance& a, int out_h, int out_w, float* out) {
  const bool pass_through = a.crop_x == 0 && a.crop_y == 0 && a.crop_w == W &&
                            a.crop_h == H && out_h == H && out_w == W && !a.flip;
  std::vector<float> rgb(3);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      for (int c = 0; c < C; ++c) {
        float v;
        if (pass_through) {
          v = frame[(c * H + oy) * W + ox];
        } else {
          int sx = a.flip ? (out_w - 1 - ox) : ox;
          float fy = a.crop_h <= 1 ? 0.f
                                   : (float)oy * (a.crop_h - 1) / (float)(out_h - 1);
          float fx = a.crop_w <= 1 ? 0.f
                                   : (float)sx * (a.crop_w - 1) / (float)(out_w - 1);
          v = sample_bilinear(frame + c * H * W, H, W, a.crop_y + fy,
                              a.crop_x + fx);
        }
        if (C == 3)
          rgb[(size_t)c] = v;
        else
          out[(c * out_h + oy) * out_w + ox] = v;
      }
      if (C != 3) continue;
      float r = rgb[0], g = rgb[1], b = rgb[2];
      // brightness, then contrast about 0.5 (frame-independent pivot keeps
      // the transform constant across a view's frames)
      r *= a.brightness; g *= a.brightness; b *= a.brightness;
      r = 0.5f + (r - 0.5f) * a.contrast;
      g = 0.5f + (g - 0.5f) * a.contrast;
      b = 0.5f + (b - 0.5f) * a.contrast;
      float lum = 0.299f * r + 0.587f * g + 0.114f * b;
      r = lum + (r - lum) * a.saturation;
      g = lum + (g - lum) * a.saturation;
      b = lum + (b - lum) * a.saturation;
      if (a.hue != 0.f) {
        // rotation about the gray axis
        float theta = a.hue * 2.f * (float)M_PI;
        float cs = std::cos(theta), sn = std::sin(theta);
        float one_third = 1.f / 3.f;
        float sq = std::sqrt(one_third) * sn;
        float a11 = cs + (1.f - cs) * one_third;
        float a12 = one_third * (1.f - cs) - sq;
        float a13 = one_third * (1.f - cs) + sq;
        float nr = a11 * r + a12 * g + a13 * b;
        float ng = a13 * r + a11 * g + a12 * b;
        float nb = a12 * r + a13 * g + a11 * b;
        r = nr; g = ng; b = nb;
      }
      if (a.grayscale) {
        float l2 = 0.299f * r + 0.587f * g + 0.114f * b;
        r = g = b = l2;
      }
      out[(0 * out_h + oy) * out_w + ox] = std::clamp(r, 0.f, 1.f);
      out[(1 * out_h + oy) * out_w + ox] = std::clamp(g, 0.f, 1.f);
      out[(2 * out_h + oy) * out_w + ox] = std::clamp(b, 0.f, 1.f);
    }
  }
}

int VideoDataset::num_classes() const {
  int mx = -1;
  for (const auto& m : meta_) mx = std::max(mx, m.label);
  return mx + 1;
}

void VideoDataset::add_video(Meta m, std::vector<float> data) {
  if ((int64_t)data.size() != (int64_t)m.length * channels_ * height_ * width_)
    throw std::invalid_argument("add_video: data size mismatch for " + m.id);
  meta_.push_back(std::move(m));
  cache_.push_back(std::move(data));
}

void VideoDataset::add_lazy_video(Meta m) {
  meta_.push_back(std::move(m));
  cache_.emplace_back();
}

void VideoDataset::set_frame_shape(int c, int h, int w) {
  channels_ = c;
  height_ = h;
  width_ = w;
}

namespace {

std::vector<float> read_ppm(const fs::path& p, int* h_out, int* w_out) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + p.string());
  std::string magic;
  int w, h, maxval;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255)
    throw std::runtime_error("unsupported PPM " + p.string());
  f.get();  // single whitespace after header
  std::vector<unsigned char> raw((size_t)w * h * 3);
  f.read(reinterpret_cast<char*>(raw.data()), (std::streamsize)raw.size());
  if (!f) throw std::runtime_error("truncated PPM " + p.string());
  std::vector<float> out((size_t)3 * h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out[(c * h + y) * w + x] = raw[((size_t)y * w + x) * 3 + c] / 255.f;
  *h_out = h;
  *w_out = w;
  return out;
}

void write_ppm(const fs::path& p, const float* frame, int h, int w) {
  std::ofstream f(p, std::ios::binary);
  f << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> raw((size_t)w * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = std::clamp(frame[(c * h + y) * w + x], 0.f, 1.f);
        raw[((size_t)y * w + x) * 3 + c] = (unsigned char)std::lround(v * 255.f);
      }
  f.write(reinterpret_cast<const char*>(raw.data()), (std::streamsize)raw.size());
}

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05d.ppm", i);
  return buf;
}

}  // namespace

const std::vector<float>& VideoDataset::frames(size_t i) const {
  auto& cache = cache_.at(i);
  if (cache.empty() && meta_[i].length > 0) {
    const Meta& m = meta_[i];
    std::vector<float> data;
    data.reserve((size_t)m.length * channels_ * height_ * width_);
    for (int t = 0; t < m.length; ++t) {
      int h = 0, w = 0;
      auto frame = read_ppm(m.dir / frame_name(t), &h, &w);
      if (h != height_ || w != width_)
        throw std::runtime_error("frame size mismatch in " + m.id);
      data.insert(data.end(), frame.begin(), frame.end());
    }
    cache = std::move(data);
  }
  return cache;
}

SampleResult sample_clip_pair(const VideoDataset& ds, size_t video_idx,
                              const ClipSpec& spec, const AugmentParams& aug,
                              RngStream& rng_data, RngStream& rng_aug_i,
                              RngStream& rng_aug_j) {
  spec.validate();
  aug.validate();
  const auto& m = ds.meta(video_idx);
  const int max_start = spec.max_pair_start(m.length);
  if (max_start < 0)
    return {std::nullopt, "video too short for clip + next clip (" + m.id + ")"};
  const int start = (int)rng_data.uniform_int(0, max_start);
  const int next_start = start + spec.frames * spec.stride + spec.next_clip_offset;

  AugmentInstance ai = draw_augment(aug, ds.height(), ds.width(), rng_aug_i);
  AugmentInstance aj = draw_augment(aug, ds.height(), ds.width(), rng_aug_j);

  const int C = ds.channels(), H = ds.height(), W = ds.width();
  const int T = spec.frames, oh = spec.height, ow = spec.width;
  const size_t frame_sz = (size_t)C * H * W;
  const size_t out_frame = (size_t)C * oh * ow;
  const auto& video = ds.frames(video_idx);

  ClipPair pair;
  pair.T = T; pair.C = C; pair.H = oh; pair.W = ow;
  pair.label = m.label;
  pair.video_id = m.id;
  auto fill = [&](std::vector<float>& dst, int s0, const AugmentInstance& a) {
    dst.resize((size_t)T * out_frame);
    for (int t = 0; t < T; ++t)
      apply_augment(video.data() + (size_t)(s0 + t * spec.stride) * frame_sz, C, H,
                    W, a, oh, ow, dst.data() + (size_t)t * out_frame);
  };
  fill(pair.view_i, start, ai);
  fill(pair.view_j, start, aj);
  fill(pair.next_view_i, next_start, ai);
  fill(pair.next_view_j, next_start, aj);
  return {std::move(pair), ""};
}

std::vector<float> eval_clip(const VideoDataset& ds, size_t video_idx,
                             const ClipSpec& spec, int clip_idx, int n_clips) {
  spec.validate();
  const auto& m = ds.meta(video_idx);
  int max_start = std::max(0, spec.max_clip_start(m.length));
  int start = n_clips <= 1 ? max_start / 2
                           : (int)std::lround((double)max_start * clip_idx /
                                              (double)(n_clips - 1));
  AugmentInstance id{};
  id.crop_w = ds.width();
  id.crop_h = ds.height();
  const int C = ds.channels(), H = ds.height(), W = ds.width();
  const size_t frame_sz = (size_t)C * H * W;
  const size_t out_frame = (size_t)C * spec.height * spec.width;
  const auto& video = ds.frames(video_idx);
  std::vector<float> out((size_t)spec.frames * out_frame);
  for (int t = 0; t < spec.frames; ++t) {
    int idx = std::min(start + t * spec.stride, m.length - 1);
    apply_augment(video.data() + (size_t)idx * frame_sz, C, H, W, id, spec.height,
                  spec.width, out.data() + (size_t)t * out_frame);
  }
  return out;
}

VideoDataset synth_dataset(int n_classes, int n_videos, int length, int height,
                           int width, uint64_t seed) {
  if (n_classes < 2) throw std::invalid_argument("synth_dataset: need >= 2 classes");
  if (n_classes > 8)
    throw std::invalid_argument("synth_dataset: at most 8 motion classes");
  // Motion programs: axis (horizontal / vertical / diagonals) crossed with
  // speed (slow / fast). The sign along the axis is random per video, so the
  // class is the character of the motion, not a fixed heading, and a
  // horizontal flip never moves a video across classes.
  static const float axes[4][2] = {{1, 0}, {0, 1}, {0.7071f, 0.7071f},
                                   {0.7071f, -0.7071f}};
  static const float speeds[2] = {0.4f, 2.6f};
  VideoDataset ds;
  ds.set_frame_shape(3, height, width);
  RngStream rng = substream(seed, "data.synth");
  for (int v = 0; v < n_videos; ++v) {
    int label = v % n_classes;  // balanced labels
    // Up to 4 classes: one axis each (horizontal, vertical, two diagonals) at
    // a shared speed, so no class is identifiable from overall motion energy.
    // 5..8 classes additionally split each axis into slow / fast.
    const float* axis;
    float speed;
    if (n_classes <= 4) {
      axis = axes[label];
      speed = 1.5f;
    } else {
      axis = axes[label % 2 + 2 * (label / 4)];
      speed = speeds[(label / 2) % 2];
    }
    float sign = rng.uniform(0.f, 1.f) < 0.5f ? -1.f : 1.f;
    float dx = axis[0] * speed * sign, dy = axis[1] * speed * sign;
    float px = rng.uniform(0.f, (float)width);
    float py = rng.uniform(0.f, (float)height);
    const float sigma = 1.6f;
    std::vector<float> data((size_t)length * 3 * height * width);
    for (int t = 0; t < length; ++t) {
      float cx = px + dx * t, cy = py + dy * t;
      // wrap-around keeps the blob on screen for arbitrary lengths
      cx = cx - std::floor(cx / width) * width;
      cy = cy - std::floor(cy / height) * height;
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          float ddx = std::fabs(x - cx);
          float ddy = std::fabs(y - cy);
          ddx = std::min(ddx, width - ddx);   // toroidal distance
          ddy = std::min(ddy, height - ddy);
          float g = std::exp(-(ddx * ddx + ddy * ddy) / (2.f * sigma * sigma));
          // Shared static color texture: identical for every video, so
          // appearance carries no instance (or class) identity and the only
          // per-video information is the trajectory itself. It is colored so
          // the color-jitter augmentations act on it rather than reducing to
          // brightness shifts.
          float fx = 2.f * (float)M_PI * x, fy = 2.f * (float)M_PI * y;
          float bg[3] = {
              0.30f + 0.18f * std::sin(fx / 6.f) * std::sin(fy / 6.f),
              0.30f + 0.18f * std::sin(fx / 5.f + 1.1f) * std::cos(fy / 7.f),
              0.30f + 0.18f * std::cos(fx / 7.f + 0.4f) * std::sin(fy / 5.f)};
          for (int c = 0; c < 3; ++c) {
            float val = std::clamp(bg[c] + g * 0.7f, 0.f, 1.f);
            // 8-bit quantization so PPM export/ingest round-trips exactly
            val = std::round(val * 255.f) / 255.f;
            data[(((size_t)t * 3 + c) * height + y) * width + x] = val;
          }
        }
    }
    VideoDataset::Meta m;
    m.id = "synth_" + std::to_string(v);
    m.label = label;
    m.length = length;
    ds.add_video(std::move(m), std::move(data));
  }
  return ds;
}

VideoDataset ingest_frame_folders(const fs::path& root, const fs::path& manifest,
                                  IngestReport* report) {
  std::ifstream f(manifest);
  if (!f) throw std::runtime_error("cannot open manifest " + manifest.string());
  VideoDataset ds;
  bool shape_set = false;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string id, rel, nstr, lstr;
    if (!std::getline(is, id, '\t') || !std::getline(is, rel, '\t') ||
        !std::getline(is, nstr, '\t') || !std::getline(is, lstr)) {
      if (report) report->errors.emplace_back(line, "malformed manifest line");
      continue;
    }
    int n_frames = 0;
    try {
      n_frames = std::stoi(nstr);
    } catch (...) {
      if (report) report->errors.emplace_back(id, "bad frame count");
      continue;
    }
    fs::path dir = root / rel;
    int count = 0;
    while (fs::exists(dir / frame_name(count))) ++count;
    if (count != n_frames) {
      if (report)
        report->errors.emplace_back(
            id, "frame count mismatch: manifest says " + nstr + ", found " +
                    std::to_string(count));
      continue;
    }
    if (!shape_set && n_frames > 0) {
      int h = 0, w = 0;
      read_ppm(dir / frame_name(0), &h, &w);
      ds.set_frame_shape(3, h, w);
      shape_set = true;
    }
    VideoDataset::Meta m;
    m.id = id;
    m.label = (lstr == "-") ? -1 : std::stoi(lstr);
    m.length = n_frames;
    m.dir = dir;
    ds.add_lazy_video(std::move(m));
  }
  return ds;
}

void export_frame_folders(const VideoDataset& ds, const fs::path& root) {
  fs::create_directories(root);
  std::ofstream mf(root / "manifest.tsv");
  for (size_t i = 0; i < ds.size(); ++i) {
    const auto& m = ds.meta(i);
    fs::path dir = root / m.id;
    fs::create_directories(dir);
    const auto& data = ds.frames(i);
    const size_t frame_sz = (size_t)ds.channels() * ds.height() * ds.width();
    for (int t = 0; t < m.length; ++t)
      write_ppm(dir / frame_name(t), data.data() + (size_t)t * frame_sz,
                ds.height(), ds.width());
    mf << m.id << '\t' << m.id << '\t' << m.length << '\t'
       << (m.label < 0 ? std::string("-") : std::to_string(m.label)) << '\n';
  }
}

}  // namespace prednext
