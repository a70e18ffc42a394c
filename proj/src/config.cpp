#include "prednext/config.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

namespace prednext {

using nlohmann::json;

namespace {

const char* kSyntheticDesk = R"({
  "dataset": {
    "source": "synthetic",
    "classes": 4, "videos": 400, "length": 32, "height": 12, "width": 12,
    "val_fraction": 0.25,
    "clip": {"frames": 4, "stride": 2, "height": 12, "width": 12, "next_clip_offset": 0},
    "aug": {"scale": [0.2, 0.766], "ratio": [0.75, 1.3333], "flip_prob": 0.5,
            "brightness": 0.6, "contrast": 0.6, "saturation": 0.6, "hue": 0.1,
            "gray_prob": 0.2}
  },
  "encoder": {"block_widths": [8, 16, 32], "blocks_per_stage": [1, 1, 1],
              "input_channels": 3, "sew_connect": "add"},
  "lif": {"threshold": 1.0, "decay_tau": 2.0, "reset_mode": "hard_to_zero",
          "surrogate": "atan", "surrogate_width": 2.0},
  "method": {"name": "simsiam", "proj_out": 32, "proj_hidden": 64,
             "pred_hidden": 32, "tau": 0.5, "momentum_ema": 0.99,
             "queue_size": 512, "lambda_bt": 0.005},
  "prednext": {"enabled": false, "alpha": 0.5, "step_interval": 1,
               "predictor_hidden": 64, "cross_view": true, "same_view_only": false,
               "include_step": true, "include_clip": true,
               "target_stop_grad": true, "composition": "per_term_half"},
  "forced_consistency": {"enabled": false, "beta": 0.8},
  "optimizer": {"lr": 0.002, "weight_decay": 1e-6, "epochs": 30,
                "warmup_epochs": 3, "batch_size": 64},
  "eval": {"every": 1, "subset": 256, "knn_k": 10, "clips": 3},
  "seed": 0, "deterministic": true, "out_dir": "runs/synthetic-desk"
})";

const char* kUcf101Like = R"({
  "extends": "synthetic-desk",
  "dataset": {
    "source": "manifest", "manifest": "ucf101/manifest.tsv",
    "clip": {"frames": 16, "stride": 2, "height": 128, "width": 128,
             "next_clip_offset": 0}
  },
  "encoder": {"block_widths": [64, 128, 256, 512],
              "blocks_per_stage": [2, 2, 2, 2]},
  "method": {"proj_out": 0, "proj_hidden": 0, "pred_hidden": 512,
             "queue_size": 4096},
  "prednext": {"predictor_hidden": 512},
  "optimizer": {"epochs": 200, "warmup_epochs": 20, "batch_size": 128},
  "out_dir": "runs/ucf101-like"
})";

const char* kMiniKineticsLike = R"({
  "extends": "ucf101-like",
  "dataset": {
    "manifest": "minikinetics/manifest.tsv",
    "clip": {"frames": 8, "stride": 8, "height": 112, "width": 112}
  },
  "optimizer": {"epochs": 120, "warmup_epochs": 12},
  "out_dir": "runs/minikinetics-like"
})";

[[noreturn]] void config_error(const std::string& field, const std::string& why) {
  throw std::invalid_argument("config field '" + field + "': " + why);
}

template <typename T>
T get_field(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    config_error(key, e.what());
  }
}

json resolve_extends(const json& j, const std::filesystem::path& base_dir,
                     int depth = 0);

json load_base(const std::string& name, const std::filesystem::path& base_dir,
               int depth) {
  for (const auto& p : preset_names())
    if (p == name)
      return resolve_extends(json::parse(preset_json(name)), base_dir, depth + 1);
  std::filesystem::path path = base_dir / name;
  std::ifstream f(path);
  if (!f) config_error("extends", "unknown preset or unreadable file: " + name);
  return resolve_extends(json::parse(f), path.parent_path(), depth + 1);
}

json resolve_extends(const json& j, const std::filesystem::path& base_dir,
                     int depth) {
  if (depth > 8) config_error("extends", "chain too deep");
  if (!j.contains("extends")) return j;
  json base = load_base(j.at("extends").get<std::string>(), base_dir, depth);
  json overlay = j;
  overlay.erase("extends");
  base.merge_patch(overlay);
  return base;
}

SewConnect parse_connect(const std::string& s) {
  if (s == "add") return SewConnect::add;
  if (s == "and") return SewConnect::and_;
  if (s == "iand") return SewConnect::iand;
  config_error("encoder.sew_connect", "expected add|and|iand, got " + s);
}

ResetMode parse_reset(const std::string& s) {
  if (s == "hard_to_zero") return ResetMode::hard_to_zero;
  if (s == "soft_subtract") return ResetMode::soft_subtract;
  config_error("lif.reset_mode", "expected hard_to_zero|soft_subtract, got " + s);
}

SurrogateKind parse_surrogate(const std::string& s) {
  if (s == "atan") return SurrogateKind::atan;
  if (s == "sigmoid") return SurrogateKind::sigmoid;
  if (s == "triangular") return SurrogateKind::triangular;
  config_error("lif.surrogate", "expected atan|sigmoid|triangular, got " + s);
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    cfg.dataset.source = get_field<std::string>(d, "source", "synthetic");
    if (cfg.dataset.source != "synthetic" && cfg.dataset.source != "manifest")
      config_error("dataset.source", "expected synthetic|manifest");
    cfg.dataset.manifest = get_field<std::string>(d, "manifest", "");
    if (cfg.dataset.source == "manifest" && cfg.dataset.manifest.empty())
      config_error("dataset.manifest", "required when source=manifest");
    cfg.dataset.synth_classes = get_field<int>(d, "classes", 4);
    cfg.dataset.synth_videos = get_field<int>(d, "videos", 400);
    cfg.dataset.synth_length = get_field<int>(d, "length", 32);
    cfg.dataset.synth_height = get_field<int>(d, "height", 12);
    cfg.dataset.synth_width = get_field<int>(d, "width", 12);
    cfg.dataset.val_fraction = get_field<float>(d, "val_fraction", 0.25f);
    if (d.contains("clip")) {
      const json& c = d.at("clip");
      cfg.dataset.clip.frames = get_field<int>(c, "frames", 4);
      cfg.dataset.clip.stride = get_field<int>(c, "stride", 1);
      cfg.dataset.clip.height = get_field<int>(c, "height", cfg.dataset.synth_height);
      cfg.dataset.clip.width = get_field<int>(c, "width", cfg.dataset.synth_width);
      cfg.dataset.clip.next_clip_offset = get_field<int>(c, "next_clip_offset", 0);
    }
    if (d.contains("aug")) {
      const json& a = d.at("aug");
      auto scale = get_field<std::vector<float>>(a, "scale", {0.2f, 0.766f});
      auto ratio = get_field<std::vector<float>>(a, "ratio", {0.75f, 1.3333f});
      if (scale.size() != 2 || ratio.size() != 2)
        config_error("dataset.aug", "scale/ratio must be [lo,hi]");
      cfg.dataset.aug.scale_min = scale[0];
      cfg.dataset.aug.scale_max = scale[1];
      cfg.dataset.aug.ratio_min = ratio[0];
      cfg.dataset.aug.ratio_max = ratio[1];
      cfg.dataset.aug.flip_prob = get_field<float>(a, "flip_prob", 0.5f);
      cfg.dataset.aug.brightness = get_field<float>(a, "brightness", 0.6f);
      cfg.dataset.aug.contrast = get_field<float>(a, "contrast", 0.6f);
      cfg.dataset.aug.saturation = get_field<float>(a, "saturation", 0.6f);
      cfg.dataset.aug.hue = get_field<float>(a, "hue", 0.1f);
      cfg.dataset.aug.gray_prob = get_field<float>(a, "gray_prob", 0.2f);
      cfg.dataset.aug.identity = get_field<bool>(a, "identity", false);
    }
  }
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    cfg.encoder.block_widths =
        get_field<std::vector<int>>(e, "block_widths", {16, 32, 64, 128});
    cfg.encoder.blocks_per_stage =
        get_field<std::vector<int>>(e, "blocks_per_stage", {1, 1, 1, 1});
    cfg.encoder.input_channels = get_field<int>(e, "input_channels", 3);
    cfg.encoder.sew_connect =
        parse_connect(get_field<std::string>(e, "sew_connect", "add"));
  }
  if (j.contains("lif")) {
    const json& l = j.at("lif");
    cfg.lif.threshold = get_field<float>(l, "threshold", 1.f);
    cfg.lif.decay_tau = get_field<float>(l, "decay_tau", 2.f);
    cfg.lif.reset_mode =
        parse_reset(get_field<std::string>(l, "reset_mode", "hard_to_zero"));
    cfg.lif.surrogate =
        parse_surrogate(get_field<std::string>(l, "surrogate", "atan"));
    cfg.lif.surrogate_width = get_field<float>(l, "surrogate_width", 2.f);
  }
  if (j.contains("method")) {
    const json& m = j.at("method");
    cfg.method.method =
        ssl_method_from_string(get_field<std::string>(m, "name", "simsiam"));
    cfg.method.proj_out = get_field<int>(m, "proj_out", 0);
    cfg.method.proj_hidden = get_field<int>(m, "proj_hidden", 0);
    cfg.method.pred_hidden = get_field<int>(m, "pred_hidden", 512);
    cfg.method.tau = get_field<float>(m, "tau", 0.5f);
    cfg.method.momentum_ema = get_field<float>(m, "momentum_ema", 0.99f);
    cfg.method.queue_size = get_field<int>(m, "queue_size", 4096);
    cfg.method.lambda_bt = get_field<float>(m, "lambda_bt", 5e-3f);
  }
  if (j.contains("prednext") && get_field<bool>(j.at("prednext"), "enabled", false)) {
    const json& p = j.at("prednext");
    PredNextConfig pc;
    pc.alpha = get_field<float>(p, "alpha", 0.5f);
    pc.step_interval = get_field<int>(p, "step_interval", 1);
    pc.predictor_hidden = get_field<int>(p, "predictor_hidden", 512);
    pc.cross_view = get_field<bool>(p, "cross_view", true);
    pc.same_view_only = get_field<bool>(p, "same_view_only", false);
    pc.include_step = get_field<bool>(p, "include_step", true);
    pc.include_clip = get_field<bool>(p, "include_clip", true);
    pc.target_stop_grad = get_field<bool>(p, "target_stop_grad", true);
    std::string comp = get_field<std::string>(p, "composition", "per_term_half");
    if (comp == "per_term_half")
      pc.composition = PredComposition::per_term_half;
    else if (comp == "quarter_sum")
      pc.composition = PredComposition::quarter_sum;
    else
      config_error("prednext.composition", "expected per_term_half|quarter_sum");
    cfg.prednext = pc;
  }
  if (j.contains("forced_consistency")) {
    const json& fc = j.at("forced_consistency");
    cfg.forced.enabled = get_field<bool>(fc, "enabled", false);
    cfg.forced.beta = get_field<float>(fc, "beta", 0.8f);
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    cfg.optim.lr = get_field<float>(o, "lr", 2e-3f);
    cfg.optim.weight_decay = get_field<float>(o, "weight_decay", 1e-6f);
    cfg.optim.epochs = get_field<int>(o, "epochs", 30);
    cfg.optim.warmup_epochs = get_field<int>(o, "warmup_epochs", 3);
    cfg.optim.batch_size = get_field<int>(o, "batch_size", 64);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    cfg.eval_every = get_field<int>(e, "every", 1);
    cfg.eval_subset = get_field<int>(e, "subset", 256);
    cfg.knn_k = get_field<int>(e, "knn_k", 10);
    cfg.eval_clips = get_field<int>(e, "clips", 3);
  }
  cfg.seed = get_field<uint64_t>(j, "seed", 0);
  cfg.deterministic = get_field<bool>(j, "deterministic", true);
  cfg.out_dir = get_field<std::string>(j, "out_dir", "runs/run");
  cfg.allow_pred_and_forced = get_field<bool>(j, "allow_pred_and_forced", false);
  cfg.validate();
  return cfg;
}

}  // namespace

void ExperimentConfig::validate() const {
  encoder.validate();
  lif.validate();
  dataset.clip.validate();
  dataset.aug.validate();
  if (prednext) {
    prednext->validate();
    if (prednext->step_interval >= dataset.clip.frames)
      config_error("prednext.step_interval", "must be < clip.frames");
  }
  if (prednext && forced.enabled && !allow_pred_and_forced)
    config_error("forced_consistency.enabled",
                 "prednext and forced consistency are both active; set "
                 "allow_pred_and_forced for comparison runs");
  if (optim.epochs < 1) config_error("optimizer.epochs", "must be >= 1");
  if (optim.batch_size < 2) config_error("optimizer.batch_size", "must be >= 2");
  if (dataset.val_fraction <= 0.f || dataset.val_fraction >= 1.f)
    config_error("dataset.val_fraction", "must be in (0,1)");
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["dataset"] = {
      {"source", dataset.source},
      {"manifest", dataset.manifest},
      {"classes", dataset.synth_classes},
      {"videos", dataset.synth_videos},
      {"length", dataset.synth_length},
      {"height", dataset.synth_height},
      {"width", dataset.synth_width},
      {"val_fraction", dataset.val_fraction},
      {"clip",
       {{"frames", dataset.clip.frames},
        {"stride", dataset.clip.stride},
        {"height", dataset.clip.height},
        {"width", dataset.clip.width},
        {"next_clip_offset", dataset.clip.next_clip_offset}}},
      {"aug",
       {{"scale", {dataset.aug.scale_min, dataset.aug.scale_max}},
        {"ratio", {dataset.aug.ratio_min, dataset.aug.ratio_max}},
        {"flip_prob", dataset.aug.flip_prob},
        {"brightness", dataset.aug.brightness},
        {"contrast", dataset.aug.contrast},
        {"saturation", dataset.aug.saturation},
        {"hue", dataset.aug.hue},
        {"gray_prob", dataset.aug.gray_prob},
        {"identity", dataset.aug.identity}}}};
  j["encoder"] = {{"block_widths", encoder.block_widths},
                  {"blocks_per_stage", encoder.blocks_per_stage},
                  {"input_channels", encoder.input_channels},
                  {"sew_connect", encoder.sew_connect == SewConnect::add   ? "add"
                                  : encoder.sew_connect == SewConnect::and_ ? "and"
                                                                            : "iand"}};
  j["lif"] = {{"threshold", lif.threshold},
              {"decay_tau", lif.decay_tau},
              {"reset_mode", lif.reset_mode == ResetMode::hard_to_zero
                                 ? "hard_to_zero"
                                 : "soft_subtract"},
              {"surrogate", lif.surrogate == SurrogateKind::atan ? "atan"
                            : lif.surrogate == SurrogateKind::sigmoid
                                ? "sigmoid"
                                : "triangular"},
              {"surrogate_width", lif.surrogate_width}};
  j["method"] = {{"name", ssl_method_to_string(method.method)},
                 {"proj_out", method.proj_out},
                 {"proj_hidden", method.proj_hidden},
                 {"pred_hidden", method.pred_hidden},
                 {"tau", method.tau},
                 {"momentum_ema", method.momentum_ema},
                 {"queue_size", method.queue_size},
                 {"lambda_bt", method.lambda_bt}};
  if (prednext) {
    j["prednext"] = {
        {"enabled", true},
        {"alpha", prednext->alpha},
        {"step_interval", prednext->step_interval},
        {"predictor_hidden", prednext->predictor_hidden},
        {"cross_view", prednext->cross_view},
        {"same_view_only", prednext->same_view_only},
        {"include_step", prednext->include_step},
        {"include_clip", prednext->include_clip},
        {"target_stop_grad", prednext->target_stop_grad},
        {"composition", prednext->composition == PredComposition::per_term_half
                            ? "per_term_half"
                            : "quarter_sum"}};
  } else {
    j["prednext"] = {{"enabled", false}};
  }
  j["forced_consistency"] = {{"enabled", forced.enabled}, {"beta", forced.beta}};
  j["optimizer"] = {{"lr", optim.lr},
                    {"weight_decay", optim.weight_decay},
                    {"epochs", optim.epochs},
                    {"warmup_epochs", optim.warmup_epochs},
                    {"batch_size", optim.batch_size}};
  j["eval"] = {{"every", eval_every},
               {"subset", eval_subset},
               {"knn_k", knn_k},
               {"clips", eval_clips}};
  j["seed"] = seed;
  j["deterministic"] = deterministic;
  j["out_dir"] = out_dir;
  j["allow_pred_and_forced"] = allow_pred_and_forced;
  return j.dump(2);
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"synthetic-desk", "ucf101-like",
                                                 "minikinetics-like"};
  return names;
}

std::string preset_json(const std::string& name) {
  if (name == "synthetic-desk") return kSyntheticDesk;
  if (name == "ucf101-like") return kUcf101Like;
  if (name == "minikinetics-like") return kMiniKineticsLike;
  throw std::invalid_argument("unknown preset: " + name);
}

ExperimentConfig config_from_json_text(const std::string& text,
                                       const std::filesystem::path& base_dir) {
  json j = json::parse(text);
  return from_json(resolve_extends(j, base_dir, 0));
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open config " + path.string());
  json j = json::parse(f);
  return from_json(resolve_extends(j, path.parent_path(), 0));
}

std::filesystem::path data_root() {
  const char* env = std::getenv("PREDNEXT_DATA_ROOT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path(".");
}

}  // namespace prednext
