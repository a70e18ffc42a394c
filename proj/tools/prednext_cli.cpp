#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "prednext/train.hpp"

using namespace prednext;
using nlohmann::json;

namespace {

constexpr int kExitBadConfig = 2;
constexpr int kExitBadCheckpoint = 3;
constexpr int kExitIo = 4;

struct CommonOpts {
  std::string config;
  std::string out;
  int64_t seed = -1;
  bool deterministic = false;
};

ExperimentConfig load_cfg(const CommonOpts& o) {
  ExperimentConfig cfg = load_experiment_config(o.config);
  if (o.seed >= 0) cfg.seed = (uint64_t)o.seed;
  if (o.deterministic) cfg.deterministic = true;
  if (!o.out.empty()) cfg.out_dir = o.out;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& o, bool config_required = true) {
  auto* c = cmd->add_option("--config", o.config, "experiment config file");
  if (config_required) c->required();
  cmd->add_option("--seed", o.seed, "override the config seed");
  cmd->add_flag("--deterministic", o.deterministic, "force deterministic mode");
  cmd->add_option("--out", o.out, "override the output directory");
}

int cmd_pretrain(const CommonOpts& o) {
  ExperimentConfig cfg = load_cfg(o);
  RunSummary s = run_pretraining(cfg);
  EvalReport rep = evaluate_run(cfg, s.checkpoint_path);
  std::ofstream f(s.run_dir / "eval_report.json", std::ios::binary);
  if (!f) throw std::runtime_error("io: cannot write eval_report.json");
  f << rep.to_json() << "\n";
  std::cout << s.run_dir.string() << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& ckpt, bool probe) {
  ExperimentConfig cfg = load_cfg(o);
  EvalReport rep;
  try {
    rep = evaluate_run(cfg, ckpt, probe);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadCheckpoint;
  }
  std::string text = rep.to_json();
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    std::ofstream f(std::filesystem::path(o.out) / "eval_report.json",
                    std::ios::binary);
    if (!f) return kExitIo;
    f << text << "\n";
  }
  std::cout << text << "\n";
  return 0;
}

void apply_axis(ExperimentConfig& cfg, const std::string& axis,
                const std::string& value) {
  auto need_prednext = [&]() -> PredNextConfig& {
    if (!cfg.prednext) cfg.prednext.emplace();
    return *cfg.prednext;
  };
  if (axis == "alpha") {
    need_prednext().alpha = std::stof(value);
  } else if (axis == "step_m") {
    need_prednext().step_interval = std::stoi(value);
  } else if (axis == "head_dim") {
    need_prednext().predictor_hidden = std::stoi(value);
  } else if (axis == "clip_len_stride") {
    auto x = value.find('x');
    if (x == std::string::npos)
      throw std::invalid_argument("clip_len_stride values look like '8x2'");
    cfg.dataset.clip.frames = std::stoi(value.substr(0, x));
    cfg.dataset.clip.stride = std::stoi(value.substr(x + 1));
  } else if (axis == "view_mode") {
    PredNextConfig& pc = need_prednext();
    pc.same_view_only = false;
    if (value == "cross") {
      pc.cross_view = true;
    } else if (value == "same") {
      pc.cross_view = false;
    } else if (value == "cross-only") {
      pc.cross_view = true;
      pc.alpha = 1.f;
    } else if (value == "same-only") {
      pc.same_view_only = true;
    } else {
      throw std::invalid_argument(
          "view_mode values: cross|same|cross-only|same-only");
    }
  } else {
    throw std::invalid_argument(
        "axis must be alpha|step_m|head_dim|clip_len_stride|view_mode");
  }
  cfg.validate();
}

int cmd_sweep(const CommonOpts& o, const std::string& axis,
              const std::vector<std::string>& values) {
  ExperimentConfig base = load_cfg(o);
  std::filesystem::path sweep_dir(base.out_dir);
  std::filesystem::create_directories(sweep_dir);
  std::ofstream csv(sweep_dir / "sweep.csv", std::ios::binary);
  if (!csv) return kExitIo;
  csv << "axis,value,status,config_hash,knn_top1,knn_top5,consistency_error,"
         "consistency,collapse_std\n";
  for (const auto& v : values) {
    ExperimentConfig cfg = base;
    std::string status = "ok";
    EvalReport rep;
    uint64_t cfg_hash = 0;
    try {
      apply_axis(cfg, axis, v);
      cfg.out_dir = (sweep_dir / (axis + "=" + v)).string();
      cfg_hash = hash_name(cfg.to_json());
      RunSummary s = run_pretraining(cfg);
      rep = evaluate_run(cfg, s.checkpoint_path);
      std::ofstream f(s.run_dir / "eval_report.json", std::ios::binary);
      f << rep.to_json() << "\n";
    } catch (const std::exception& e) {
      status = std::string("error: ") + e.what();
    }
    csv << axis << "," << v << "," << (status == "ok" ? "ok" : "error") << ","
        << cfg_hash << "," << rep.knn_top1 << "," << rep.knn_top5 << ","
        << rep.consistency_error << "," << rep.consistency << ","
        << rep.collapse_std << "\n";
    csv.flush();
    if (status != "ok") std::cerr << axis << "=" << v << " " << status << "\n";
  }
  std::cout << (sweep_dir / "sweep.csv").string() << "\n";
  return 0;
}

int cmd_export_features(const CommonOpts& o, const std::string& ckpt,
                        const std::string& out_stem) {
  ExperimentConfig cfg = load_cfg(o);
  TrainContext ctx(cfg);
  try {
    checkpoint_to_registry(load_checkpoint(ckpt), ctx.reg, "prednext.");
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadCheckpoint;
  }
  SplitDataset split = load_split(cfg);
  std::vector<size_t> all(split.ds.size());
  std::iota(all.begin(), all.end(), size_t{0});
  FeatureBank bank =
      build_feature_bank(ctx.model.encoder, split.ds, all, cfg.dataset.clip,
                         cfg.eval_clips, cfg.optim.batch_size);
  try {
    save_feature_bank(bank, out_stem);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  std::cout << out_stem << "\n";
  return 0;
}

int cmd_make_synth(const std::string& out, int classes, int videos, int length,
                   int height, int width, uint64_t seed) {
  VideoDataset ds = synth_dataset(classes, videos, length, height, width, seed);
  try {
    export_frame_folders(ds, out);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  std::cout << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking-network video representation learning toolkit"};
  app.require_subcommand(1);

  CommonOpts pre_o, eval_o, sweep_o, exp_o;
  std::string eval_ckpt, exp_ckpt, exp_out, sweep_axis;
  std::vector<std::string> sweep_values;
  bool eval_probe = false;
  std::string synth_out;
  int synth_classes = 4, synth_videos = 400, synth_length = 32, synth_h = 12,
      synth_w = 12;
  uint64_t synth_seed = 0;

  auto* pre = app.add_subcommand("pretrain", "run self-supervised pretraining");
  add_common(pre, pre_o);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev, eval_o);
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  ev->add_flag("--probe", eval_probe, "also fit a linear probe");

  auto* sw = app.add_subcommand("sweep", "run one ablation axis");
  add_common(sw, sweep_o);
  sw->add_option("--axis", sweep_axis,
                 "alpha|step_m|head_dim|clip_len_stride|view_mode")
      ->required();
  sw->add_option("--values", sweep_values, "axis values")->required();

  auto* ex = app.add_subcommand("export-features", "write feature bank files");
  add_common(ex, exp_o);
  ex->add_option("--checkpoint", exp_ckpt, "checkpoint file")->required();
  ex->add_option("--out-stem", exp_out, "output stem (writes .bin/.json)")
      ->required();

  auto* mk = app.add_subcommand("make-synth", "generate the synthetic dataset");
  mk->add_option("--out", synth_out, "output directory")->required();
  mk->add_option("--classes", synth_classes, "number of motion classes");
  mk->add_option("--videos", synth_videos, "number of videos");
  mk->add_option("--length", synth_length, "frames per video");
  mk->add_option("--height", synth_h, "frame height");
  mk->add_option("--width", synth_w, "frame width");
  mk->add_option("--seed", synth_seed, "generation seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) return cmd_pretrain(pre_o);
    if (ev->parsed()) return cmd_eval(eval_o, eval_ckpt, eval_probe);
    if (sw->parsed()) return cmd_sweep(sweep_o, sweep_axis, sweep_values);
    if (ex->parsed()) return cmd_export_features(exp_o, exp_ckpt, exp_out);
    if (mk->parsed())
      return cmd_make_synth(synth_out, synth_classes, synth_videos, synth_length,
                            synth_h, synth_w, synth_seed);
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
