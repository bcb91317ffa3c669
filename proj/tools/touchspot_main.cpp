// touchspot: command-line entry points for data generation, training, inference,
// evaluation, plotting and ablations.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "touchspot/config_io.hpp"
#include "touchspot/experiment.hpp"
#include "touchspot/plot.hpp"

namespace fs = std::filesystem;
using namespace touchspot;

namespace {

// Failure surfaced as `error: <command>: <message>` on one line.
struct CommandError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

// Config file and preset are read before the per-field flags so the flags win.
SpotConfig initial_config(int argc, char** argv) {
  std::string preset, path;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    auto value = [&](const std::string& flag, std::string& out) {
      if (a == flag && i + 1 < argc) out = argv[i + 1];
      if (a.rfind(flag + "=", 0) == 0) out = a.substr(flag.size() + 1);
    };
    value("--preset", preset);
    value("--config", path);
  }
  SpotConfig cfg;
  if (preset == "desk") {
    cfg = SpotConfig::desk_preset();
  } else if (!preset.empty() && preset != "paper") {
    throw CommandError("unknown preset '" + preset + "' (expected desk or paper)");
  }
  if (!path.empty()) cfg = load_config_file(path, cfg);
  return cfg;
}

void add_common(CLI::App* cmd, SpotConfig& cfg) {
  cmd->add_option("--preset", "desk or paper defaults, applied before --config");
  cmd->add_option("--config", "Key-value config file");
  add_config_options(*cmd, cfg);
}

void require_valid(const SpotConfig& cfg) {
  const auto problems = validate_config(cfg);
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw CommandError(msg);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw CommandError("cannot write " + path.string());
}

struct SynthArgs {
  synth::SynthParams params;
  void add(CLI::App* cmd) {
    cmd->add_option("--frame_size", params.frame_size);
    cmd->add_option("--num_frames", params.num_frames);
    cmd->add_option("--hand_speed_min", params.hand_speed_min);
    cmd->add_option("--hand_speed_max", params.hand_speed_max);
    cmd->add_option("--camera_jitter", params.camera_jitter);
    cmd->add_option("--blur_prob", params.blur_prob);
    cmd->add_option("--pixel_noise", params.pixel_noise);
    cmd->add_option("--num_events_min", params.num_events_min);
    cmd->add_option("--num_events_max", params.num_events_max);
    cmd->add_option("--min_event_gap", params.min_event_gap);
    cmd->add_option("--absent_idle_hand_prob", params.absent_idle_hand_prob);
    cmd->add_option("--synth_seed", params.seed, "Generator seed");
  }
};

PostprocessOptions post_options(const SpotConfig& cfg, const std::string& nms) {
  PostprocessOptions o = PostprocessOptions::from_config(cfg);
  if (nms == "hard") {
    o.nms = NmsKind::kHard;
  } else if (nms == "soft") {
    o.nms = NmsKind::kSoft;
  } else if (nms == "none") {
    o.nms = NmsKind::kNone;
  } else if (!nms.empty()) {
    throw CommandError("unknown --nms '" + nms + "' (expected none, hard or soft)");
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Frame-precise touch moment spotting");
  app.require_subcommand(1);
  SpotConfig cfg;
  std::string active = "touchspot";

  // synth-gen
  auto* gen = app.add_subcommand("synth-gen", "Generate synthetic sequences with exact touch frames");
  SynthArgs gen_args;
  gen_args.add(gen);
  int gen_videos = 10;
  std::string gen_out, gen_split;
  gen->add_option("--videos", gen_videos, "Number of sequences")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--split", gen_split, "Split tag stored in every annotation");

  // stats
  auto* stats = app.add_subcommand("stats", "Print dataset statistics");
  std::string stats_ann;
  stats->add_option("--annotations", stats_ann, "Annotation file or data directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  add_common(train, cfg);
  std::string train_data, train_out;
  train->add_option("--data", train_data, "Data directory")->required();
  train->add_option("--out", train_out, "Output directory")->required();

  // predict
  auto* predict = app.add_subcommand("predict", "Run sliding-window inference");
  std::string pred_ckpt, pred_data, pred_out, pred_scores, pred_nms;
  std::optional<bool> pred_tor, pred_snms;
  std::optional<double> pred_floor;
  predict->add_option("--checkpoint", pred_ckpt)->required();
  predict->add_option("--data", pred_data, "Data directory")->required();
  predict->add_option("--out", pred_out, "Detections file")->required();
  predict->add_option("--scores", pred_scores, "Per-frame score dump");
  predict->add_option("--use_tor", pred_tor, "Apply Gauss-TOR (default from checkpoint config)");
  predict->add_option("--use_snms", pred_snms, "Apply soft-NMS (default from checkpoint config)");
  predict->add_option("--nms", pred_nms, "none, hard or soft; overrides --use_snms");
  predict->add_option("--confidence_floor", pred_floor);

  // eval
  auto* eval = app.add_subcommand("eval", "Score detections against annotations");
  std::string eval_ann, eval_dets, eval_scores, eval_cfg_path;
  std::vector<int> eval_tols{0, 1, 2};
  bool eval_per_video = false;
  eval->add_option("--annotations", eval_ann, "Annotation file or data directory")->required();
  eval->add_option("--detections", eval_dets, "Detections file")->required();
  eval->add_option("--scores", eval_scores, "Score dump; adds rows re-derived from raw scores");
  eval->add_option("--config", eval_cfg_path, "Config for the re-derived rows (default: desk preset)");
  eval->add_option("--tolerances", eval_tols)->delimiter(',');
  eval->add_flag("--per_video", eval_per_video, "Average per-video APs instead of pooling");

  // plot
  auto* plot = app.add_subcommand("plot", "Render score / detection plots as SVG");
  std::string plot_ann, plot_scores, plot_dets, plot_out, plot_video, plot_size = "900x420";
  int plot_delta = 2;
  plot->add_option("--annotations", plot_ann, "Annotation file or data directory")->required();
  plot->add_option("--scores", plot_scores, "Score dump");
  plot->add_option("--detections", plot_dets, "Detections file");
  plot->add_option("--out", plot_out, "Output directory")->required();
  plot->add_option("--video", plot_video, "Only this video id");
  plot->add_option("--size", plot_size, "WIDTHxHEIGHT in pixels");
  plot->add_option("--delta", plot_delta, "Tolerance band half-width");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate ablation rows on synthetic data");
  add_common(ablate, cfg);
  SynthArgs abl_synth;
  abl_synth.add(ablate);
  std::string abl_axis, abl_out;
  double abl_scale = 1.0;
  int abl_train = 200, abl_test = 50;
  std::vector<std::uint64_t> abl_seeds{0};
  ablate->add_option("--axis", abl_axis, "components, clip_length or context")->required();
  ablate->add_option("--scale", abl_scale, "Clip length multiplier");
  ablate->add_option("--train_videos", abl_train);
  ablate->add_option("--test_videos", abl_test);
  ablate->add_option("--seeds", abl_seeds, "Training seeds averaged per row")->delimiter(',');
  ablate->add_option("--out", abl_out, "Also write the table here");

  try {
    for (int i = 1; i < argc; ++i) {
      if (app.get_subcommand_no_throw(argv[i])) {
        active = argv[i];
        break;
      }
    }
    cfg = initial_config(argc, argv);
    app.parse(argc, argv);

    if (*gen) {
      synth::validate_params(gen_args.params);
      const auto seqs = synth::generate_dataset(gen_videos, gen_args.params);
      save_video_dir(gen_out, synth::to_videos(seqs, gen_split));
      std::cout << "wrote " << seqs.size() << " sequences to " << gen_out << "\n";
    } else if (*stats) {
      const fs::path p = stats_ann;
      std::cout << format_stats_report(load_annotations(fs::is_directory(p) ? p / "annotations.json" : p));
    } else if (*train) {
      require_valid(cfg);
      const DataSplit split = split_train_val(load_video_dir(train_data), cfg);
      if (split.train.empty()) throw CommandError("no training videos in " + train_data);
      fs::create_directories(train_out);
      write_text(fs::path(train_out) / "config.cfg", to_config_text(cfg));
      std::ofstream log(fs::path(train_out) / "train_log.txt", std::ios::binary);
      TrainOptions opts;
      opts.checkpoint = fs::path(train_out) / "best.ckpt";
      opts.on_epoch = [&](const EpochLog& e) {
        log << format_epoch_log(e) << "\n" << std::flush;
        std::cout << format_epoch_log(e) << "\n" << std::flush;
      };
      const TrainResult r = train_model(cfg, split.train, split.val, opts);
      std::cout << "best epoch " << r.best_epoch << " val mAP " << r.best_val_map << "\n";
    } else if (*predict) {
      auto model = load_checkpoint(pred_ckpt);
      SpotConfig pc = model->config();
      if (pred_tor) pc.use_tor = *pred_tor;
      if (pred_snms) pc.use_snms = *pred_snms;
      if (pred_floor) pc.confidence_floor = *pred_floor;
      const PostprocessOptions opt = post_options(pc, pred_nms);
      const auto videos = load_video_dir(pred_data);
      for (const auto& v : videos) {
        if (v.frames.height != model->frame_size() || v.frames.width != model->frame_size()) {
          throw CommandError("video " + v.annotation.video_id + " frame size does not match checkpoint (" +
                             std::to_string(model->frame_size()) + ")");
        }
      }
      const ScoreMap scores = predict_scores(*model, videos, opt);
      save_detections(pred_out, detections_from_scores(scores, opt));
      if (!pred_scores.empty()) save_scores(pred_scores, scores);
    } else if (*eval) {
      const fs::path p = eval_ann;
      const auto anns = load_annotations(fs::is_directory(p) ? p / "annotations.json" : p);
      std::vector<std::pair<std::string, MapResult>> rows;
      rows.emplace_back("detections",
                        map_over_tolerances(pair_with_ground_truth(load_detections(eval_dets), anns), eval_tols,
                                            eval_per_video));
      if (!eval_scores.empty()) {
        const SpotConfig ec = eval_cfg_path.empty() ? SpotConfig::desk_preset()
                                                    : load_config_file(eval_cfg_path, SpotConfig::desk_preset());
        const ScoreMap scores = load_scores(eval_scores);
        auto row = [&](const std::string& name, bool tor, NmsKind nms) {
          PostprocessOptions o = PostprocessOptions::from_config(ec);
          o.use_tor = tor;
          o.nms = nms;
          rows.emplace_back(name, map_over_tolerances(
                                      pair_with_ground_truth(detections_from_scores(scores, o), anns), eval_tols,
                                      eval_per_video));
        };
        row("Without NMS", false, NmsKind::kNone);
        row("Without NMS + TOR", true, NmsKind::kNone);
        row("With NMS", false, NmsKind::kHard);
        row("With SNMS", false, NmsKind::kSoft);
        row("With TOR + SNMS", true, NmsKind::kSoft);
      }
      std::cout << format_map_table(rows);
    } else if (*plot) {
      PlotOptions po;
      po.delta = plot_delta;
      if (std::sscanf(plot_size.c_str(), "%dx%d", &po.width, &po.height) != 2) {
        throw CommandError("--size must look like 900x420");
      }
      const fs::path p = plot_ann;
      const auto anns = load_annotations(fs::is_directory(p) ? p / "annotations.json" : p);
      const ScoreMap scores = plot_scores.empty() ? ScoreMap{} : load_scores(plot_scores);
      const DetectionMap dets = plot_dets.empty() ? DetectionMap{} : load_detections(plot_dets);
      int written = 0;
      for (const auto& a : anns) {
        if (!plot_video.empty() && a.video_id != plot_video) continue;
        const auto s = scores.find(a.video_id);
        const auto d = dets.find(a.video_id);
        const std::vector<EventDetection> none;
        write_text(fs::path(plot_out) / (a.video_id + ".svg"),
                   render_plot_svg(a, s == scores.end() ? nullptr : &s->second, d == dets.end() ? none : d->second,
                                   po));
        ++written;
      }
      if (written == 0) throw CommandError("no video with id '" + plot_video + "'");
      std::cout << "wrote " << written << " plots to " << plot_out << "\n";
    } else if (*ablate) {
      require_valid(cfg);
      const AblationAxis axis = ablation_axis_from_string(abl_axis);
      const auto variants = ablation_variants(axis, cfg, abl_scale);
      synth::SynthParams sp = abl_synth.params;
      for (const auto& v : variants) sp.num_frames = std::max(sp.num_frames, 2 * v.cfg.clip_length);
      const SyntheticBenchmark bench = make_benchmark(abl_train, abl_test, sp);
      const auto rows = run_ablation(variants, bench, abl_seeds, [](const std::string& m) {
        std::cerr << m << "\n";
      });
      std::vector<std::pair<std::string, MapResult>> table;
      for (const auto& r : rows) table.emplace_back(r.name, r.mean);
      const std::string text = format_map_table(table);
      std::cout << text;
      if (!abl_out.empty()) write_text(abl_out, text);
    }
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cout.flush();
    std::fprintf(stderr, "error: %s: usage: %s\n", active.c_str(), one_line(e.what()).c_str());
    return 2;
  } catch (const std::exception& e) {
    std::cout.flush();
    std::fprintf(stderr, "error: %s: %s\n", active.c_str(), one_line(e.what()).c_str());
    return 1;
  }
  return 0;
}
