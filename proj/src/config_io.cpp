#include "touchspot/config_io.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace touchspot {

namespace {

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::string double_text(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void add_config_options(CLI::App& app, SpotConfig& cfg) {
  app.add_option("--clip_length", cfg.clip_length, "Clip length L in frames");
  app.add_option("--displacement_window", cfg.displacement_window, "Displacement window half-width w");
  app.add_option_function<double>(
      "--soft_label_sigma", [&cfg](const double& v) { cfg.soft_label_sigma = v; }, "Gaussian soft-label sigma");
  app.add_option("--use_soft_labels", cfg.use_soft_labels, "Gaussian soft labels (false: hard window labels)");
  app.add_option_function<std::string>(
      "--loss_kind", [&cfg](const std::string& v) { cfg.loss_kind = loss_kind_from_string(v); },
      "focal or weighted_ce");
  app.add_option("--focal_alpha", cfg.focal_alpha);
  app.add_option("--focal_gamma", cfg.focal_gamma);
  app.add_option("--ce_weight", cfg.ce_weight);
  app.add_option("--lambda_g", cfg.lambda_g, "Grasp loss weight");
  app.add_option("--patch_scale", cfg.patch_scale, "Hand box enlargement factor");
  app.add_option("--patch_size", cfg.patch_size, "Hand patch side in pixels");
  app.add_option("--feature_dim", cfg.feature_dim, "Feature dimension C");
  app.add_option("--num_heads", cfg.num_heads);
  app.add_option("--ffn_expansion", cfg.ffn_expansion);
  app.add_option("--backbone_downscale", cfg.backbone_downscale);
  app.add_option("--backbone_width", cfg.backbone_width);
  app.add_option("--temporal_scales", cfg.temporal_scales);
  app.add_option("--grasp_hidden", cfg.grasp_hidden);
  app.add_option("--tolerances", cfg.tolerances, "Evaluation tolerances in frames")->delimiter(',');
  app.add_option_function<double>(
      "--tor_sigma", [&cfg](const double& v) { cfg.tor_sigma = v; }, "Gauss-TOR attenuation sigma");
  app.add_option_function<int>(
      "--nms_window", [&cfg](const int& v) { cfg.nms_window = v; }, "NMS / soft-NMS window");
  app.add_option("--snms_sigma", cfg.snms_sigma);
  app.add_option("--confidence_floor", cfg.confidence_floor);
  app.add_option("--use_tor", cfg.use_tor);
  app.add_option("--use_snms", cfg.use_snms);
  app.add_option("--event_bias", cfg.event_bias, "Fraction of sampled clips forced to contain an event");
  app.add_option("--batch_size", cfg.batch_size);
  app.add_option("--clips_per_epoch", cfg.clips_per_epoch);
  app.add_option("--epochs", cfg.epochs);
  app.add_option("--learning_rate", cfg.learning_rate);
  app.add_option("--weight_decay", cfg.weight_decay);
  app.add_option("--warmup_epochs", cfg.warmup_epochs);
  app.add_option("--val_fraction", cfg.val_fraction);
  app.add_option("--seed", cfg.seed);
}

SpotConfig parse_config_text(const std::string& text, const SpotConfig& base) {
  SpotConfig cfg = base;
  CLI::App app("config");
  add_config_options(app, cfg);
  app.allow_config_extras(CLI::config_extras_mode::error);
  std::istringstream in(text);
  try {
    app.parse_from_stream(in);
  } catch (const CLI::ParseError& e) {
    throw std::runtime_error(std::string("config parse error: ") + e.what());
  }
  return cfg;
}

SpotConfig load_config_file(const std::filesystem::path& path, const SpotConfig& base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), base);
}

std::string to_config_text(const SpotConfig& cfg) {
  std::ostringstream os;
  os << "clip_length = " << cfg.clip_length << "\n";
  os << "displacement_window = " << cfg.displacement_window << "\n";
  if (cfg.soft_label_sigma) os << "soft_label_sigma = " << double_text(*cfg.soft_label_sigma) << "\n";
  os << "use_soft_labels = " << bool_text(cfg.use_soft_labels) << "\n";
  os << "loss_kind = " << to_string(cfg.loss_kind) << "\n";
  os << "focal_alpha = " << double_text(cfg.focal_alpha) << "\n";
  os << "focal_gamma = " << double_text(cfg.focal_gamma) << "\n";
  os << "ce_weight = " << double_text(cfg.ce_weight) << "\n";
  os << "lambda_g = " << double_text(cfg.lambda_g) << "\n";
  os << "patch_scale = " << double_text(cfg.patch_scale) << "\n";
  os << "patch_size = " << cfg.patch_size << "\n";
  os << "feature_dim = " << cfg.feature_dim << "\n";
  os << "num_heads = " << cfg.num_heads << "\n";
  os << "ffn_expansion = " << cfg.ffn_expansion << "\n";
  os << "backbone_downscale = " << cfg.backbone_downscale << "\n";
  os << "backbone_width = " << cfg.backbone_width << "\n";
  os << "temporal_scales = " << cfg.temporal_scales << "\n";
  os << "grasp_hidden = " << cfg.grasp_hidden << "\n";
  os << "tolerances = [";
  for (size_t i = 0; i < cfg.tolerances.size(); ++i) os << (i ? ", " : "") << cfg.tolerances[i];
  os << "]\n";
  if (cfg.tor_sigma) os << "tor_sigma = " << double_text(*cfg.tor_sigma) << "\n";
  if (cfg.nms_window) os << "nms_window = " << *cfg.nms_window << "\n";
  os << "snms_sigma = " << double_text(cfg.snms_sigma) << "\n";
  os << "confidence_floor = " << double_text(cfg.confidence_floor) << "\n";
  os << "use_tor = " << bool_text(cfg.use_tor) << "\n";
  os << "use_snms = " << bool_text(cfg.use_snms) << "\n";
  os << "event_bias = " << double_text(cfg.event_bias) << "\n";
  os << "batch_size = " << cfg.batch_size << "\n";
  os << "clips_per_epoch = " << cfg.clips_per_epoch << "\n";
  os << "epochs = " << cfg.epochs << "\n";
  os << "learning_rate = " << double_text(cfg.learning_rate) << "\n";
  os << "weight_decay = " << double_text(cfg.weight_decay) << "\n";
  os << "warmup_epochs = " << cfg.warmup_epochs << "\n";
  os << "val_fraction = " << double_text(cfg.val_fraction) << "\n";
  os << "seed = " << cfg.seed << "\n";
  return os.str();
}

}  // namespace touchspot
