#include "touchspot/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace touchspot {

const char* to_string(HandSide side) { return side == HandSide::kLeft ? "left" : "right"; }

HandBox::HandBox(HandSide side) : side_(side) {}

HandBox::HandBox(double x1, double y1, double x2, double y2, HandSide side)
    : x1_(x1), y1_(y1), x2_(x2), y2_(y2), side_(side), present_(true) {
  if (!(x1 < x2) || !(y1 < y2)) {
    std::ostringstream os;
    os << "HandBox requires x1 < x2 and y1 < y2, got (" << x1 << ", " << y1 << ", " << x2 << ", " << y2 << ")";
    throw std::invalid_argument(os.str());
  }
}

HandBox HandBox::clamped(double frame_width, double frame_height) const {
  if (!present_) return *this;
  const double cx1 = std::clamp(x1_, 0.0, frame_width);
  const double cy1 = std::clamp(y1_, 0.0, frame_height);
  const double cx2 = std::clamp(x2_, 0.0, frame_width);
  const double cy2 = std::clamp(y2_, 0.0, frame_height);
  if (!(cx1 < cx2) || !(cy1 < cy2)) return HandBox(side_);
  return HandBox(cx1, cy1, cx2, cy2, side_);
}

ClipSample::ClipSample(int expected_length, std::vector<Image> frames, std::vector<HandPair> hand_boxes,
                       std::vector<TouchEvent> events, std::vector<GraspPair> grasp_labels)
    : frames_(std::move(frames)),
      hand_boxes_(std::move(hand_boxes)),
      events_(std::move(events)),
      grasp_labels_(std::move(grasp_labels)) {
  const int n = static_cast<int>(frames_.size());
  if (n != expected_length) {
    throw std::invalid_argument("ClipSample: expected " + std::to_string(expected_length) + " frames, got " +
                                std::to_string(n));
  }
  if (static_cast<int>(hand_boxes_.size()) != n || static_cast<int>(grasp_labels_.size()) != n) {
    throw std::invalid_argument("ClipSample: per-frame annotation length mismatch");
  }
  for (size_t i = 0; i < events_.size(); ++i) {
    const int f = events_[i].frame;
    if (f < 0 || f >= n) throw std::invalid_argument("ClipSample: event frame " + std::to_string(f) + " outside clip");
    if (i > 0 && f <= events_[i - 1].frame) throw std::invalid_argument("ClipSample: events not strictly increasing");
  }
  for (int t = 0; t < n; ++t) {
    for (int h = 0; h < 2; ++h) {
      const auto& label = grasp_labels_[t][h];
      const HandBox& box = hand_boxes_[t][static_cast<HandSide>(h)];
      if (label && !box.present()) {
        throw std::invalid_argument("ClipSample: grasp label on absent hand at frame " + std::to_string(t));
      }
      if (label && (*label < 0 || *label >= kNumGraspClasses)) {
        throw std::invalid_argument("ClipSample: grasp label out of range at frame " + std::to_string(t));
      }
    }
  }
}

std::vector<int> ClipSample::event_frames() const {
  std::vector<int> out;
  out.reserve(events_.size());
  for (const auto& e : events_) out.push_back(e.frame);
  return out;
}

EventDetection::EventDetection(double frame, double confidence) : frame_(frame), confidence_(confidence) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw std::invalid_argument("EventDetection confidence outside [0,1]: " + std::to_string(confidence));
  }
  if (!(frame >= 0.0)) throw std::invalid_argument("EventDetection frame is negative: " + std::to_string(frame));
}

const char* to_string(LossKind kind) { return kind == LossKind::kFocal ? "focal" : "weighted_ce"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "focal") return LossKind::kFocal;
  if (s == "weighted_ce") return LossKind::kWeightedCe;
  throw std::invalid_argument("unknown loss_kind '" + s + "' (expected focal or weighted_ce)");
}

double SpotConfig::effective_soft_label_sigma() const {
  return soft_label_sigma.value_or(std::max(displacement_window / 2.0, 0.5));
}

double SpotConfig::effective_tor_sigma() const {
  return tor_sigma.value_or(std::max(static_cast<double>(displacement_window), 0.5));
}

int SpotConfig::effective_nms_window() const { return nms_window.value_or(2 * displacement_window + 1); }

SpotConfig SpotConfig::desk_preset() {
  SpotConfig cfg;
  cfg.clip_length = 16;
  cfg.displacement_window = 2;
  cfg.patch_size = 16;
  cfg.feature_dim = 32;
  cfg.backbone_width = 16;
  cfg.grasp_hidden = 32;
  cfg.batch_size = 8;
  cfg.epochs = 10;
  cfg.clips_per_epoch = 480;
  cfg.learning_rate = 2e-3;
  cfg.warmup_epochs = 1;
  return cfg;
}

std::vector<std::string> validate_config(const SpotConfig& cfg) {
  std::vector<std::string> v;
  const int w = cfg.displacement_window;
  if (cfg.clip_length <= 0) v.emplace_back("clip_length must be > 0");
  if (w < 0) v.emplace_back("displacement_window must be >= 0");
  if (cfg.clip_length < 2 * w + 1) v.emplace_back("L must be ≥ 2w+1");
  if (cfg.soft_label_sigma && !(*cfg.soft_label_sigma > 0)) v.emplace_back("soft_label_sigma must be > 0");
  if (cfg.tor_sigma && !(*cfg.tor_sigma > 0)) v.emplace_back("tor_sigma must be > 0");
  if (!(cfg.snms_sigma > 0)) v.emplace_back("snms_sigma must be > 0");
  if (cfg.nms_window && *cfg.nms_window < 1) v.emplace_back("nms_window must be >= 1");
  if (!(cfg.focal_alpha >= 0 && cfg.focal_alpha <= 1)) v.emplace_back("focal_alpha must lie in [0,1]");
  if (!(cfg.focal_gamma >= 0)) v.emplace_back("focal_gamma must be >= 0");
  if (!(cfg.ce_weight > 0)) v.emplace_back("ce_weight must be > 0");
  if (!(cfg.lambda_g >= 0)) v.emplace_back("lambda_g must be >= 0");
  if (!(cfg.patch_scale >= 1.0)) v.emplace_back("patch_scale must be >= 1");
  if (cfg.patch_size <= 0) v.emplace_back("patch_size must be > 0");
  if (cfg.feature_dim <= 0) v.emplace_back("feature_dim must be > 0");
  if (cfg.feature_dim % 4 != 0) v.emplace_back("feature_dim must be divisible by 4");
  if (cfg.num_heads <= 0 || cfg.feature_dim % std::max(cfg.num_heads, 1) != 0) {
    v.emplace_back("feature_dim must divide evenly across num_heads");
  }
  if (cfg.ffn_expansion <= 0) v.emplace_back("ffn_expansion must be > 0");
  if (cfg.backbone_downscale < 1 || (cfg.backbone_downscale & (cfg.backbone_downscale - 1)) != 0) {
    v.emplace_back("backbone_downscale must be a power of two");
  } else if (cfg.patch_size % cfg.backbone_downscale != 0) {
    v.emplace_back("patch_size must be divisible by backbone_downscale");
  }
  if (cfg.backbone_width <= 0) v.emplace_back("backbone_width must be > 0");
  if (cfg.temporal_scales < 0) v.emplace_back("temporal_scales must be >= 0");
  if (cfg.temporal_scales >= 0 && cfg.temporal_scales < 20 && cfg.clip_length < (1 << cfg.temporal_scales)) {
    v.emplace_back("L must be ≥ 2^temporal_scales");
  }
  if (cfg.grasp_hidden <= 0) v.emplace_back("grasp_hidden must be > 0");
  if (cfg.tolerances.empty()) v.emplace_back("tolerances must be non-empty");
  for (int d : cfg.tolerances) {
    if (d < 0) {
      v.emplace_back("tolerances must be >= 0");
      break;
    }
  }
  if (!(cfg.confidence_floor >= 0 && cfg.confidence_floor < 1)) v.emplace_back("confidence_floor must lie in [0,1)");
  if (!(cfg.event_bias >= 0 && cfg.event_bias <= 1)) v.emplace_back("event_bias must lie in [0,1]");
  if (cfg.batch_size <= 0) v.emplace_back("batch_size must be > 0");
  if (cfg.clips_per_epoch <= 0) v.emplace_back("clips_per_epoch must be > 0");
  if (cfg.epochs <= 0) v.emplace_back("epochs must be > 0");
  if (!(cfg.learning_rate > 0)) v.emplace_back("learning_rate must be > 0");
  if (!(cfg.weight_decay >= 0)) v.emplace_back("weight_decay must be >= 0");
  if (cfg.warmup_epochs < 0) v.emplace_back("warmup_epochs must be >= 0");
  if (!(cfg.val_fraction >= 0 && cfg.val_fraction < 1)) v.emplace_back("val_fraction must lie in [0,1)");
  return v;
}

// xoshiro256** seeded through splitmix64.
namespace {
std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) word = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw std::invalid_argument("Rng::uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo) + 1;
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return static_cast<int>(lo + static_cast<std::int64_t>(r % span));
}

double Rng::normal() {
  if (spare_normal_) {
    const double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(theta);
  return r * std::cos(theta);
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed ^ (0xD1B54A32D192ED03ull * (stream + 1));
  splitmix64(x);
  return splitmix64(x);
}

}  // namespace touchspot
