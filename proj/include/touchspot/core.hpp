#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace touchspot {

// Number of grasp categories predicted per hand.
inline constexpr int kNumGraspClasses = 9;

enum class HandSide { kLeft = 0, kRight = 1 };

const char* to_string(HandSide side);

// Axis-aligned hand bounding box in image pixel coordinates.
class HandBox {
 public:
  // An absent hand. Coordinates are zero and carry no meaning.
  explicit HandBox(HandSide side = HandSide::kLeft);
  // A present hand; throws std::invalid_argument unless x1 < x2 and y1 < y2.
  HandBox(double x1, double y1, double x2, double y2, HandSide side);

  static HandBox absent(HandSide side) { return HandBox(side); }

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  HandSide side() const { return side_; }
  bool present() const { return present_; }

  // Clamps to [0, width] x [0, height]. A box that collapses becomes absent.
  HandBox clamped(double frame_width, double frame_height) const;

  bool operator==(const HandBox&) const = default;

 private:
  double x1_ = 0, y1_ = 0, x2_ = 0, y2_ = 0;
  HandSide side_ = HandSide::kLeft;
  bool present_ = false;
};

struct HandPair {
  HandBox left{HandSide::kLeft};
  HandBox right{HandSide::kRight};

  const HandBox& operator[](HandSide s) const { return s == HandSide::kLeft ? left : right; }
  bool operator==(const HandPair&) const = default;
};

// Optional grasp category per hand, indices in [0, kNumGraspClasses).
using GraspPair = std::array<std::optional<int>, 2>;

// A ground-truth touch moment. The only event class is "touch".
struct TouchEvent {
  int frame = 0;
  bool operator==(const TouchEvent&) const = default;
};

// Dense float image, row-major height x width x channels, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c = 3) : height(h), width(w), channels(c), pixels(static_cast<size_t>(h) * w * c, 0.0f) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * channels + c]; }
  bool operator==(const Image&) const = default;
};

// Fixed-length training window. Event frames and per-frame annotations are clip-relative.
class ClipSample {
 public:
  // Throws std::invalid_argument when any invariant is violated.
  ClipSample(int expected_length, std::vector<Image> frames, std::vector<HandPair> hand_boxes,
             std::vector<TouchEvent> events, std::vector<GraspPair> grasp_labels);

  int length() const { return static_cast<int>(frames_.size()); }
  const std::vector<Image>& frames() const { return frames_; }
  const std::vector<HandPair>& hand_boxes() const { return hand_boxes_; }
  const std::vector<TouchEvent>& events() const { return events_; }
  const std::vector<GraspPair>& grasp_labels() const { return grasp_labels_; }
  std::vector<int> event_frames() const;

  bool operator==(const ClipSample&) const = default;

 private:
  std::vector<Image> frames_;
  std::vector<HandPair> hand_boxes_;
  std::vector<TouchEvent> events_;
  std::vector<GraspPair> grasp_labels_;
};

// A predicted (or scored) touch event. The frame may be fractional after refinement.
class EventDetection {
 public:
  // Throws std::invalid_argument for confidence outside [0,1] or a negative frame.
  EventDetection(double frame, double confidence);

  double frame() const { return frame_; }
  double confidence() const { return confidence_; }
  EventDetection with_confidence(double c) const { return EventDetection(frame_, c); }

  bool operator==(const EventDetection&) const = default;

 private:
  double frame_;
  double confidence_;
};

enum class LossKind { kFocal, kWeightedCe };

const char* to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

// Every hyperparameter of the pipeline. Defaults follow the reference setup;
// desk-scale runs override the training-size fields.
struct SpotConfig {
  // Temporal supervision.
  int clip_length = 40;
  int displacement_window = 4;
  std::optional<double> soft_label_sigma;  // unset: max(w / 2, 0.5)
  bool use_soft_labels = true;

  // Classification loss.
  LossKind loss_kind = LossKind::kFocal;
  double focal_alpha = 0.9;
  double focal_gamma = 2.0;
  double ce_weight = 5.0;
  double lambda_g = 0.2;

  // Hand patches.
  double patch_scale = 1.2;
  int patch_size = 32;

  // Model.
  int feature_dim = 768;
  int num_heads = 4;
  int ffn_expansion = 2;
  int backbone_downscale = 8;
  int backbone_width = 16;
  int temporal_scales = 2;
  int grasp_hidden = 64;

  // Post-processing and evaluation.
  std::vector<int> tolerances{0, 1, 2};
  std::optional<double> tor_sigma;  // unset: max(w, 0.5)
  std::optional<int> nms_window;    // unset: 2w + 1
  double snms_sigma = 1.0;
  double confidence_floor = 0.01;
  bool use_tor = true;
  bool use_snms = true;

  // Sampling and optimisation.
  double event_bias = 0.75;
  int batch_size = 6;
  int clips_per_epoch = 5000;
  int epochs = 50;
  double learning_rate = 4e-4;
  double weight_decay = 0.01;
  int warmup_epochs = 3;
  double val_fraction = 0.1;

  std::uint64_t seed = 0;

  double effective_soft_label_sigma() const;
  double effective_tor_sigma() const;
  int effective_nms_window() const;

  // The desk-scale preset: L=16, batch 8, 10 epochs, tiny backbone.
  static SpotConfig desk_preset();
};

// Returns every invariant violation; empty iff the config is valid.
std::vector<std::string> validate_config(const SpotConfig& cfg);

// Deterministic random source. Bit-identical streams for a given seed on every
// platform: the generator and both distributions are implemented here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  // Seed for an independent child stream, e.g. one per video.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t state_[4];
  std::optional<double> spare_normal_;
};

}  // namespace touchspot
