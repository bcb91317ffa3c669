#pragma once

#include <optional>
#include <vector>

#include "touchspot/core.hpp"
#include "touchspot/tensor.hpp"

namespace touchspot {

// Column order of every per-frame class distribution.
inline constexpr int kBackgroundClass = 0;
inline constexpr int kTouchClass = 1;

struct SupervisionTargets {
  Tensor y_c_soft;                // [L, 2]
  std::vector<double> y_d;        // [L]
  std::vector<bool> d_mask;       // [L]
  std::vector<std::array<int, 2>> y_g;   // [L][hand], -1 where absent
  std::vector<std::array<bool, 2>> g_mask;
};

// Touch target g(l) = max over events of exp(-(l - t)^2 / (2 sigma^2)) for |l - t| <= w, else 0.
Tensor build_soft_labels(const std::vector<int>& events, int length, int window, double sigma);
// Touch target 1 inside every event window, 0 elsewhere.
Tensor build_hard_labels(const std::vector<int>& events, int length, int window);

struct DisplacementTargets {
  std::vector<double> y_d;
  std::vector<bool> mask;
};

// y_d[l] = t - l for the nearest event t within w of l; ties go to the earlier event.
DisplacementTargets build_displacement_targets(const std::vector<int>& events, int length, int window);

SupervisionTargets build_targets(const ClipSample& clip, const SpotConfig& cfg);

struct ClassificationLossSpec {
  LossKind kind = LossKind::kFocal;
  double alpha = 0.9;   // focal weight of the touch class; background gets 1 - alpha
  double gamma = 2.0;
  double ce_weight = 5.0;
  static ClassificationLossSpec from_config(const SpotConfig& cfg);
};

inline constexpr double kLogEpsilon = 1e-8;

// Loss value together with its gradient w.r.t. the loss input.
struct LossWithGrad {
  double value = 0;
  Tensor grad;
};

// Mean over frames. probs and targets are [M, 2] distributions.
LossWithGrad classification_loss(const Tensor& probs, const Tensor& targets, const ClassificationLossSpec& spec);

// Mean squared error over masked frames, 0 when the mask is empty. pred is [M] or [M, 1].
LossWithGrad displacement_loss(const Tensor& pred, const std::vector<double>& target, const std::vector<bool>& mask);

// Cross-entropy over unmasked (frame, hand) entries. logits [M, 2 * kNumGraspClasses]
// laid out as (left 0..8, right 0..8); targets/mask are per frame and hand.
LossWithGrad grasp_loss(const Tensor& logits, const std::vector<std::array<int, 2>>& targets,
                        const std::vector<std::array<bool, 2>>& mask);

struct LossParts {
  double classification = 0;
  double displacement = 0;
  double grasp = 0;
};

// L_c + L_d + lambda_g * L_g. Throws std::domain_error naming any non-finite part.
double total_loss(const LossParts& parts, double lambda_g);

}  // namespace touchspot
