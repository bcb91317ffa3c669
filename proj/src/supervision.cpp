#include "touchspot/supervision.hpp"

#include <cmath>
#include <stdexcept>

namespace touchspot {

Tensor build_soft_labels(const std::vector<int>& events, int length, int window, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("build_soft_labels: sigma must be > 0");
  Tensor out({length, 2});
  for (int l = 0; l < length; ++l) {
    double g = 0;
    for (int t : events) {
      const int dist = std::abs(l - t);
      if (dist > window) continue;
      g = std::max(g, std::exp(-static_cast<double>(dist) * dist / (2 * sigma * sigma)));
    }
    out.data[2 * l + kTouchClass] = g;
    out.data[2 * l + kBackgroundClass] = 1.0 - g;
  }
  return out;
}

Tensor build_hard_labels(const std::vector<int>& events, int length, int window) {
  Tensor out({length, 2});
  for (int l = 0; l < length; ++l) {
    bool inside = false;
    for (int t : events) inside = inside || std::abs(l - t) <= window;
    out.data[2 * l + kTouchClass] = inside ? 1.0 : 0.0;
    out.data[2 * l + kBackgroundClass] = inside ? 0.0 : 1.0;
  }
  return out;
}

DisplacementTargets build_displacement_targets(const std::vector<int>& events, int length, int window) {
  DisplacementTargets out{std::vector<double>(length, 0.0), std::vector<bool>(length, false)};
  for (int l = 0; l < length; ++l) {
    int best = -1;
    for (int t : events) {
      const int dist = std::abs(t - l);
      if (dist > window) continue;
      // Events are scanned in increasing order, so a strict comparison keeps the earlier one on ties.
      if (best < 0 || dist < std::abs(best - l)) best = t;
    }
    if (best >= 0) {
      out.y_d[l] = best - l;
      out.mask[l] = true;
    }
  }
  return out;
}

SupervisionTargets build_targets(const ClipSample& clip, const SpotConfig& cfg) {
  const int len = clip.length();
  const std::vector<int> events = clip.event_frames();
  SupervisionTargets t;
  t.y_c_soft = cfg.use_soft_labels
                   ? build_soft_labels(events, len, cfg.displacement_window, cfg.effective_soft_label_sigma())
                   : build_hard_labels(events, len, cfg.displacement_window);
  auto disp = build_displacement_targets(events, len, cfg.displacement_window);
  t.y_d = std::move(disp.y_d);
  t.d_mask = std::move(disp.mask);
  t.y_g.resize(len);
  t.g_mask.resize(len);
  for (int l = 0; l < len; ++l) {
    for (int h = 0; h < 2; ++h) {
      const auto& label = clip.grasp_labels()[l][h];
      t.y_g[l][h] = label.value_or(-1);
      t.g_mask[l][h] = label.has_value();
    }
  }
  return t;
}

ClassificationLossSpec ClassificationLossSpec::from_config(const SpotConfig& cfg) {
  return {cfg.loss_kind, cfg.focal_alpha, cfg.focal_gamma, cfg.ce_weight};
}

LossWithGrad classification_loss(const Tensor& probs, const Tensor& targets, const ClassificationLossSpec& spec) {
  if (probs.shape != targets.shape || probs.cols() != 2) {
    throw std::invalid_argument("classification_loss: expected matching [M, 2] inputs, got " +
                                shape_string(probs.shape) + " and " + shape_string(targets.shape));
  }
  const size_t m = probs.rows();
  LossWithGrad out{0.0, Tensor(probs.shape)};
  if (m == 0) return out;
  for (size_t i = 0; i < m; ++i) {
    for (int c = 0; c < 2; ++c) {
      const double y = targets.data[2 * i + c];
      if (y == 0.0) continue;
      const double p = probs.data[2 * i + c];
      const bool clamped = p < kLogEpsilon;
      const double logp = std::log(clamped ? kLogEpsilon : p);
      const double dlogp = clamped ? 0.0 : 1.0 / p;
      double weight;
      double term;
      double dterm;
      if (spec.kind == LossKind::kFocal) {
        weight = c == kTouchClass ? spec.alpha : 1.0 - spec.alpha;
        const double q = 1.0 - p;
        const double mod = spec.gamma == 0.0 ? 1.0 : std::pow(q, spec.gamma);
        const double dmod = spec.gamma == 0.0 ? 0.0 : -spec.gamma * std::pow(q, spec.gamma - 1.0);
        term = mod * logp;
        dterm = dmod * logp + mod * dlogp;
      } else {
        weight = c == kTouchClass ? spec.ce_weight : 1.0;
        term = logp;
        dterm = dlogp;
      }
      out.value -= weight * y * term;
      out.grad.data[2 * i + c] = -weight * y * dterm / static_cast<double>(m);
    }
  }
  out.value /= static_cast<double>(m);
  return out;
}

LossWithGrad displacement_loss(const Tensor& pred, const std::vector<double>& target, const std::vector<bool>& mask) {
  const size_t m = pred.size();
  if (target.size() != m || mask.size() != m) throw std::invalid_argument("displacement_loss: length mismatch");
  LossWithGrad out{0.0, Tensor(pred.shape)};
  size_t count = 0;
  for (size_t i = 0; i < m; ++i) count += mask[i] ? 1 : 0;
  if (count == 0) return out;
  for (size_t i = 0; i < m; ++i) {
    if (!mask[i]) continue;
    const double diff = pred.data[i] - target[i];
    out.value += diff * diff;
    out.grad.data[i] = 2.0 * diff / static_cast<double>(count);
  }
  out.value /= static_cast<double>(count);
  return out;
}

LossWithGrad grasp_loss(const Tensor& logits, const std::vector<std::array<int, 2>>& targets,
                        const std::vector<std::array<bool, 2>>& mask) {
  constexpr int K = kNumGraspClasses;
  const size_t m = targets.size();
  if (logits.size() != m * 2 * K || mask.size() != m) throw std::invalid_argument("grasp_loss: shape mismatch");
  LossWithGrad out{0.0, Tensor(logits.shape)};
  size_t count = 0;
  for (size_t i = 0; i < m; ++i) count += (mask[i][0] ? 1 : 0) + (mask[i][1] ? 1 : 0);
  if (count == 0) return out;
  for (size_t i = 0; i < m; ++i) {
    for (int h = 0; h < 2; ++h) {
      if (!mask[i][h]) continue;
      const int y = targets[i][h];
      if (y < 0 || y >= K) throw std::invalid_argument("grasp_loss: target out of range");
      const double* z = logits.data.data() + (2 * i + h) * K;
      double mx = z[0];
      for (int k = 1; k < K; ++k) mx = std::max(mx, z[k]);
      double sum = 0;
      for (int k = 0; k < K; ++k) sum += std::exp(z[k] - mx);
      const double lse = mx + std::log(sum);
      out.value += lse - z[y];
      double* g = out.grad.data.data() + (2 * i + h) * K;
      for (int k = 0; k < K; ++k) {
        g[k] = (std::exp(z[k] - lse) - (k == y ? 1.0 : 0.0)) / static_cast<double>(count);
      }
    }
  }
  out.value /= static_cast<double>(count);
  return out;
}

double total_loss(const LossParts& parts, double lambda_g) {
  if (!std::isfinite(parts.classification)) throw std::domain_error("total_loss: classification loss is not finite");
  if (!std::isfinite(parts.displacement)) throw std::domain_error("total_loss: displacement loss is not finite");
  if (!std::isfinite(parts.grasp)) throw std::domain_error("total_loss: grasp loss is not finite");
  return parts.classification + parts.displacement + lambda_g * parts.grasp;
}

}  // namespace touchspot
