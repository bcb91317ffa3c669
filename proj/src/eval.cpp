#include "touchspot/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace touchspot {

int MatchResult::true_positives() const {
  return static_cast<int>(std::count(prediction_tp.begin(), prediction_tp.end(), true));
}

int round_frame(double frame) { return static_cast<int>(std::ceil(frame - 0.5)); }

namespace {

// Prediction indices in processing order.
std::vector<size_t> confidence_order(const std::vector<EventDetection>& preds) {
  std::vector<size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (preds[a].confidence() != preds[b].confidence()) return preds[a].confidence() > preds[b].confidence();
    return preds[a].frame() < preds[b].frame();
  });
  return order;
}

}  // namespace

MatchResult match_predictions(const std::vector<EventDetection>& preds, const std::vector<TouchEvent>& gts,
                              int delta) {
  if (delta < 0) throw std::invalid_argument("match_predictions: delta must be >= 0");
  MatchResult r{std::vector<bool>(preds.size(), false), std::vector<bool>(gts.size(), false)};
  for (size_t p : confidence_order(preds)) {
    const int f = round_frame(preds[p].frame());
    int best = -1;
    int best_dist = 0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (r.ground_truth_matched[g]) continue;
      const int dist = std::abs(gts[g].frame - f);
      if (dist > delta) continue;
      if (best < 0 || dist < best_dist || (dist == best_dist && gts[g].frame < gts[best].frame)) {
        best = static_cast<int>(g);
        best_dist = dist;
      }
    }
    if (best >= 0) {
      r.ground_truth_matched[best] = true;
      r.prediction_tp[p] = true;
    }
  }
  return r;
}

double average_precision(const std::vector<VideoPredictions>& videos, int delta) {
  struct Scored {
    double confidence;
    double frame;
    size_t video;
    bool tp;
  };
  std::vector<Scored> all;
  size_t total_gt = 0;
  for (size_t v = 0; v < videos.size(); ++v) {
    const auto& vp = videos[v];
    total_gt += vp.ground_truth.size();
    const MatchResult m = match_predictions(vp.predictions, vp.ground_truth, delta);
    for (size_t i = 0; i < vp.predictions.size(); ++i) {
      all.push_back({vp.predictions[i].confidence(), vp.predictions[i].frame(), v, m.prediction_tp[i]});
    }
  }
  if (total_gt == 0) throw std::domain_error("average_precision is undefined without ground truth");
  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.video < b.video;
  });
  std::vector<double> precision(all.size());
  int tp = 0;
  for (size_t i = 0; i < all.size(); ++i) {
    tp += all[i].tp ? 1 : 0;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (size_t i = all.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  // Recall rises by 1/G exactly at each true positive, so the area is a sum over those ranks.
  double area = 0;
  for (size_t i = 0; i < all.size(); ++i) {
    if (all[i].tp) area += precision[i];
  }
  return area / static_cast<double>(total_gt);
}

double average_precision(const std::vector<EventDetection>& preds, const std::vector<TouchEvent>& gts, int delta) {
  return average_precision(std::vector<VideoPredictions>{{"", preds, gts}}, delta);
}

double average_precision_per_video(const std::vector<VideoPredictions>& videos, int delta) {
  double sum = 0;
  int n = 0;
  for (const auto& v : videos) {
    if (v.ground_truth.empty()) continue;
    sum += average_precision(std::vector<VideoPredictions>{v}, delta);
    ++n;
  }
  if (n == 0) throw std::domain_error("average_precision is undefined without ground truth");
  return sum / n;
}

MapResult map_over_tolerances(const std::vector<VideoPredictions>& videos, const std::vector<int>& tolerances,
                              bool per_video) {
  if (tolerances.empty()) throw std::invalid_argument("map_over_tolerances: no tolerances given");
  MapResult r;
  r.tolerances = tolerances;
  for (int d : tolerances) {
    r.ap.push_back(per_video ? average_precision_per_video(videos, d) : average_precision(videos, d));
  }
  r.map = std::accumulate(r.ap.begin(), r.ap.end(), 0.0) / static_cast<double>(r.ap.size());
  return r;
}

}  // namespace touchspot
