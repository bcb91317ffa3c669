#pragma once

#include <string>
#include <vector>

#include "touchspot/core.hpp"

namespace touchspot {

struct MatchResult {
  std::vector<bool> prediction_tp;   // indexed like the input predictions
  std::vector<bool> ground_truth_matched;

  int true_positives() const;
};

// Fractional frames round to the nearest integer, halves toward the earlier frame.
int round_frame(double frame);

// Greedy matching in descending confidence (ties: earlier frame, then input order). Each
// prediction takes the nearest unmatched ground truth within delta (ties: earlier gt).
MatchResult match_predictions(const std::vector<EventDetection>& preds, const std::vector<TouchEvent>& gts,
                              int delta);

struct VideoPredictions {
  std::string video_id;
  std::vector<EventDetection> predictions;
  std::vector<TouchEvent> ground_truth;
};

// All-point interpolated AP over one PR curve pooled across videos.
// Throws std::domain_error when there is no ground truth at all.
double average_precision(const std::vector<VideoPredictions>& videos, int delta);
double average_precision(const std::vector<EventDetection>& preds, const std::vector<TouchEvent>& gts, int delta);

// Mean of per-video APs over videos that have ground truth.
double average_precision_per_video(const std::vector<VideoPredictions>& videos, int delta);

struct MapResult {
  double map = 0;
  std::vector<int> tolerances;
  std::vector<double> ap;
};

MapResult map_over_tolerances(const std::vector<VideoPredictions>& videos, const std::vector<int>& tolerances,
                              bool per_video = false);

}  // namespace touchspot
