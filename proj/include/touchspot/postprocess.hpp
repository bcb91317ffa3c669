#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "touchspot/core.hpp"

namespace touchspot {

// Temporal offset refinement: every frame's score moves to t + o * exp(-o^2 / (2 sigma_a^2)),
// split linearly between the two neighbouring frames; overlapping deposits keep the maximum.
std::vector<double> gauss_tor(const std::vector<double>& scores, const std::vector<double>& offsets, double sigma_a);

// Frames whose score is the strict maximum of the centred window (ties resolve to the
// earlier frame) and at least `floor`.
std::vector<EventDetection> hard_nms(const std::vector<double>& scores, int window, double floor = 0.01);

// Coincident frames collapse to their maximum confidence.
std::vector<EventDetection> merge_coincident(const std::vector<EventDetection>& detections);

// Greedy Gaussian decay exp(-d^2 / sigma_s) of detections within window / 2 frames of
// each selected peak. Output is sorted by frame.
std::vector<EventDetection> soft_nms(const std::vector<EventDetection>& detections, double sigma_s, int window);

enum class NmsKind { kNone, kHard, kSoft };

struct PostprocessOptions {
  bool use_tor = true;
  NmsKind nms = NmsKind::kSoft;
  double tor_sigma = 4.0;
  int window = 9;
  double snms_sigma = 1.0;
  double floor = 0.01;

  static PostprocessOptions from_config(const SpotConfig& cfg);
};

// Per-frame touch scores and displacement offsets of one video.
struct FrameScores {
  std::vector<double> scores;
  std::vector<double> offsets;
};

std::vector<double> refine_scores(const FrameScores& raw, const PostprocessOptions& opt);
std::vector<EventDetection> detect_events(const FrameScores& raw, const PostprocessOptions& opt);

// Detections file: tab-separated `video_id frame confidence` lines, `#` header.
using DetectionMap = std::map<std::string, std::vector<EventDetection>>;
void save_detections(const std::filesystem::path& path, const DetectionMap& detections);
DetectionMap load_detections(const std::filesystem::path& path);
std::string format_detections(const DetectionMap& detections);

// Scores file: tab-separated `video_id frame score offset refined` lines.
struct VideoScores {
  FrameScores raw;
  std::vector<double> refined;
};
using ScoreMap = std::map<std::string, VideoScores>;
void save_scores(const std::filesystem::path& path, const ScoreMap& scores);
ScoreMap load_scores(const std::filesystem::path& path);

}  // namespace touchspot
