#pragma once

#include <cstdint>
#include <vector>

#include "touchspot/data.hpp"

namespace touchspot::synth {

struct SynthParams {
  int frame_size = 32;
  int num_frames = 48;
  double hand_speed_min = 1.0;  // pixels / frame
  double hand_speed_max = 2.0;
  double camera_jitter = 0.4;   // per-frame translation std-dev, pixels
  double blur_prob = 0.1;
  double pixel_noise = 0.02;
  int num_events_min = 1;
  int num_events_max = 2;
  int min_event_gap = 5;        // frames between consecutive touch onsets
  double absent_idle_hand_prob = 0.5;
  std::uint64_t seed = 0;
};

// Throws std::invalid_argument describing the first violated precondition.
void validate_params(const SynthParams& p);

struct Disc {
  double cx = 0, cy = 0, r = 0;
};

// Closed discs: touching boundaries count as intersecting.
bool discs_intersect(const Disc& a, const Disc& b);

// First frame index t >= 0 at which a hand that starts `gap` pixels from contact
// and closes at `speed` px/frame has gap - speed * t <= 0.
int first_contact_frame(double gap, double speed);

// World-space geometry behind a rendered sequence.
struct SceneTrace {
  Disc object;
  std::vector<std::array<Disc, 2>> hands;          // per frame, world coordinates
  std::vector<std::array<bool, 2>> hand_active;    // hand exists in the scene
  std::vector<std::array<double, 2>> jitter;       // per-frame camera translation (dx, dy)
  std::vector<int> event_hand;                     // which hand made each event
};

struct SynthSequence {
  VideoAnnotation annotation;
  VideoFrames frames;
  SceneTrace trace;
};

SynthSequence generate_sequence(const SynthParams& params, const std::string& video_id = "synth");

// Independent sequences with per-video seeds derived from params.seed.
std::vector<SynthSequence> generate_dataset(int n_videos, const SynthParams& params);

std::vector<Video> to_videos(std::vector<SynthSequence> sequences, const std::string& split = "");

}  // namespace touchspot::synth
