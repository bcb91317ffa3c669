#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "touchspot/core.hpp"

namespace touchspot {

inline constexpr int kAnnotationFormatVersion = 1;

struct VideoAnnotation {
  std::string video_id;
  int frame_count = 0;
  double fps = 30.0;
  std::string split;  // "train", "val", "test" or empty
  std::vector<TouchEvent> events;     // video-relative, strictly increasing
  std::vector<HandPair> hand_boxes;   // one per frame
  std::vector<GraspPair> grasp_labels;  // one per frame

  std::vector<int> event_frames() const;
  bool operator==(const VideoAnnotation&) const = default;
};

// Throws std::invalid_argument naming the video_id on any invariant violation.
void validate_annotation(const VideoAnnotation& ann);

// JSON annotation file, schema in docs/annotation_format.md.
std::vector<VideoAnnotation> parse_annotations(const std::string& text);
std::vector<VideoAnnotation> load_annotations(const std::filesystem::path& path);
std::string serialize_annotations(const std::vector<VideoAnnotation>& annotations);
void save_annotations(const std::filesystem::path& path, const std::vector<VideoAnnotation>& annotations);

// Throws if two annotations share a video_id (splits must never overlap).
void check_unique_video_ids(const std::vector<VideoAnnotation>& annotations);

// Packed uint8 RGB frames of one video, row-major [T, H, W, 3].
struct VideoFrames {
  int num_frames = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  Image frame(int t) const;
  void set_frame(int t, const Image& img);
  bool operator==(const VideoFrames&) const = default;
};

// Binary layout: "TSFR", u32 version, u32 T, u32 H, u32 W, u32 channels(3), then T*H*W*3 bytes.
void save_frames(const std::filesystem::path& path, const VideoFrames& frames);
VideoFrames load_frames(const std::filesystem::path& path);

struct Video {
  VideoAnnotation annotation;
  VideoFrames frames;
};

// Loads `<dir>/annotations.json` and `<dir>/frames/<video_id>.bin` for every video.
std::vector<Video> load_video_dir(const std::filesystem::path& dir);
void save_video_dir(const std::filesystem::path& dir, const std::vector<Video>& videos);

// Explicit conversions between video-relative and clip-relative event frames.
std::vector<TouchEvent> to_clip_relative(const std::vector<TouchEvent>& video_events, int start, int length);
int to_video_relative(int clip_frame, int start);

struct ClipWindow {
  int video_index = 0;
  int start = 0;
  bool operator==(const ClipWindow&) const = default;
};

// Chooses a video with frame_count >= L and a start frame. With probability
// cfg.event_bias the window is forced to contain at least one event when the
// chosen video has any. Throws std::runtime_error if no video is long enough.
ClipWindow sample_window(const std::vector<VideoAnnotation>& annotations, const SpotConfig& cfg, Rng& rng);

// Cuts the L-frame window starting at `start`, re-indexing events and boxes.
ClipSample make_clip(const Video& video, int start, int length);

ClipSample sample_clip(const std::vector<Video>& videos, const SpotConfig& cfg, Rng& rng);

// Box scaled about its centre; may extend beyond the frame.
HandBox expand_box(const HandBox& box, double scale);

// Expanded box crop, clamped to the frame, zero-padded to a centred square and
// bilinearly resized to out_size x out_size. Absent hands give a zero patch.
Image extract_hand_patch(const Image& frame, const HandBox& box, double scale, int out_size);

struct DatasetStats {
  std::int64_t total_frames = 0;
  std::int64_t total_events = 0;
  // Videos with 0, 1, 2, 3 and >= 4 touch events.
  std::array<std::int64_t, 5> clips_by_event_count{};

  bool operator==(const DatasetStats&) const = default;
};

DatasetStats compute_stats(const std::vector<VideoAnnotation>& annotations);

// Table-shaped text report with one column per split present in the input.
std::string format_stats_report(const std::vector<VideoAnnotation>& annotations);

}  // namespace touchspot
