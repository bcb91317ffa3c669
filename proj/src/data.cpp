#include "touchspot/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace touchspot {

using nlohmann::json;

std::vector<int> VideoAnnotation::event_frames() const {
  std::vector<int> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.frame);
  return out;
}

void validate_annotation(const VideoAnnotation& ann) {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("video '" + ann.video_id + "': " + what);
  };
  if (ann.video_id.empty()) throw std::invalid_argument("annotation with empty video_id");
  if (ann.frame_count <= 0) fail("frame_count must be positive");
  if (!(ann.fps > 0)) fail("fps must be positive");
  if (static_cast<int>(ann.hand_boxes.size()) != ann.frame_count) {
    fail("hand_boxes length " + std::to_string(ann.hand_boxes.size()) + " != frame_count " +
         std::to_string(ann.frame_count));
  }
  if (static_cast<int>(ann.grasp_labels.size()) != ann.frame_count) fail("grasp_labels length != frame_count");
  for (size_t i = 0; i < ann.events.size(); ++i) {
    const int f = ann.events[i].frame;
    if (f < 0 || f >= ann.frame_count) {
      fail("event frame " + std::to_string(f) + " outside [0, " + std::to_string(ann.frame_count) + ")");
    }
    if (i > 0 && f <= ann.events[i - 1].frame) fail("event frames not strictly increasing");
  }
  for (int t = 0; t < ann.frame_count; ++t) {
    for (int h = 0; h < 2; ++h) {
      const auto side = static_cast<HandSide>(h);
      const HandBox& box = ann.hand_boxes[t][side];
      if (box.side() != side) fail("hand box side mismatch at frame " + std::to_string(t));
      const auto& g = ann.grasp_labels[t][h];
      if (g && !box.present()) fail("grasp label on absent hand at frame " + std::to_string(t));
      if (g && (*g < 0 || *g >= kNumGraspClasses)) fail("grasp label out of range at frame " + std::to_string(t));
    }
  }
}

namespace {

json box_to_json(const HandBox& b) {
  if (!b.present()) return nullptr;
  return json::array({b.x1(), b.y1(), b.x2(), b.y2()});
}

json grasp_to_json(const std::optional<int>& g) {
  if (!g) return nullptr;
  return *g;
}

int line_of_offset(const std::string& text, size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

VideoAnnotation annotation_from_json(const json& rec, size_t index) {
  VideoAnnotation ann;
  const std::string where = "record " + std::to_string(index);
  if (!rec.is_object()) throw std::runtime_error(where + ": expected an object");
  try {
    ann.video_id = rec.at("video_id").get<std::string>();
  } catch (const json::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
  const std::string who = where + " (video '" + ann.video_id + "')";
  try {
    ann.frame_count = rec.at("frame_count").get<int>();
    ann.fps = rec.at("fps").get<double>();
    if (rec.contains("split")) ann.split = rec.at("split").get<std::string>();
    for (const auto& f : rec.at("events")) ann.events.push_back({f.get<int>()});
    const auto& hands = rec.at("hands");
    const auto& left = hands.at("left");
    const auto& right = hands.at("right");
    if (left.size() != right.size()) throw std::runtime_error("left/right hand arrays differ in length");
    const auto& grasp = rec.at("grasp");
    const auto& gl = grasp.at("left");
    const auto& gr = grasp.at("right");
    if (gl.size() != left.size() || gr.size() != left.size()) {
      throw std::runtime_error("grasp arrays differ in length from hand arrays");
    }
    for (size_t t = 0; t < left.size(); ++t) {
      HandPair pair;
      auto read_box = [](const json& j, HandSide side) {
        if (j.is_null()) return HandBox::absent(side);
        if (!j.is_array() || j.size() != 4) throw std::runtime_error("box must be [x1, y1, x2, y2] or null");
        return HandBox(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>(), side);
      };
      pair.left = read_box(left[t], HandSide::kLeft);
      pair.right = read_box(right[t], HandSide::kRight);
      ann.hand_boxes.push_back(pair);
      GraspPair g;
      if (!gl[t].is_null()) g[0] = gl[t].get<int>();
      if (!gr[t].is_null()) g[1] = gr[t].get<int>();
      ann.grasp_labels.push_back(g);
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(who + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(who + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(who + ": " + e.what());
  }
  try {
    validate_annotation(ann);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
  return ann;
}

}  // namespace

std::vector<VideoAnnotation> parse_annotations(const std::string& text) {
  std::vector<VideoAnnotation> out;
  if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) return out;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("annotation parse error at line " + std::to_string(line_of_offset(text, e.byte)) + ": " +
                             e.what());
  }
  if (!doc.is_object() || !doc.contains("format_version") || !doc.contains("videos")) {
    throw std::runtime_error("annotation file must be an object with format_version and videos");
  }
  const int version = doc["format_version"].get<int>();
  if (version != kAnnotationFormatVersion) {
    throw std::runtime_error("unsupported annotation format_version " + std::to_string(version));
  }
  const auto& videos = doc["videos"];
  for (size_t i = 0; i < videos.size(); ++i) out.push_back(annotation_from_json(videos[i], i));
  return out;
}

std::vector<VideoAnnotation> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotation file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_annotations(ss.str());
}

std::string serialize_annotations(const std::vector<VideoAnnotation>& annotations) {
  json videos = json::array();
  for (const auto& ann : annotations) {
    json rec;
    rec["video_id"] = ann.video_id;
    rec["frame_count"] = ann.frame_count;
    rec["fps"] = ann.fps;
    if (!ann.split.empty()) rec["split"] = ann.split;
    rec["events"] = ann.event_frames();
    json left = json::array(), right = json::array(), gl = json::array(), gr = json::array();
    for (size_t t = 0; t < ann.hand_boxes.size(); ++t) {
      left.push_back(box_to_json(ann.hand_boxes[t].left));
      right.push_back(box_to_json(ann.hand_boxes[t].right));
      gl.push_back(grasp_to_json(ann.grasp_labels[t][0]));
      gr.push_back(grasp_to_json(ann.grasp_labels[t][1]));
    }
    rec["hands"] = {{"left", left}, {"right", right}};
    rec["grasp"] = {{"left", gl}, {"right", gr}};
    videos.push_back(std::move(rec));
  }
  json doc = {{"format_version", kAnnotationFormatVersion}, {"videos", videos}};
  return doc.dump(1) + "\n";
}

void save_annotations(const std::filesystem::path& path, const std::vector<VideoAnnotation>& annotations) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize_annotations(annotations);
}

void check_unique_video_ids(const std::vector<VideoAnnotation>& annotations) {
  std::set<std::string> seen;
  for (const auto& a : annotations) {
    if (!seen.insert(a.video_id).second) throw std::runtime_error("duplicate video_id '" + a.video_id + "'");
  }
}

Image VideoFrames::frame(int t) const {
  if (t < 0 || t >= num_frames) throw std::out_of_range("frame index " + std::to_string(t));
  Image img(height, width, 3);
  const size_t n = static_cast<size_t>(height) * width * 3;
  const std::uint8_t* src = pixels.data() + static_cast<size_t>(t) * n;
  for (size_t i = 0; i < n; ++i) img.pixels[i] = static_cast<float>(src[i]) / 255.0f;
  return img;
}

void VideoFrames::set_frame(int t, const Image& img) {
  if (img.height != height || img.width != width || img.channels != 3) {
    throw std::invalid_argument("set_frame: image shape mismatch");
  }
  const size_t n = static_cast<size_t>(height) * width * 3;
  std::uint8_t* dst = pixels.data() + static_cast<size_t>(t) * n;
  for (size_t i = 0; i < n; ++i) {
    dst[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels[i], 0.0f, 1.0f) * 255.0f));
  }
}

namespace {
constexpr char kFramesMagic[4] = {'T', 'S', 'F', 'R'};
constexpr std::uint32_t kFramesVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("truncated frames file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

void save_frames(const std::filesystem::path& path, const VideoFrames& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kFramesMagic, 4);
  write_u32(out, kFramesVersion);
  write_u32(out, frames.num_frames);
  write_u32(out, frames.height);
  write_u32(out, frames.width);
  write_u32(out, 3);
  out.write(reinterpret_cast<const char*>(frames.pixels.data()), static_cast<std::streamsize>(frames.pixels.size()));
}

VideoFrames load_frames(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open frames file " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFramesMagic, 4) != 0) throw std::runtime_error(path.string() + ": bad magic");
  if (read_u32(in) != kFramesVersion) throw std::runtime_error(path.string() + ": unsupported frames version");
  VideoFrames f;
  f.num_frames = static_cast<int>(read_u32(in));
  f.height = static_cast<int>(read_u32(in));
  f.width = static_cast<int>(read_u32(in));
  if (read_u32(in) != 3) throw std::runtime_error(path.string() + ": expected 3 channels");
  f.pixels.resize(static_cast<size_t>(f.num_frames) * f.height * f.width * 3);
  in.read(reinterpret_cast<char*>(f.pixels.data()), static_cast<std::streamsize>(f.pixels.size()));
  if (!in) throw std::runtime_error(path.string() + ": truncated pixel data");
  return f;
}

std::vector<Video> load_video_dir(const std::filesystem::path& dir) {
  auto annotations = load_annotations(dir / "annotations.json");
  check_unique_video_ids(annotations);
  std::vector<Video> videos;
  videos.reserve(annotations.size());
  for (auto& ann : annotations) {
    Video v;
    v.frames = load_frames(dir / "frames" / (ann.video_id + ".bin"));
    if (v.frames.num_frames != ann.frame_count) {
      throw std::runtime_error("video '" + ann.video_id + "': frames file has " + std::to_string(v.frames.num_frames) +
                               " frames, annotation says " + std::to_string(ann.frame_count));
    }
    v.annotation = std::move(ann);
    videos.push_back(std::move(v));
  }
  return videos;
}

void save_video_dir(const std::filesystem::path& dir, const std::vector<Video>& videos) {
  std::filesystem::create_directories(dir / "frames");
  std::vector<VideoAnnotation> anns;
  for (const auto& v : videos) {
    anns.push_back(v.annotation);
    save_frames(dir / "frames" / (v.annotation.video_id + ".bin"), v.frames);
  }
  save_annotations(dir / "annotations.json", anns);
}

std::vector<TouchEvent> to_clip_relative(const std::vector<TouchEvent>& video_events, int start, int length) {
  std::vector<TouchEvent> out;
  for (const auto& e : video_events) {
    if (e.frame >= start && e.frame < start + length) out.push_back({e.frame - start});
  }
  return out;
}

int to_video_relative(int clip_frame, int start) { return clip_frame + start; }

ClipWindow sample_window(const std::vector<VideoAnnotation>& annotations, const SpotConfig& cfg, Rng& rng) {
  const int len = cfg.clip_length;
  std::vector<int> eligible;
  for (size_t i = 0; i < annotations.size(); ++i) {
    if (annotations[i].frame_count >= len) eligible.push_back(static_cast<int>(i));
  }
  if (eligible.empty()) {
    throw std::runtime_error("sample_clip: no video has at least " + std::to_string(len) + " frames");
  }
  ClipWindow w;
  w.video_index = eligible[rng.uniform_int(0, static_cast<int>(eligible.size()) - 1)];
  const VideoAnnotation& ann = annotations[w.video_index];
  const int last_start = ann.frame_count - len;
  const bool want_event = rng.bernoulli(cfg.event_bias);
  if (want_event && !ann.events.empty()) {
    const int e = ann.events[rng.uniform_int(0, static_cast<int>(ann.events.size()) - 1)].frame;
    const int lo = std::max(0, e - len + 1);
    const int hi = std::min(e, last_start);
    w.start = rng.uniform_int(lo, hi);
  } else {
    w.start = rng.uniform_int(0, last_start);
  }
  return w;
}

ClipSample make_clip(const Video& video, int start, int length) {
  const VideoAnnotation& ann = video.annotation;
  if (start < 0 || start + length > ann.frame_count) {
    throw std::out_of_range("clip window [" + std::to_string(start) + ", " + std::to_string(start + length) +
                            ") outside video '" + ann.video_id + "'");
  }
  std::vector<Image> frames;
  std::vector<HandPair> boxes;
  std::vector<GraspPair> grasp;
  frames.reserve(length);
  for (int t = start; t < start + length; ++t) {
    frames.push_back(video.frames.frame(t));
    boxes.push_back(ann.hand_boxes[t]);
    grasp.push_back(ann.grasp_labels[t]);
  }
  return ClipSample(length, std::move(frames), std::move(boxes), to_clip_relative(ann.events, start, length),
                    std::move(grasp));
}

ClipSample sample_clip(const std::vector<Video>& videos, const SpotConfig& cfg, Rng& rng) {
  std::vector<VideoAnnotation> anns;
  anns.reserve(videos.size());
  for (const auto& v : videos) anns.push_back(v.annotation);
  const ClipWindow w = sample_window(anns, cfg, rng);
  return make_clip(videos[w.video_index], w.start, cfg.clip_length);
}

HandBox expand_box(const HandBox& box, double scale) {
  if (!box.present()) return box;
  const double cx = 0.5 * (box.x1() + box.x2());
  const double cy = 0.5 * (box.y1() + box.y2());
  const double hw = 0.5 * box.width() * scale;
  const double hh = 0.5 * box.height() * scale;
  return HandBox(cx - hw, cy - hh, cx + hw, cy + hh, box.side());
}

Image extract_hand_patch(const Image& frame, const HandBox& box, double scale, int out_size) {
  Image patch(out_size, out_size, frame.channels);
  if (!box.present()) return patch;
  const HandBox crop = expand_box(box, scale).clamped(frame.width, frame.height);
  if (!crop.present()) return patch;
  const double side = std::max(crop.width(), crop.height());
  const double sx0 = 0.5 * (crop.x1() + crop.x2()) - 0.5 * side;
  const double sy0 = 0.5 * (crop.y1() + crop.y2()) - 0.5 * side;
  const double step = side / out_size;
  auto sample = [&](double fy, double fx, int c) {
    // Pixel k covers [k, k+1); bilinear over pixel centres, edge-clamped.
    const double px = std::clamp(fx - 0.5, 0.0, frame.width - 1.0);
    const double py = std::clamp(fy - 0.5, 0.0, frame.height - 1.0);
    const int x0 = static_cast<int>(std::floor(px));
    const int y0 = static_cast<int>(std::floor(py));
    const int x1 = std::min(x0 + 1, frame.width - 1);
    const int y1 = std::min(y0 + 1, frame.height - 1);
    const double ax = px - x0;
    const double ay = py - y0;
    const double top = (1 - ax) * frame.at(y0, x0, c) + ax * frame.at(y0, x1, c);
    const double bot = (1 - ax) * frame.at(y1, x0, c) + ax * frame.at(y1, x1, c);
    return (1 - ay) * top + ay * bot;
  };
  for (int i = 0; i < out_size; ++i) {
    const double fy = sy0 + (i + 0.5) * step;
    if (fy < crop.y1() || fy > crop.y2()) continue;
    for (int j = 0; j < out_size; ++j) {
      const double fx = sx0 + (j + 0.5) * step;
      if (fx < crop.x1() || fx > crop.x2()) continue;
      for (int c = 0; c < frame.channels; ++c) patch.at(i, j, c) = static_cast<float>(sample(fy, fx, c));
    }
  }
  return patch;
}

DatasetStats compute_stats(const std::vector<VideoAnnotation>& annotations) {
  DatasetStats s;
  for (const auto& a : annotations) {
    s.total_frames += a.frame_count;
    s.total_events += static_cast<std::int64_t>(a.events.size());
    s.clips_by_event_count[std::min<size_t>(a.events.size(), 4)] += 1;
  }
  return s;
}

std::string format_stats_report(const std::vector<VideoAnnotation>& annotations) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<VideoAnnotation>> by_split;
  for (const auto& a : annotations) {
    const std::string key = a.split.empty() ? "all" : a.split;
    if (!by_split.count(key)) order.push_back(key);
    by_split[key].push_back(a);
  }
  if (order.empty()) order.push_back("all");
  std::vector<DatasetStats> cols;
  for (const auto& k : order) cols.push_back(compute_stats(by_split[k]));

  std::ostringstream os;
  const int label_w = 22;
  const int col_w = 12;
  os << std::left << std::setw(label_w) << "" << std::right;
  for (const auto& k : order) os << std::setw(col_w) << k;
  os << "\n";
  auto row = [&](const std::string& label, auto getter) {
    os << std::left << std::setw(label_w) << label << std::right;
    for (const auto& c : cols) os << std::setw(col_w) << getter(c);
    os << "\n";
  };
  row("# Frames", [](const DatasetStats& s) { return s.total_frames; });
  row("# Touch events", [](const DatasetStats& s) { return s.total_events; });
  const char* labels[5] = {"# Clips (0 touches)", "# Clips (1 touch)", "# Clips (2 touches)", "# Clips (3 touches)",
                           "# Clips (>=4 touches)"};
  for (int b = 0; b < 5; ++b) {
    row(labels[b], [b](const DatasetStats& s) { return s.clips_by_event_count[b]; });
  }
  return os.str();
}

}  // namespace touchspot
