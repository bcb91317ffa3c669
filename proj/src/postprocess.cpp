#include "touchspot/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace touchspot {

std::vector<double> gauss_tor(const std::vector<double>& scores, const std::vector<double>& offsets, double sigma_a) {
  if (!(sigma_a > 0)) throw std::invalid_argument("gauss_tor: sigma_a must be > 0");
  if (scores.size() != offsets.size()) throw std::invalid_argument("gauss_tor: scores/offsets length mismatch");
  const int n = static_cast<int>(scores.size());
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;
  for (int t = 0; t < n; ++t) {
    const double o = offsets[t];
    const double shift = o * std::exp(-o * o / (2 * sigma_a * sigma_a));
    const double pos = std::clamp(t + shift, 0.0, static_cast<double>(n - 1));
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = static_cast<int>(std::ceil(pos));
    const double frac = pos - lo;
    out[lo] = std::max(out[lo], scores[t] * (1.0 - frac));
    if (hi != lo) out[hi] = std::max(out[hi], scores[t] * frac);
  }
  return out;
}

std::vector<EventDetection> hard_nms(const std::vector<double>& scores, int window, double floor) {
  if (window < 1) throw std::invalid_argument("hard_nms: window must be >= 1");
  const int n = static_cast<int>(scores.size());
  const int half = window / 2;
  std::vector<EventDetection> out;
  for (int t = 0; t < n; ++t) {
    if (scores[t] < floor) continue;
    bool keep = true;
    for (int u = std::max(0, t - half); u <= std::min(n - 1, t + half) && keep; ++u) {
      if (u == t) continue;
      if (scores[u] > scores[t] || (scores[u] == scores[t] && u < t)) keep = false;
    }
    if (keep) out.emplace_back(t, std::clamp(scores[t], 0.0, 1.0));
  }
  return out;
}

std::vector<EventDetection> merge_coincident(const std::vector<EventDetection>& detections) {
  std::vector<EventDetection> sorted = detections;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const EventDetection& a, const EventDetection& b) { return a.frame() < b.frame(); });
  std::vector<EventDetection> out;
  for (const auto& d : sorted) {
    if (!out.empty() && out.back().frame() == d.frame()) {
      if (d.confidence() > out.back().confidence()) out.back() = d;
    } else {
      out.push_back(d);
    }
  }
  return out;
}

std::vector<EventDetection> soft_nms(const std::vector<EventDetection>& detections, double sigma_s, int window) {
  if (!(sigma_s > 0)) throw std::invalid_argument("soft_nms: sigma_s must be > 0");
  if (window < 1) throw std::invalid_argument("soft_nms: window must be >= 1");
  const double half = window / 2;
  std::vector<EventDetection> remaining = merge_coincident(detections);
  std::vector<EventDetection> selected;
  selected.reserve(remaining.size());
  while (!remaining.empty()) {
    // Highest confidence first; remaining is frame-sorted so the first maximum is the earliest.
    size_t best = 0;
    for (size_t i = 1; i < remaining.size(); ++i) {
      if (remaining[i].confidence() > remaining[best].confidence()) best = i;
    }
    const EventDetection peak = remaining[best];
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
    selected.push_back(peak);
    for (auto& d : remaining) {
      const double delta = d.frame() - peak.frame();
      if (std::abs(delta) > half) continue;
      d = d.with_confidence(d.confidence() * std::exp(-delta * delta / sigma_s));
    }
  }
  std::stable_sort(selected.begin(), selected.end(),
                   [](const EventDetection& a, const EventDetection& b) { return a.frame() < b.frame(); });
  return selected;
}

PostprocessOptions PostprocessOptions::from_config(const SpotConfig& cfg) {
  PostprocessOptions o;
  o.use_tor = cfg.use_tor;
  o.nms = cfg.use_snms ? NmsKind::kSoft : NmsKind::kNone;
  o.tor_sigma = cfg.effective_tor_sigma();
  o.window = cfg.effective_nms_window();
  o.snms_sigma = cfg.snms_sigma;
  o.floor = cfg.confidence_floor;
  return o;
}

std::vector<double> refine_scores(const FrameScores& raw, const PostprocessOptions& opt) {
  return opt.use_tor ? gauss_tor(raw.scores, raw.offsets, opt.tor_sigma) : raw.scores;
}

std::vector<EventDetection> detect_events(const FrameScores& raw, const PostprocessOptions& opt) {
  const std::vector<double> scores = refine_scores(raw, opt);
  if (opt.nms == NmsKind::kHard) return hard_nms(scores, opt.window, opt.floor);
  std::vector<EventDetection> frames;
  for (size_t t = 0; t < scores.size(); ++t) {
    if (scores[t] >= opt.floor) frames.emplace_back(static_cast<double>(t), std::clamp(scores[t], 0.0, 1.0));
  }
  if (opt.nms == NmsKind::kNone) return frames;
  std::vector<EventDetection> out;
  for (const auto& d : soft_nms(frames, opt.snms_sigma, opt.window)) {
    if (d.confidence() >= opt.floor) out.push_back(d);
  }
  return out;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) out.push_back(field);
  return out;
}

template <typename Fn>
void for_each_record(const std::filesystem::path& path, size_t fields, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto parts = split_tabs(line);
    if (parts.size() != fields) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(fields) +
                               " tab-separated fields");
    }
    try {
      fn(parts);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const std::out_of_range& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

std::string format_detections(const DetectionMap& detections) {
  std::ostringstream os;
  os << "# video_id\tframe\tconfidence\n";
  for (const auto& [vid, dets] : detections) {
    for (const auto& d : dets) os << vid << '\t' << fmt_double(d.frame()) << '\t' << fmt_double(d.confidence()) << '\n';
  }
  return os.str();
}

void save_detections(const std::filesystem::path& path, const DetectionMap& detections) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_detections(detections);
}

DetectionMap load_detections(const std::filesystem::path& path) {
  DetectionMap out;
  for_each_record(path, 3, [&](const std::vector<std::string>& f) {
    out[f[0]].emplace_back(std::stod(f[1]), std::stod(f[2]));
  });
  return out;
}

void save_scores(const std::filesystem::path& path, const ScoreMap& scores) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# video_id\tframe\tscore\toffset\trefined\n";
  for (const auto& [vid, s] : scores) {
    for (size_t t = 0; t < s.raw.scores.size(); ++t) {
      out << vid << '\t' << t << '\t' << fmt_double(s.raw.scores[t]) << '\t' << fmt_double(s.raw.offsets[t]) << '\t'
          << fmt_double(s.refined[t]) << '\n';
    }
  }
}

ScoreMap load_scores(const std::filesystem::path& path) {
  ScoreMap out;
  for_each_record(path, 5, [&](const std::vector<std::string>& f) {
    VideoScores& v = out[f[0]];
    const size_t t = std::stoul(f[1]);
    if (t != v.raw.scores.size()) throw std::invalid_argument("frames must be consecutive from 0");
    v.raw.scores.push_back(std::stod(f[2]));
    v.raw.offsets.push_back(std::stod(f[3]));
    v.refined.push_back(std::stod(f[4]));
  });
  return out;
}

}  // namespace touchspot
