#include "touchspot/plot.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace touchspot {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Panel {
  double left, top, width, height;
  int frames;

  double x(double frame) const { return left + width * (frame + 0.5) / frames; }
  double y(double value) const { return top + height * (1.0 - value); }
};

void draw_frame(std::ostringstream& os, const Panel& p, const std::string& title) {
  os << "<rect x=\"" << num(p.left) << "\" y=\"" << num(p.top) << "\" width=\"" << num(p.width) << "\" height=\""
     << num(p.height) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  os << "<text x=\"" << num(p.left) << "\" y=\"" << num(p.top - 6) << "\" font-size=\"12\">" << title << "</text>\n";
  for (double v : {0.0, 0.5, 1.0}) {
    os << "<text class=\"tick\" x=\"" << num(p.left - 4) << "\" y=\"" << num(p.y(v) + 4)
       << "\" font-size=\"10\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
}

void draw_ground_truth(std::ostringstream& os, const Panel& p, const std::vector<TouchEvent>& events, int delta) {
  for (const auto& e : events) {
    const double x0 = p.x(e.frame - delta - 0.5);
    const double x1 = p.x(e.frame + delta + 0.5);
    os << "<rect class=\"tolerance\" x=\"" << num(x0) << "\" y=\"" << num(p.top) << "\" width=\"" << num(x1 - x0)
       << "\" height=\"" << num(p.height) << "\" fill=\"#2a9d8f\" fill-opacity=\"0.15\"/>\n";
    os << "<line class=\"gt\" x1=\"" << num(p.x(e.frame)) << "\" y1=\"" << num(p.top) << "\" x2=\""
       << num(p.x(e.frame)) << "\" y2=\"" << num(p.top + p.height)
       << "\" stroke=\"#2a9d8f\" stroke-width=\"1.5\" stroke-dasharray=\"5,4\"/>\n";
  }
}

}  // namespace

std::string render_plot_svg(const VideoAnnotation& annotation, const VideoScores* scores,
                            const std::vector<EventDetection>& detections, const PlotOptions& opt) {
  if (opt.width < 100 || opt.height < 100) throw std::invalid_argument("plot size must be at least 100x100");
  if (opt.delta < 0) throw std::invalid_argument("plot delta must be >= 0");
  const int frames = std::max(annotation.frame_count, 1);
  const double margin_l = 44, margin_r = 12, margin_t = 24, gap = 36, margin_b = 24;
  const double panel_h = (opt.height - margin_t - gap - margin_b) / 2.0;
  const double panel_w = opt.width - margin_l - margin_r;
  const Panel top{margin_l, margin_t, panel_w, panel_h, frames};
  const Panel bottom{margin_l, margin_t + panel_h + gap, panel_w, panel_h, frames};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
     << "\" viewBox=\"0 0 " << opt.width << " " << opt.height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  draw_frame(os, top, annotation.video_id + ": raw score");
  draw_frame(os, bottom, "detections after post-processing");
  draw_ground_truth(os, top, annotation.events, opt.delta);
  draw_ground_truth(os, bottom, annotation.events, opt.delta);

  if (scores && !scores->raw.scores.empty()) {
    os << "<polyline class=\"score\" fill=\"none\" stroke=\"#264653\" stroke-width=\"1.2\" points=\"";
    for (size_t t = 0; t < scores->raw.scores.size(); ++t) {
      os << (t ? " " : "") << num(top.x(static_cast<double>(t))) << "," << num(top.y(scores->raw.scores[t]));
    }
    os << "\"/>\n";
  }
  for (const auto& d : detections) {
    const double x = bottom.x(d.frame());
    os << "<line class=\"detection\" x1=\"" << num(x) << "\" y1=\"" << num(bottom.y(0)) << "\" x2=\"" << num(x)
       << "\" y2=\"" << num(bottom.y(d.confidence())) << "\" stroke=\"#e76f51\" stroke-width=\"2\"/>\n";
    os << "<circle class=\"detection-head\" cx=\"" << num(x) << "\" cy=\"" << num(bottom.y(d.confidence()))
       << "\" r=\"2.5\" fill=\"#e76f51\"/>\n";
  }
  os << "<text x=\"" << num(margin_l + panel_w / 2) << "\" y=\"" << num(opt.height - 6.0)
     << "\" font-size=\"11\" text-anchor=\"middle\">frame</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace touchspot
