#pragma once

#include <string>
#include <vector>

#include "touchspot/data.hpp"
#include "touchspot/postprocess.hpp"

namespace touchspot {

struct PlotOptions {
  int width = 900;
  int height = 420;
  int delta = 2;  // half-width of the shaded tolerance band around each ground truth
};

// Two-panel SVG: raw touch scores on top, post-processed detections below. Ground-truth
// frames are dashed vertical lines over a shaded [t - delta, t + delta] band in both panels.
// `scores` may be null, in which case the top panel stays empty.
std::string render_plot_svg(const VideoAnnotation& annotation, const VideoScores* scores,
                            const std::vector<EventDetection>& detections, const PlotOptions& opt);

}  // namespace touchspot
