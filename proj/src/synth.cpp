#include "touchspot/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace touchspot::synth {

void validate_params(const SynthParams& p) {
  if (p.frame_size < 16) throw std::invalid_argument("frame_size must be >= 16");
  if (p.num_frames < 2) throw std::invalid_argument("num_frames must be >= 2");
  if (!(p.hand_speed_min > 0) || !(p.hand_speed_max >= p.hand_speed_min)) {
    throw std::invalid_argument("hand_speed range must be positive and ordered");
  }
  if (!(p.camera_jitter >= 0)) throw std::invalid_argument("camera_jitter must be >= 0");
  if (!(p.blur_prob >= 0 && p.blur_prob <= 1)) throw std::invalid_argument("blur_prob must lie in [0,1]");
  if (!(p.pixel_noise >= 0)) throw std::invalid_argument("pixel_noise must be >= 0");
  if (p.num_events_min < 0 || p.num_events_max < p.num_events_min) {
    throw std::invalid_argument("num_events range must be non-negative and ordered");
  }
  if (p.min_event_gap < 1) throw std::invalid_argument("min_event_gap must be >= 1");
}

bool discs_intersect(const Disc& a, const Disc& b) {
  const double dx = a.cx - b.cx;
  const double dy = a.cy - b.cy;
  const double reach = a.r + b.r;
  return dx * dx + dy * dy <= reach * reach;
}

int first_contact_frame(double gap, double speed) {
  if (!(speed > 0)) throw std::invalid_argument("speed must be positive");
  if (gap <= 0) return 0;
  return static_cast<int>(std::ceil(gap / speed));
}

namespace {

struct Cycle {
  int hand = 0;
  int touch = 0;
  int approach = 0;
  int dwell = 0;
  int retract = 0;
  double speed = 1;
  double contact_gap = 0;  // in (-speed, 0]
  double angle = 0;
  int grasp = 1;
};

struct HandPlan {
  std::vector<Cycle> cycles;
  bool active = false;
  double rest_angle = 0;
  double rest_distance = 0;
  double radius = 3;
};

double hand_distance(const HandPlan& plan, const Disc& object, int t, double* angle, int* grasp) {
  const double contact = plan.radius + object.r;
  *grasp = 0;
  if (plan.cycles.empty()) {
    *angle = plan.rest_angle;
    return plan.rest_distance;
  }
  const Cycle* prev = nullptr;
  for (const Cycle& c : plan.cycles) {
    const int start = c.touch - c.approach;
    const int release = c.touch + c.dwell;
    const int back = release + c.retract;
    const double at_touch = contact + c.contact_gap;
    if (t < start) {
      if (prev) {
        *angle = prev->angle;
        return contact + prev->contact_gap + prev->speed * prev->retract;
      }
      *angle = c.angle;
      return at_touch + c.speed * c.approach;
    }
    *grasp = c.grasp;
    if (t <= c.touch) {
      *angle = c.angle;
      return at_touch + c.speed * (c.touch - t);
    }
    if (t <= release) {
      *angle = c.angle;
      return at_touch;
    }
    if (t <= back) {
      *angle = c.angle;
      return at_touch + c.speed * (t - release);
    }
    *grasp = 0;
    prev = &c;
  }
  *angle = prev->angle;
  return contact + prev->contact_gap + prev->speed * prev->retract;
}

double coverage(double px, double py, const Disc& d) {
  const double dist = std::hypot(px - d.cx, py - d.cy);
  return std::clamp(d.r - dist + 0.5, 0.0, 1.0);
}

}  // namespace

SynthSequence generate_sequence(const SynthParams& params, const std::string& video_id) {
  validate_params(params);
  Rng rng(params.seed);
  const int T = params.num_frames;
  const double S = params.frame_size;

  Disc object{S / 2 + rng.uniform(-3, 3), S / 2 + rng.uniform(-3, 3), rng.uniform(4.0, 5.5)};
  std::array<HandPlan, 2> plans;
  for (auto& p : plans) p.radius = rng.uniform(3.0, 4.0);
  const double angle_center[2] = {std::numbers::pi, 0.0};

  // Plan touch cycles by rejection sampling; each event is assigned to alternating hands.
  const int wanted = rng.uniform_int(params.num_events_min, params.num_events_max);
  const int first_hand = rng.uniform_int(0, 1);
  std::vector<Cycle> cycles;
  for (int n = wanted; n > 0 && cycles.empty(); --n) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      std::vector<Cycle> cand(n);
      for (int i = 0; i < n; ++i) {
        Cycle& c = cand[i];
        c.hand = (first_hand + i) % 2;
        c.speed = rng.uniform(params.hand_speed_min, params.hand_speed_max);
        c.approach = std::clamp(static_cast<int>(std::lround(rng.uniform(6.0, 10.0) / c.speed)), 3, 8);
        c.dwell = rng.uniform_int(3, 5);
        c.retract = rng.uniform_int(3, 5);
        c.contact_gap = -rng.uniform() * c.speed;
        c.angle = angle_center[c.hand] + rng.uniform(-0.6, 0.6);
        c.grasp = rng.uniform_int(1, kNumGraspClasses - 1);
        c.touch = rng.uniform_int(c.approach + 1, T - 2);
      }
      std::sort(cand.begin(), cand.end(), [](const Cycle& a, const Cycle& b) { return a.touch < b.touch; });
      bool ok = true;
      for (int i = 1; i < n && ok; ++i) {
        if (cand[i].touch - cand[i - 1].touch < params.min_event_gap) ok = false;
      }
      for (int i = 0; i < n && ok; ++i) {
        for (int j = 0; j < i; ++j) {
          if (cand[j].hand == cand[i].hand &&
              cand[i].touch - cand[i].approach <= cand[j].touch + cand[j].dwell + cand[j].retract) {
            ok = false;
          }
        }
      }
      if (ok) {
        cycles = std::move(cand);
        break;
      }
    }
  }
  for (const Cycle& c : cycles) {
    plans[c.hand].cycles.push_back(c);
    plans[c.hand].active = true;
  }
  for (int h = 0; h < 2; ++h) {
    HandPlan& p = plans[h];
    p.rest_angle = angle_center[h] + rng.uniform(-0.6, 0.6);
    p.rest_distance = p.radius + object.r + rng.uniform(6.0, 10.0);
    if (!p.active) p.active = !rng.bernoulli(params.absent_idle_hand_prob);
  }

  // Appearance.
  const float bg[3] = {static_cast<float>(rng.uniform(0.25, 0.45)), static_cast<float>(rng.uniform(0.25, 0.45)),
                       static_cast<float>(rng.uniform(0.25, 0.45))};
  double tex_k[3][2], tex_phase[3];
  for (int i = 0; i < 3; ++i) {
    const double a = rng.uniform(0, 2 * std::numbers::pi);
    const double f = rng.uniform(0.3, 0.9);
    tex_k[i][0] = f * std::cos(a);
    tex_k[i][1] = f * std::sin(a);
    tex_phase[i] = rng.uniform(0, 2 * std::numbers::pi);
  }
  const float obj_col[3] = {static_cast<float>(rng.uniform(0.05, 0.3)), static_cast<float>(rng.uniform(0.4, 0.9)),
                            static_cast<float>(rng.uniform(0.5, 0.95))};
  const double obj_stripe = rng.uniform(1.0, 2.0);
  float hand_col[2][3];
  for (auto& hc : hand_col) {
    const double shade = rng.uniform(0.85, 1.0);
    hc[0] = static_cast<float>(0.95 * shade);
    hc[1] = static_cast<float>(0.72 * shade);
    hc[2] = static_cast<float>(0.55 * shade);
  }

  SynthSequence seq;
  seq.trace.object = object;
  VideoAnnotation& ann = seq.annotation;
  ann.video_id = video_id;
  ann.frame_count = T;
  ann.fps = 30.0;
  seq.frames.num_frames = T;
  seq.frames.height = params.frame_size;
  seq.frames.width = params.frame_size;
  seq.frames.pixels.assign(static_cast<size_t>(T) * params.frame_size * params.frame_size * 3, 0);

  std::array<bool, 2> prev_contact{false, false};
  for (int t = 0; t < T; ++t) {
    const double jx = params.camera_jitter * rng.normal();
    const double jy = params.camera_jitter * rng.normal();
    std::array<Disc, 2> hands;
    std::array<int, 2> grasp{0, 0};
    HandPair boxes;
    GraspPair labels;
    bool event_here = false;
    for (int h = 0; h < 2; ++h) {
      double angle = 0;
      const double dist = hand_distance(plans[h], object, t, &angle, &grasp[h]);
      hands[h] = Disc{object.cx + dist * std::cos(angle), object.cy + dist * std::sin(angle), plans[h].radius};
      const bool contact = plans[h].active && discs_intersect(hands[h], object);
      if (contact && !prev_contact[h] && t > 0) {
        event_here = true;
        seq.trace.event_hand.push_back(h);
      }
      prev_contact[h] = contact;
      if (plans[h].active) {
        const auto side = static_cast<HandSide>(h);
        const Disc& d = hands[h];
        const HandBox box =
            HandBox(d.cx + jx - d.r, d.cy + jy - d.r, d.cx + jx + d.r, d.cy + jy + d.r, side).clamped(S, S);
        (h == 0 ? boxes.left : boxes.right) = box;
        // Grasp category while touching the object, 0 (no grasp) otherwise.
        if (box.present()) labels[h] = contact ? grasp[h] : 0;
      }
    }
    if (event_here) ann.events.push_back({t});
    ann.hand_boxes.push_back(boxes);
    ann.grasp_labels.push_back(labels);
    seq.trace.hands.push_back(hands);
    seq.trace.hand_active.push_back({plans[0].active, plans[1].active});
    seq.trace.jitter.push_back({jx, jy});

    Image img(params.frame_size, params.frame_size, 3);
    for (int y = 0; y < params.frame_size; ++y) {
      for (int x = 0; x < params.frame_size; ++x) {
        const double wx = x + 0.5 - jx;
        const double wy = y + 0.5 - jy;
        double tex = 0;
        for (int i = 0; i < 3; ++i) tex += 0.05 * std::sin(tex_k[i][0] * wx + tex_k[i][1] * wy + tex_phase[i]);
        float px[3];
        for (int c = 0; c < 3; ++c) px[c] = bg[c] + static_cast<float>(tex);
        const double oc = coverage(wx, wy, object);
        if (oc > 0) {
          const double stripe = 0.12 * std::sin(obj_stripe * (wx - object.cx + wy - object.cy));
          for (int c = 0; c < 3; ++c) {
            px[c] = static_cast<float>((1 - oc) * px[c] + oc * (obj_col[c] + stripe));
          }
        }
        for (int h = 0; h < 2; ++h) {
          if (!plans[h].active) continue;
          const double hc = coverage(wx, wy, hands[h]);
          if (hc <= 0) continue;
          for (int c = 0; c < 3; ++c) px[c] = static_cast<float>((1 - hc) * px[c] + hc * hand_col[h][c]);
        }
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = px[c];
      }
    }
    if (rng.bernoulli(params.blur_prob)) {
      Image blurred = img;
      for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
          for (int c = 0; c < 3; ++c) {
            float s = 0;
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                s += img.at(std::clamp(y + dy, 0, img.height - 1), std::clamp(x + dx, 0, img.width - 1), c);
              }
            }
            blurred.at(y, x, c) = s / 9.0f;
          }
        }
      }
      img = std::move(blurred);
    }
    if (params.pixel_noise > 0) {
      for (float& v : img.pixels) v += static_cast<float>(params.pixel_noise * rng.normal());
    }
    seq.frames.set_frame(t, img);
  }
  validate_annotation(ann);
  return seq;
}

std::vector<SynthSequence> generate_dataset(int n_videos, const SynthParams& params) {
  if (n_videos < 1) throw std::invalid_argument("n_videos must be >= 1");
  std::vector<SynthSequence> out;
  out.reserve(n_videos);
  for (int i = 0; i < n_videos; ++i) {
    SynthParams p = params;
    p.seed = Rng::derive(params.seed, static_cast<std::uint64_t>(i));
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%04d", i);
    out.push_back(generate_sequence(p, id));
  }
  return out;
}

std::vector<Video> to_videos(std::vector<SynthSequence> sequences, const std::string& split) {
  std::vector<Video> out;
  out.reserve(sequences.size());
  for (auto& s : sequences) {
    s.annotation.split = split;
    out.push_back(Video{std::move(s.annotation), std::move(s.frames)});
  }
  return out;
}

}  // namespace touchspot::synth
