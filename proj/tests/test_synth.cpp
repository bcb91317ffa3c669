#include <doctest.h>

#include <set>

#include "touchspot/synth.hpp"

using namespace touchspot;
using namespace touchspot::synth;

namespace {

// First step at which two discs, rasterised on a half-pixel lattice, share a lattice point.
int rasterised_first_overlap(Disc object, Disc hand, double dx_per_frame, int max_frames) {
  const double step = 0.5;
  for (int t = 0; t < max_frames; ++t) {
    const Disc h{hand.cx + dx_per_frame * t, hand.cy, hand.r};
    for (double y = -20; y <= 20; y += step) {
      for (double x = -20; x <= 40; x += step) {
        const bool in_obj = (x - object.cx) * (x - object.cx) + (y - object.cy) * (y - object.cy) <= object.r * object.r;
        const bool in_hand = (x - h.cx) * (x - h.cx) + (y - h.cy) * (y - h.cy) <= h.r * h.r;
        if (in_obj && in_hand) return t;
      }
    }
  }
  return -1;
}

}  // namespace

TEST_CASE("a hand 10 px away at 2 px per frame touches at frame 5") {
  CHECK(first_contact_frame(10, 2) == 5);
  // Object radius 5 at the origin, hand radius 5 centred 20 px to the right: edge gap 10.
  CHECK(rasterised_first_overlap({0, 0, 5}, {20, 0, 5}, -2.0, 20) == 5);
}

TEST_CASE("first contact matches a frame-by-frame scan") {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const double gap = rng.uniform(-3, 30);
    const double speed = rng.uniform(0.2, 4);
    int t = 0;
    while (gap - speed * t > 0) ++t;
    CHECK(first_contact_frame(gap, speed) == t);
  }
  CHECK_THROWS(first_contact_frame(5, 0));
}

TEST_CASE("closed discs intersect when tangent") {
  CHECK(discs_intersect({0, 0, 1}, {2, 0, 1}));
  CHECK_FALSE(discs_intersect({0, 0, 1}, {2.0000001, 0, 1}));
}

TEST_CASE("invalid parameters are rejected") {
  SynthParams p;
  p.hand_speed_min = 0;
  CHECK_THROWS(validate_params(p));
  p = SynthParams{};
  p.frame_size = 15;
  CHECK_THROWS(validate_params(p));
  p = SynthParams{};
  p.hand_speed_min = 3;
  p.hand_speed_max = 2;
  CHECK_THROWS(validate_params(p));
  CHECK_NOTHROW(validate_params(SynthParams{}));
  p = SynthParams{};
  p.hand_speed_min = p.hand_speed_max = 0;
  CHECK_THROWS(generate_sequence(p));
}

TEST_CASE("the same seed renders identical pixels") {
  SynthParams p;
  p.seed = 5;
  const auto a = generate_sequence(p, "x");
  const auto b = generate_sequence(p, "x");
  CHECK(a.frames == b.frames);
  CHECK(a.annotation == b.annotation);
  p.seed = 6;
  CHECK_FALSE(generate_sequence(p, "x").frames == a.frames);
}

TEST_CASE("datasets have valid, increasing, well-separated events") {
  SynthParams p;
  p.seed = 21;
  p.num_events_min = 2;
  p.num_events_max = 2;
  p.min_event_gap = 5;
  const auto seqs = generate_dataset(3, p);
  REQUIRE(seqs.size() == 3);
  std::set<std::string> ids;
  for (const auto& s : seqs) {
    ids.insert(s.annotation.video_id);
    CHECK_NOTHROW(validate_annotation(s.annotation));
    REQUIRE(s.annotation.events.size() == 2);
    CHECK(s.annotation.events[1].frame - s.annotation.events[0].frame >= 5);
  }
  CHECK(ids.size() == 3);
}

TEST_CASE("total event count is the sum over videos") {
  SynthParams p;
  p.seed = 4;
  const auto seqs = generate_dataset(20, p);
  size_t total = 0;
  for (const auto& s : seqs) total += s.annotation.events.size();
  std::vector<VideoAnnotation> anns;
  for (const auto& v : to_videos(seqs)) anns.push_back(v.annotation);
  CHECK(compute_stats(anns).total_events == static_cast<std::int64_t>(total));
  CHECK(total >= 20);
}

TEST_CASE("annotated touch frames are the first frames of geometric contact") {
  SynthParams p;
  p.seed = 77;
  p.camera_jitter = 1.0;
  for (const auto& s : generate_dataset(60, p)) {
    const auto& tr = s.trace;
    REQUIRE(tr.event_hand.size() == s.annotation.events.size());
    for (size_t i = 0; i < s.annotation.events.size(); ++i) {
      const int t = s.annotation.events[i].frame;
      const int h = tr.event_hand[i];
      REQUIRE(t >= 1);
      CHECK(discs_intersect(tr.object, tr.hands[t][h]));
      CHECK_FALSE(discs_intersect(tr.object, tr.hands[t - 1][h]));
    }
    // No contact onset is left unannotated.
    for (int t = 1; t < s.annotation.frame_count; ++t) {
      bool onset = false;
      for (int h = 0; h < 2; ++h) {
        onset = onset || (tr.hand_active[t][h] && discs_intersect(tr.object, tr.hands[t][h]) &&
                          !discs_intersect(tr.object, tr.hands[t - 1][h]));
      }
      const bool annotated = std::any_of(s.annotation.events.begin(), s.annotation.events.end(),
                                         [t](const TouchEvent& e) { return e.frame == t; });
      CHECK(onset == annotated);
    }
  }
}

TEST_CASE("camera jitter moves boxes but not touch frames") {
  SynthParams still;
  still.seed = 31;
  still.camera_jitter = 0;
  SynthParams shaky = still;
  shaky.camera_jitter = 1.5;
  for (int i = 0; i < 10; ++i) {
    still.seed = shaky.seed = 100 + i;
    const auto a = generate_sequence(still);
    const auto b = generate_sequence(shaky);
    CHECK(a.annotation.events == b.annotation.events);
    bool moved = false;
    for (int t = 0; t < a.annotation.frame_count; ++t) {
      moved = moved || !(a.annotation.hand_boxes[t] == b.annotation.hand_boxes[t]);
    }
    CHECK(moved);
  }
}

TEST_CASE("boxes are the jittered disc bounds and grasp labels follow contact") {
  SynthParams p;
  p.seed = 8;
  for (const auto& s : generate_dataset(20, p)) {
    const auto& tr = s.trace;
    const double size = p.frame_size;
    for (int t = 0; t < s.annotation.frame_count; ++t) {
      for (int h = 0; h < 2; ++h) {
        const auto side = static_cast<HandSide>(h);
        const HandBox& box = s.annotation.hand_boxes[t][side];
        if (!tr.hand_active[t][h]) {
          CHECK_FALSE(box.present());
          continue;
        }
        const Disc& d = tr.hands[t][h];
        const auto [jx, jy] = tr.jitter[t];
        const HandBox expect =
            HandBox(d.cx + jx - d.r, d.cy + jy - d.r, d.cx + jx + d.r, d.cy + jy + d.r, side).clamped(size, size);
        CHECK(box == expect);
        const auto& g = s.annotation.grasp_labels[t][h];
        if (!box.present()) {
          CHECK_FALSE(g.has_value());
          continue;
        }
        REQUIRE(g.has_value());
        const bool contact = discs_intersect(tr.object, d);
        CHECK((*g != 0) == contact);
        CHECK(*g < kNumGraspClasses);
      }
    }
  }
}

TEST_CASE("pixels stay in the byte range and frames differ over time") {
  SynthParams p;
  p.seed = 9;
  const auto s = generate_sequence(p);
  CHECK(s.frames.num_frames == p.num_frames);
  CHECK(s.frames.height == p.frame_size);
  CHECK_FALSE(s.frames.frame(0) == s.frames.frame(p.num_frames - 1));
}
