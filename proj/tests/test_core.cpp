#include <doctest.h>

#include <set>

#include "touchspot/config_io.hpp"
#include "touchspot/core.hpp"

using namespace touchspot;

TEST_CASE("default config is valid") {
  CHECK(validate_config(SpotConfig{}).empty());
  CHECK(validate_config(SpotConfig::desk_preset()).empty());
}

TEST_CASE("short clip relative to the window is reported") {
  SpotConfig cfg;
  cfg.clip_length = 5;
  cfg.displacement_window = 4;
  CHECK(validate_config(cfg) == std::vector<std::string>{"L must be ≥ 2w+1"});
  cfg.clip_length = 9;
  CHECK(validate_config(cfg).empty());
}

TEST_CASE("zero soft label sigma is reported") {
  SpotConfig cfg;
  cfg.soft_label_sigma = 0.0;
  CHECK(validate_config(cfg) == std::vector<std::string>{"soft_label_sigma must be > 0"});
}

TEST_CASE("every violation is listed") {
  SpotConfig cfg;
  cfg.clip_length = 3;
  cfg.soft_label_sigma = -1.0;
  cfg.tor_sigma = 0.0;
  cfg.snms_sigma = 0.0;
  CHECK(validate_config(cfg).size() >= 4);
}

TEST_CASE("derived defaults follow the window") {
  SpotConfig cfg;
  cfg.displacement_window = 4;
  CHECK(cfg.effective_soft_label_sigma() == 2.0);
  CHECK(cfg.effective_tor_sigma() == 4.0);
  CHECK(cfg.effective_nms_window() == 9);
  cfg.displacement_window = 0;
  CHECK(cfg.effective_soft_label_sigma() == 0.5);
  CHECK(cfg.effective_tor_sigma() == 0.5);
  CHECK(cfg.effective_nms_window() == 1);
  cfg.soft_label_sigma = 3.0;
  cfg.tor_sigma = 1.5;
  cfg.nms_window = 7;
  CHECK(cfg.effective_soft_label_sigma() == 3.0);
  CHECK(cfg.effective_tor_sigma() == 1.5);
  CHECK(cfg.effective_nms_window() == 7);
}

TEST_CASE("hand boxes validate and clamp") {
  CHECK_THROWS_AS(HandBox(5, 5, 5, 10, HandSide::kLeft), std::invalid_argument);
  CHECK_THROWS_AS(HandBox(5, 10, 8, 9, HandSide::kLeft), std::invalid_argument);
  const HandBox b(-4, 2, 10, 40, HandSide::kRight);
  const HandBox c = b.clamped(32, 32);
  CHECK(c.present());
  CHECK(c.x1() == 0);
  CHECK(c.y2() == 32);
  CHECK(c.side() == HandSide::kRight);
  CHECK_FALSE(HandBox(40, 2, 50, 8, HandSide::kLeft).clamped(32, 32).present());
  CHECK_FALSE(HandBox::absent(HandSide::kLeft).present());
}

TEST_CASE("clip samples reject broken invariants") {
  const std::vector<Image> frames(4, Image(8, 8));
  const std::vector<HandPair> boxes(4);
  const std::vector<GraspPair> grasp(4);
  CHECK_NOTHROW(ClipSample(4, frames, boxes, {{0}, {3}}, grasp));
  CHECK_THROWS(ClipSample(5, frames, boxes, {}, grasp));
  CHECK_THROWS(ClipSample(4, frames, boxes, {{4}}, grasp));
  CHECK_THROWS(ClipSample(4, frames, boxes, {{2}, {2}}, grasp));
  CHECK_THROWS(ClipSample(4, frames, boxes, {{-1}}, grasp));
  std::vector<GraspPair> orphan(4);
  orphan[1][0] = 3;  // grasp label without a left hand
  CHECK_THROWS(ClipSample(4, frames, boxes, {}, orphan));
  std::vector<HandPair> with_hand(4);
  with_hand[1].left = HandBox(1, 1, 4, 4, HandSide::kLeft);
  CHECK_NOTHROW(ClipSample(4, frames, with_hand, {}, orphan));
  orphan[1][0] = 9;
  CHECK_THROWS(ClipSample(4, frames, with_hand, {}, orphan));
}

TEST_CASE("event detections validate") {
  CHECK_THROWS(EventDetection(-0.5, 0.5));
  CHECK_THROWS(EventDetection(1, 1.01));
  CHECK_THROWS(EventDetection(1, -0.01));
  const EventDetection d(2.5, 0.25);
  CHECK(d.with_confidence(0.5).frame() == 2.5);
}

TEST_CASE("loss kind names round trip") {
  for (LossKind k : {LossKind::kFocal, LossKind::kWeightedCe}) CHECK(loss_kind_from_string(to_string(k)) == k);
  CHECK_THROWS(loss_kind_from_string("hinge"));
}

TEST_CASE("rng streams are reproducible and in range") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  Rng r(7);
  std::set<int> seen;
  double sum = 0, sq = 0;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const int k = r.uniform_int(-2, 3);
    CHECK(k >= -2);
    CHECK(k <= 3);
    seen.insert(k);
    const double n = r.normal();
    sum += n;
    sq += n * n;
  }
  CHECK(seen.size() == 6);
  CHECK(std::abs(sum / 20000) < 0.05);
  CHECK(std::abs(sq / 20000 - 1.0) < 0.05);
  CHECK(Rng::derive(1, 2) != Rng::derive(1, 3));
  CHECK(Rng::derive(1, 2) == Rng::derive(1, 2));
}

TEST_CASE("config text round trips every field") {
  SpotConfig cfg = SpotConfig::desk_preset();
  cfg.soft_label_sigma = 0.75;
  cfg.tor_sigma = 1.25;
  cfg.nms_window = 3;
  cfg.loss_kind = LossKind::kWeightedCe;
  cfg.tolerances = {0, 2, 5};
  cfg.use_tor = false;
  cfg.learning_rate = 1.0 / 3.0;
  cfg.seed = 123456789012345ull;
  const SpotConfig back = parse_config_text(to_config_text(cfg));
  CHECK(to_config_text(back) == to_config_text(cfg));
  CHECK(back.tolerances == cfg.tolerances);
  CHECK(back.learning_rate == cfg.learning_rate);
  CHECK(*back.nms_window == 3);
  CHECK(back.seed == cfg.seed);
}

TEST_CASE("config text keeps unspecified fields from the base") {
  const SpotConfig cfg = parse_config_text("# comment\nepochs = 3\n", SpotConfig::desk_preset());
  CHECK(cfg.epochs == 3);
  CHECK(cfg.clip_length == 16);
  CHECK(parse_config_text("").clip_length == 40);
}

TEST_CASE("config text rejects unknown keys and bad values") {
  CHECK_THROWS(parse_config_text("clip_lenght = 10\n"));
  CHECK_THROWS(parse_config_text("clip_length = ten\n"));
  CHECK_THROWS(parse_config_text("loss_kind = hinge\n"));
}
