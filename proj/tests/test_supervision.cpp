#include <doctest.h>

#include "support/oracles.hpp"
#include "touchspot/synth.hpp"
#include "touchspot/supervision.hpp"

using namespace touchspot;

namespace {

Tensor two_class(const std::vector<double>& touch) {
  Tensor t({static_cast<int>(touch.size()), 2});
  for (size_t i = 0; i < touch.size(); ++i) {
    t.data[2 * i] = 1 - touch[i];
    t.data[2 * i + 1] = touch[i];
  }
  return t;
}

std::vector<double> touch_column(const Tensor& t) {
  std::vector<double> out;
  for (int i = 0; i < t.dim(0); ++i) out.push_back(t.data[2 * i + 1]);
  return out;
}

}  // namespace

TEST_CASE("soft labels match direct evaluation") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int len = rng.uniform_int(1, 30), w = rng.uniform_int(0, 5);
    const double sigma = rng.uniform(0.05, 4);
    std::vector<int> events;
    for (int t = 0; t < len; ++t) {
      if (rng.bernoulli(0.1)) events.push_back(t);
    }
    const Tensor y = build_soft_labels(events, len, w, sigma);
    const auto expect = oracle::soft_touch(events, len, w, sigma);
    for (int l = 0; l < len; ++l) {
      CHECK(y.data[2 * l + kTouchClass] == doctest::Approx(expect[l]).epsilon(1e-15));
      CHECK(y.data[2 * l] + y.data[2 * l + 1] == 1.0);
    }
    for (int t : events) CHECK(y.data[2 * t + kTouchClass] == 1.0);
  }
  CHECK_THROWS(build_soft_labels({1}, 4, 1, 0.0));
}

TEST_CASE("a narrow soft label collapses to a one-hot") {
  const Tensor y = build_soft_labels({3, 9}, 12, 4, 0.05);
  for (int l = 0; l < 12; ++l) {
    const bool event = l == 3 || l == 9;
    CHECK(std::abs(y.data[2 * l + 1] - (event ? 1.0 : 0.0)) <= 1e-8);
  }
}

TEST_CASE("soft labels for events 2 frames apart take the larger peak") {
  // sigma 1, w 2: frame 5 sits 1 frame from event 4 and 1 from event 6.
  const Tensor y = build_soft_labels({4, 6}, 10, 2, 1.0);
  CHECK(y.data[2 * 5 + 1] == doctest::Approx(std::exp(-0.5)));
  CHECK(y.data[2 * 2 + 1] == doctest::Approx(std::exp(-2.0)));
  CHECK(y.data[2 * 9 + 1] == 0.0);
}

TEST_CASE("hard labels fill each event window") {
  const Tensor y = build_hard_labels({5}, 10, 2);
  CHECK(touch_column(y) == std::vector<double>{0, 0, 0, 1, 1, 1, 1, 1, 0, 0});
}

TEST_CASE("displacement targets point to the nearest event") {
  const auto d = build_displacement_targets({10}, 20, 3);
  for (int l = 0; l < 20; ++l) {
    CHECK(d.mask[l] == (std::abs(l - 10) <= 3));
    if (d.mask[l]) CHECK(d.y_d[l] == 10 - l);
  }
}

TEST_CASE("displacement ties resolve to the earlier event") {
  const auto d = build_displacement_targets({10, 14}, 20, 4);
  CHECK(d.y_d[12] == -2);
  CHECK(d.y_d[13] == 1);
  CHECK(d.y_d[11] == -1);
}

TEST_CASE("displacement targets agree with a brute-force nearest search") {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const int len = rng.uniform_int(1, 25), w = rng.uniform_int(0, 4);
    std::vector<int> events;
    for (int t = 0; t < len; ++t) {
      if (rng.bernoulli(0.15)) events.push_back(t);
    }
    const auto d = build_displacement_targets(events, len, w);
    for (int l = 0; l < len; ++l) {
      // Candidate offsets in order of |offset|, negative first.
      std::optional<int> expect;
      for (int r = 0; r <= w && !expect; ++r) {
        for (int off : {-r, r}) {
          if (!expect && std::find(events.begin(), events.end(), l + off) != events.end()) expect = off;
        }
      }
      CHECK(d.mask[l] == expect.has_value());
      CHECK(d.y_d[l] == expect.value_or(0));
    }
  }
}

TEST_CASE("targets from a clip carry grasp labels and masks") {
  synth::SynthParams p;
  p.seed = 3;
  auto videos = synth::to_videos(synth::generate_dataset(1, p));
  SpotConfig cfg = SpotConfig::desk_preset();
  const ClipSample clip = make_clip(videos[0], 0, cfg.clip_length);
  const SupervisionTargets t = build_targets(clip, cfg);
  CHECK(t.y_c_soft.shape == std::vector<int>{cfg.clip_length, 2});
  for (int l = 0; l < cfg.clip_length; ++l) {
    for (int h = 0; h < 2; ++h) {
      CHECK(t.g_mask[l][h] == clip.grasp_labels()[l][h].has_value());
      CHECK(t.y_g[l][h] == clip.grasp_labels()[l][h].value_or(-1));
    }
  }
  cfg.use_soft_labels = false;
  CHECK(build_targets(clip, cfg).y_c_soft == build_hard_labels(clip.event_frames(), cfg.clip_length, cfg.displacement_window));
}

TEST_CASE("classification losses match the reference formulas") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p, y;
    const int m = rng.uniform_int(1, 10);
    for (int i = 0; i < m; ++i) {
      p.push_back(rng.uniform(0.001, 0.999));
      y.push_back(rng.bernoulli(0.3) ? rng.uniform() : 0.0);
    }
    for (auto kind : {LossKind::kFocal, LossKind::kWeightedCe}) {
      const ClassificationLossSpec spec{kind, 0.9, 2.0, 5.0};
      const double got = classification_loss(two_class(p), two_class(y), spec).value;
      CHECK(got == doctest::Approx(oracle::classification(p, y, kind, 0.9, 2.0, 5.0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("focal loss with gamma 0 and alpha 0.5 is half the unweighted cross-entropy") {
  Rng rng(5);
  std::vector<double> p, y;
  for (int i = 0; i < 32; ++i) {
    p.push_back(rng.uniform(0.01, 0.99));
    y.push_back(rng.uniform());
  }
  const double focal = classification_loss(two_class(p), two_class(y), {LossKind::kFocal, 0.5, 0.0, 1.0}).value;
  const double ce = classification_loss(two_class(p), two_class(y), {LossKind::kWeightedCe, 0.5, 0.0, 1.0}).value;
  CHECK(std::abs(focal - 0.5 * ce) <= 1e-10);
}

TEST_CASE("classification loss clamps log of zero") {
  const auto l = classification_loss(two_class({0.0}), two_class({1.0}), {LossKind::kWeightedCe, 0.9, 2, 1.0});
  CHECK(l.value == doctest::Approx(-std::log(1e-8)));
  CHECK(std::isfinite(l.grad.data[1]));
  CHECK_THROWS(classification_loss(Tensor({2, 2}), Tensor({3, 2}), {}));
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(6);
  auto check = [](Tensor x, auto&& f) {
    const Tensor g = f(x).grad;
    for (size_t i = 0; i < x.size(); ++i) {
      const double h = 1e-6, orig = x.data[i];
      x.data[i] = orig + h;
      const double up = f(x).value;
      x.data[i] = orig - h;
      const double down = f(x).value;
      x.data[i] = orig;
      CHECK(g.data[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6).scale(1.0));
    }
  };
  std::vector<double> p, y;
  for (int i = 0; i < 6; ++i) {
    p.push_back(rng.uniform(0.05, 0.95));
    y.push_back(rng.uniform());
  }
  for (auto kind : {LossKind::kFocal, LossKind::kWeightedCe}) {
    const ClassificationLossSpec spec{kind, 0.8, 1.5, 3.0};
    check(two_class(p), [&](const Tensor& x) { return classification_loss(x, two_class(y), spec); });
  }
  Tensor pred({5});
  for (double& v : pred.data) v = rng.normal();
  const std::vector<double> target{1, -2, 0, 3, 1};
  const std::vector<bool> mask{true, false, true, true, false};
  check(pred, [&](const Tensor& x) { return displacement_loss(x, target, mask); });
  Tensor logits({3, 18});
  for (double& v : logits.data) v = rng.normal();
  const std::vector<std::array<int, 2>> gt{{1, 8}, {0, 3}, {4, 4}};
  const std::vector<std::array<bool, 2>> gm{{true, false}, {true, true}, {false, true}};
  check(logits, [&](const Tensor& x) { return grasp_loss(x, gt, gm); });
}

TEST_CASE("displacement loss is the masked mean squared error") {
  const auto l = displacement_loss(Tensor({3, 1}, {1.0, 5.0, -1.0}), {0.0, 0.0, 1.0}, {true, false, true});
  CHECK(l.value == doctest::Approx((1.0 + 4.0) / 2));
  CHECK(displacement_loss(Tensor({2}), {1, 1}, {false, false}).value == 0.0);
  CHECK_THROWS(displacement_loss(Tensor({2}), {1}, {true}));
}

TEST_CASE("grasp loss matches the reference and vanishes under a full mask") {
  Rng rng(7);
  Tensor logits({4, 18});
  for (double& v : logits.data) v = 3 * rng.normal();
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 4; ++i) rows.emplace_back(logits.data.begin() + 18 * i, logits.data.begin() + 18 * (i + 1));
  const std::vector<std::array<int, 2>> y{{0, 1}, {2, 8}, {5, 5}, {7, 0}};
  const std::vector<std::array<bool, 2>> m{{true, true}, {false, true}, {true, false}, {true, true}};
  CHECK(grasp_loss(logits, y, m).value == doctest::Approx(oracle::grasp(rows, y, m)).epsilon(1e-12));

  const std::vector<std::array<bool, 2>> none(4, {false, false});
  const auto masked = grasp_loss(logits, y, none);
  CHECK(masked.value == 0.0);
  CHECK(std::all_of(masked.grad.data.begin(), masked.grad.data.end(), [](double g) { return g == 0.0; }));
  CHECK_THROWS(grasp_loss(logits, {{0, 9}, {0, 0}, {0, 0}, {0, 0}}, m));
}

TEST_CASE("total loss combines the parts and is linear in the grasp weight") {
  const LossParts parts{0.5, 0.25, 2.0};
  CHECK(total_loss(parts, 0.2) == 0.5 + 0.25 + 0.2 * 2.0);
  CHECK(total_loss(parts, 0.0) == 0.75);
  // Two-point check: L(a) - L(0) = a * grasp.
  CHECK(total_loss(parts, 1.0) - total_loss(parts, 0.0) == 2.0);
  CHECK_THROWS_AS(total_loss({std::nan(""), 0, 0}, 0.2), std::domain_error);
  CHECK_THROWS_AS(total_loss({0, std::numeric_limits<double>::infinity(), 0}, 0.2), std::domain_error);
}

TEST_CASE("losses are non-negative") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p, y;
    for (int i = 0; i < 4; ++i) {
      p.push_back(rng.uniform());
      y.push_back(rng.uniform());
    }
    CHECK(classification_loss(two_class(p), two_class(y), {}).value >= 0);
    Tensor logits({1, 18});
    for (double& v : logits.data) v = rng.normal();
    CHECK(grasp_loss(logits, {{rng.uniform_int(0, 8), 0}}, {{true, false}}).value >= 0);
  }
}
