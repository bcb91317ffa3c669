#include <doctest.h>

#include <cmath>
#include <numbers>

#include "touchspot/synth.hpp"
#include "touchspot/train.hpp"

using namespace touchspot;

namespace {

SpotConfig tiny_config() {
  SpotConfig cfg = SpotConfig::desk_preset();
  cfg.clip_length = 8;
  cfg.displacement_window = 1;
  cfg.feature_dim = 16;
  cfg.backbone_width = 8;
  cfg.grasp_hidden = 16;
  cfg.patch_size = 8;
  cfg.batch_size = 4;
  cfg.clips_per_epoch = 16;
  cfg.epochs = 3;
  cfg.warmup_epochs = 1;
  cfg.learning_rate = 3e-3;
  return cfg;
}

std::vector<Video> videos(int n, std::uint64_t seed, int frames = 24) {
  synth::SynthParams p;
  p.num_frames = frames;
  p.seed = seed;
  return synth::to_videos(synth::generate_dataset(n, p));
}

}  // namespace

TEST_CASE("AdamW matches a hand-computed update") {
  ag::Parameter w("w", Tensor({1, 2}, {1.0, -2.0}));
  ag::Parameter b("b", Tensor({1}, {0.5}));
  AdamW opt(0.1);
  const double lr = 0.01;
  double m[3] = {0, 0, 0}, v[3] = {0, 0, 0};
  double x[3] = {1.0, -2.0, 0.5};
  const double grads[2][3] = {{0.3, -0.1, 2.0}, {-0.2, 0.4, 1.0}};
  for (int t = 1; t <= 2; ++t) {
    w.grad.data = {grads[t - 1][0], grads[t - 1][1]};
    b.grad.data = {grads[t - 1][2]};
    opt.step({&w, &b}, lr);
    for (int i = 0; i < 3; ++i) {
      const double g = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      if (i < 2) x[i] -= lr * 0.1 * x[i];  // only the matrix decays
      x[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  CHECK(w.value.data[0] == doctest::Approx(x[0]).epsilon(1e-14));
  CHECK(w.value.data[1] == doctest::Approx(x[1]).epsilon(1e-14));
  CHECK(b.value.data[0] == doctest::Approx(x[2]).epsilon(1e-14));
  CHECK(opt.steps() == 2);
  CHECK_THROWS(opt.step({&w}, lr));
}

TEST_CASE("learning rate warms up linearly then follows a cosine") {
  SpotConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.warmup_epochs = 2;
  cfg.epochs = 6;
  const long spe = 10;
  CHECK(learning_rate_at(cfg, 0, spe) == doctest::Approx(1.0 / 20));
  CHECK(learning_rate_at(cfg, 19, spe) == doctest::Approx(1.0));
  CHECK(learning_rate_at(cfg, 20, spe) == doctest::Approx(1.0));
  CHECK(learning_rate_at(cfg, 40, spe) == doctest::Approx(0.5));
  CHECK(learning_rate_at(cfg, 30, spe) == doctest::Approx(0.5 * (1 + std::cos(std::numbers::pi / 4))));
  CHECK(learning_rate_at(cfg, 60, spe) == doctest::Approx(0.0).scale(1.0));
  for (long s = 21; s < 60; ++s) CHECK(learning_rate_at(cfg, s, spe) < learning_rate_at(cfg, s - 1, spe));
}

TEST_CASE("train/validation splits follow annotation tags or the tail fraction") {
  auto vs = videos(10, 1, 16);
  SpotConfig cfg;
  cfg.val_fraction = 0.25;
  auto s = split_train_val(vs, cfg);
  CHECK(s.train.size() == 8);
  CHECK(s.val.size() == 2);
  CHECK(s.val[0].annotation.video_id == vs[8].annotation.video_id);

  vs[0].annotation.split = "val";
  vs[1].annotation.split = "test";
  s = split_train_val(vs, cfg);
  CHECK(s.val.size() == 1);
  CHECK(s.train.size() == 8);

  vs[2].annotation.video_id = vs[3].annotation.video_id;
  CHECK_THROWS(split_train_val(vs, cfg));
}

TEST_CASE("sliding-window prediction keeps the best window per frame") {
  SpotConfig cfg = tiny_config();
  TouchSpotModel model(cfg, 32);
  const auto v = videos(1, 2, 21)[0];
  const FrameScores fs = predict_video(model, v);
  REQUIRE(fs.scores.size() == 21);
  // Windows start at 0, 4, 8, 12 and the end-aligned 13.
  std::vector<double> best(21, -1.0), off(21, 0.0);
  for (int start : {0, 4, 8, 12, 13}) {
    ag::Tape tape;
    const auto out = model.forward(tape, prepare_inputs({make_clip(v, start, 8)}, cfg));
    for (int l = 0; l < 8; ++l) {
      const double s = out.heads.class_probs.value().data[2 * l + 1];
      if (s > best[start + l]) {
        best[start + l] = s;
        off[start + l] = out.heads.displacement.value().data[l];
      }
    }
  }
  for (int t = 0; t < 21; ++t) {
    CHECK(fs.scores[t] == doctest::Approx(best[t]).epsilon(1e-12));
    CHECK(fs.offsets[t] == doctest::Approx(off[t]).epsilon(1e-12));
  }
  CHECK_THROWS(predict_video(model, videos(1, 3, 6)[0]));
}

TEST_CASE("seeded training runs are identical") {
  const SpotConfig cfg = tiny_config();
  const auto train = videos(6, 4), val = videos(2, 5);
  const auto a = train_model(cfg, train, val);
  const auto b = train_model(cfg, train, val);
  REQUIRE(a.log.size() == 3);
  for (size_t i = 0; i < a.log.size(); ++i) CHECK(format_epoch_log(a.log[i]) == format_epoch_log(b.log[i]));
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(a.log[a.best_epoch].val_map == a.best_val_map);
  for (const auto& e : a.log) CHECK(e.val_map <= a.best_val_map);
}

TEST_CASE("a zero grasp weight logs zero grasp loss") {
  SpotConfig cfg = tiny_config();
  cfg.lambda_g = 0;
  cfg.epochs = 2;
  const auto r = train_model(cfg, videos(4, 6), {});
  for (const auto& e : r.log) {
    CHECK(e.grasp == 0.0);
    CHECK(e.total == doctest::Approx(e.classification + e.displacement));
  }
  CHECK(r.best_epoch == 1);
}

TEST_CASE("training reduces the loss on synthetic data") {
  SpotConfig cfg = tiny_config();
  cfg.epochs = 6;
  cfg.clips_per_epoch = 32;
  const auto r = train_model(cfg, videos(12, 7), {});
  CHECK(r.log.back().total < r.log.front().total);
}

TEST_CASE("training surfaces data errors before the first step") {
  SpotConfig cfg = tiny_config();
  CHECK_THROWS_WITH(train_model(cfg, {}, {}), doctest::Contains("no training videos"));
  cfg.clip_length = 64;
  CHECK_THROWS(train_model(cfg, videos(2, 8), {}));
  cfg = tiny_config();
  cfg.batch_size = 0;
  CHECK_THROWS_WITH(train_model(cfg, videos(2, 8), {}), doctest::Contains("invalid config"));
}

TEST_CASE("random-score baseline and model evaluation are deterministic") {
  const auto vs = videos(4, 9);
  const PostprocessOptions opt;
  const auto a = evaluate_random_scores(vs, opt, {0, 1, 2}, 3);
  const auto b = evaluate_random_scores(vs, opt, {0, 1, 2}, 3);
  CHECK(a.map == b.map);
  CHECK(a.map >= 0.0);
  CHECK(a.map <= 1.0);
  CHECK_THROWS(pair_with_ground_truth({{"nope", {}}}, {vs[0].annotation}));
}
