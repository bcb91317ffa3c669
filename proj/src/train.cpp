#include "touchspot/train.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <stdexcept>

namespace touchspot {

AdamW::AdamW(double weight_decay, double beta1, double beta2, double eps)
    : wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

void AdamW::step(const std::vector<ag::Parameter*>& params, double lr) {
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("AdamW: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    ag::Parameter& p = *params[i];
    const bool decay = p.value.rank() == 2 && wd_ > 0;
    double* m = m_[i].data.data();
    double* v = v_[i].data.data();
    for (size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad.data[j];
      m[j] = b1_ * m[j] + (1 - b1_) * g;
      v[j] = b2_ * v[j] + (1 - b2_) * g * g;
      double& w = p.value.data[j];
      if (decay) w -= lr * wd_ * w;
      w -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

double learning_rate_at(const SpotConfig& cfg, long step, long steps_per_epoch) {
  const long warmup = static_cast<long>(cfg.warmup_epochs) * steps_per_epoch;
  const long total = static_cast<long>(cfg.epochs) * steps_per_epoch;
  if (step < warmup) return cfg.learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total <= warmup) return cfg.learning_rate;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

BatchLoss batch_loss(TouchSpotModel& model, const std::vector<ClipSample>& clips, bool backward) {
  const SpotConfig& cfg = model.config();
  const ModelInputs in = prepare_inputs(clips, cfg);
  const int len = in.length;
  const int n = in.batch * len;

  Tensor y_c({n, 2});
  std::vector<double> y_d(n, 0.0);
  std::vector<bool> d_mask(n, false);
  std::vector<std::array<int, 2>> y_g(n);
  std::vector<std::array<bool, 2>> g_mask(n);
  for (int b = 0; b < in.batch; ++b) {
    const SupervisionTargets t = build_targets(clips[b], cfg);
    std::copy(t.y_c_soft.data.begin(), t.y_c_soft.data.end(), y_c.data.begin() + static_cast<long>(b) * len * 2);
    for (int l = 0; l < len; ++l) {
      y_d[b * len + l] = t.y_d[l];
      d_mask[b * len + l] = t.d_mask[l];
      y_g[b * len + l] = t.y_g[l];
      g_mask[b * len + l] = t.g_mask[l];
    }
  }

  ag::Tape tape;
  const ForwardOutputs out = model.forward(tape, in);
  const LossWithGrad lc =
      classification_loss(out.heads.class_probs.value(), y_c, ClassificationLossSpec::from_config(cfg));
  const LossWithGrad ld = displacement_loss(out.heads.displacement.value(), y_d, d_mask);
  // Without grasp weight the head is unsupervised and its loss is reported as 0.
  const LossWithGrad lg = cfg.lambda_g == 0.0 ? LossWithGrad{0.0, Tensor(out.heads.grasp_logits.shape())}
                                              : grasp_loss(out.heads.grasp_logits.value(), y_g, g_mask);

  BatchLoss r;
  r.parts = {lc.value, ld.value, lg.value};
  r.total = total_loss(r.parts, cfg.lambda_g);
  if (backward) {
    ag::Var c = ag::scalar_function(out.heads.class_probs, lc.value, lc.grad);
    ag::Var d = ag::scalar_function(out.heads.displacement, ld.value, ld.grad);
    ag::Var g = ag::scalar_function(out.heads.grasp_logits, lg.value, lg.grad);
    tape.backward(ag::add(ag::add(c, d), ag::scale(g, cfg.lambda_g)));
  }
  return r;
}

std::string format_epoch_log(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "epoch %d  loss %.17g  cls %.17g  disp %.17g  grasp %.17g  val_map %.6f  lr %.6g",
                e.epoch, e.total, e.classification, e.displacement, e.grasp, e.val_map, e.lr);
  return buf;
}

DataSplit split_train_val(std::vector<Video> videos, const SpotConfig& cfg) {
  std::vector<VideoAnnotation> anns;
  for (const auto& v : videos) anns.push_back(v.annotation);
  check_unique_video_ids(anns);
  DataSplit s;
  const bool has_split = std::any_of(videos.begin(), videos.end(),
                                     [](const Video& v) { return !v.annotation.split.empty(); });
  if (has_split) {
    for (auto& v : videos) {
      if (v.annotation.split == "val") {
        s.val.push_back(std::move(v));
      } else if (v.annotation.split != "test") {
        s.train.push_back(std::move(v));
      }
    }
  } else {
    const size_t n_val = static_cast<size_t>(std::floor(cfg.val_fraction * static_cast<double>(videos.size())));
    const size_t n_train = videos.size() - n_val;
    for (size_t i = 0; i < videos.size(); ++i) (i < n_train ? s.train : s.val).push_back(std::move(videos[i]));
  }
  std::set<std::string> ids;
  for (const auto& v : s.train) ids.insert(v.annotation.video_id);
  for (const auto& v : s.val) {
    if (ids.count(v.annotation.video_id)) throw std::logic_error("video " + v.annotation.video_id + " is in both splits");
  }
  return s;
}

namespace {

int common_frame_size(const std::vector<Video>& videos) {
  if (videos.empty()) throw std::invalid_argument("no training videos");
  const int size = videos.front().frames.height;
  for (const auto& v : videos) {
    if (v.frames.height != size || v.frames.width != size) {
      throw std::invalid_argument("video " + v.annotation.video_id + " is not " + std::to_string(size) + "x" +
                                  std::to_string(size));
    }
  }
  return size;
}

void copy_weights(const TouchSpotModel& from, TouchSpotModel& to) {
  const auto src = from.parameters().all();
  const auto dst = to.parameters().all();
  for (size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
}

}  // namespace

TrainResult train_model(const SpotConfig& cfg, const std::vector<Video>& train, const std::vector<Video>& val,
                        const TrainOptions& opts) {
  const auto problems = validate_config(cfg);
  if (!problems.empty()) throw std::invalid_argument("invalid config: " + problems.front());
  const int frame_size = common_frame_size(train);
  std::vector<VideoAnnotation> train_anns;
  for (const auto& v : train) train_anns.push_back(v.annotation);
  {
    Rng probe(0);
    sample_window(train_anns, cfg, probe);  // surfaces "no eligible video" before training starts
  }

  auto model = std::make_unique<TouchSpotModel>(cfg, frame_size);
  TrainResult result;
  result.model = std::make_unique<TouchSpotModel>(cfg, frame_size);
  AdamW opt(cfg.weight_decay);
  Rng rng(Rng::derive(cfg.seed, 0x73616d706c65ull));
  const PostprocessOptions post = PostprocessOptions::from_config(cfg);
  const long steps_per_epoch = std::max(1, (cfg.clips_per_epoch + cfg.batch_size - 1) / cfg.batch_size);
  const auto params = model->parameters().all();

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    for (long s = 0; s < steps_per_epoch; ++s, ++step) {
      std::vector<ClipSample> batch;
      for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(sample_clip(train, cfg, rng));
      model->parameters().zero_grad();
      const BatchLoss loss = batch_loss(*model, batch, true);
      log.lr = learning_rate_at(cfg, step, steps_per_epoch);
      opt.step(params, log.lr);
      log.total += loss.total;
      log.classification += loss.parts.classification;
      log.displacement += loss.parts.displacement;
      log.grasp += loss.parts.grasp;
    }
    const double k = static_cast<double>(steps_per_epoch);
    log.total /= k;
    log.classification /= k;
    log.displacement /= k;
    log.grasp /= k;
    log.val_map = val.empty() ? 0.0 : evaluate_model(*model, val, post, cfg.tolerances).map;
    // Without validation data the latest epoch is kept.
    if (val.empty() || log.val_map > result.best_val_map) {
      result.best_val_map = log.val_map;
      result.best_epoch = epoch;
      copy_weights(*model, *result.model);
      if (!opts.checkpoint.empty()) save_checkpoint(opts.checkpoint, *result.model);
    }
    result.log.push_back(log);
    if (opts.on_epoch) opts.on_epoch(log);
  }
  return result;
}

FrameScores predict_video(const TouchSpotModel& model, const Video& video) {
  const SpotConfig& cfg = model.config();
  const int len = cfg.clip_length;
  const int frames = video.annotation.frame_count;
  if (frames < len) {
    throw std::invalid_argument("video " + video.annotation.video_id + " has " + std::to_string(frames) +
                                " frames, fewer than L=" + std::to_string(len));
  }
  const int stride = std::max(1, len / 2);
  std::vector<int> starts;
  for (int s = 0; s + len <= frames; s += stride) starts.push_back(s);
  if (starts.back() + len < frames) starts.push_back(frames - len);

  FrameScores out{std::vector<double>(frames, -1.0), std::vector<double>(frames, 0.0)};
  constexpr size_t kChunk = 8;
  for (size_t i = 0; i < starts.size(); i += kChunk) {
    std::vector<ClipSample> clips;
    const size_t end = std::min(starts.size(), i + kChunk);
    for (size_t j = i; j < end; ++j) clips.push_back(make_clip(video, starts[j], len));
    ag::Tape tape;
    const ForwardOutputs fo = model.forward(tape, prepare_inputs(clips, cfg));
    const Tensor& probs = fo.heads.class_probs.value();
    const Tensor& disp = fo.heads.displacement.value();
    for (size_t j = i; j < end; ++j) {
      for (int l = 0; l < len; ++l) {
        const size_t row = (j - i) * len + l;
        const int t = starts[j] + l;
        const double score = probs.data[row * 2 + kTouchClass];
        if (score > out.scores[t]) {
          out.scores[t] = score;
          out.offsets[t] = disp.data[row];
        }
      }
    }
  }
  return out;
}

ScoreMap predict_scores(const TouchSpotModel& model, const std::vector<Video>& videos,
                        const PostprocessOptions& opt) {
  ScoreMap out;
  for (const auto& v : videos) {
    VideoScores s;
    s.raw = predict_video(model, v);
    s.refined = refine_scores(s.raw, opt);
    out[v.annotation.video_id] = std::move(s);
  }
  return out;
}

DetectionMap detections_from_scores(const ScoreMap& scores, const PostprocessOptions& opt) {
  DetectionMap out;
  for (const auto& [vid, s] : scores) out[vid] = detect_events(s.raw, opt);
  return out;
}

std::vector<VideoPredictions> pair_with_ground_truth(const DetectionMap& detections,
                                                     const std::vector<VideoAnnotation>& annotations) {
  std::vector<VideoPredictions> out;
  std::set<std::string> known;
  for (const auto& a : annotations) {
    known.insert(a.video_id);
    VideoPredictions vp{a.video_id, {}, a.events};
    if (auto it = detections.find(a.video_id); it != detections.end()) vp.predictions = it->second;
    out.push_back(std::move(vp));
  }
  for (const auto& [vid, dets] : detections) {
    if (!known.count(vid)) throw std::invalid_argument("detections reference unknown video " + vid);
  }
  return out;
}

MapResult evaluate_model(const TouchSpotModel& model, const std::vector<Video>& videos,
                         const PostprocessOptions& opt, const std::vector<int>& tolerances) {
  std::vector<VideoAnnotation> anns;
  for (const auto& v : videos) anns.push_back(v.annotation);
  const DetectionMap dets = detections_from_scores(predict_scores(model, videos, opt), opt);
  return map_over_tolerances(pair_with_ground_truth(dets, anns), tolerances);
}

MapResult evaluate_random_scores(const std::vector<Video>& videos, const PostprocessOptions& opt,
                                 const std::vector<int>& tolerances, std::uint64_t seed) {
  Rng rng(seed);
  DetectionMap dets;
  std::vector<VideoAnnotation> anns;
  for (const auto& v : videos) {
    anns.push_back(v.annotation);
    FrameScores fs{std::vector<double>(v.annotation.frame_count), std::vector<double>(v.annotation.frame_count, 0.0)};
    for (double& s : fs.scores) s = rng.uniform();
    dets[v.annotation.video_id] = detect_events(fs, opt);
  }
  return map_over_tolerances(pair_with_ground_truth(dets, anns), tolerances);
}

}  // namespace touchspot
