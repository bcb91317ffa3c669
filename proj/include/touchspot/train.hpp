#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "touchspot/data.hpp"
#include "touchspot/eval.hpp"
#include "touchspot/model.hpp"
#include "touchspot/postprocess.hpp"
#include "touchspot/supervision.hpp"

namespace touchspot {

// Decoupled weight decay Adam. Decay applies to rank-2 weights only.
class AdamW {
 public:
  explicit AdamW(double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(const std::vector<ag::Parameter*>& params, double lr);
  long steps() const { return t_; }

 private:
  double wd_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Linear warm-up over warmup_epochs, then cosine decay to zero at the end of training.
double learning_rate_at(const SpotConfig& cfg, long step, long steps_per_epoch);

struct BatchLoss {
  LossParts parts;
  double total = 0;
};

// Forward, losses and (when `backward`) gradient accumulation into the model parameters.
BatchLoss batch_loss(TouchSpotModel& model, const std::vector<ClipSample>& clips, bool backward);

struct EpochLog {
  int epoch = 0;
  double total = 0;
  double classification = 0;
  double displacement = 0;
  double grasp = 0;
  double val_map = 0;
  double lr = 0;
};
std::string format_epoch_log(const EpochLog& e);

struct DataSplit {
  std::vector<Video> train;
  std::vector<Video> val;
};
// Uses the annotation `split` field when any video carries one ("val" goes to validation,
// everything else except "test" to training); otherwise the last val_fraction of videos
// become validation. Throws if a video id lands in both.
DataSplit split_train_val(std::vector<Video> videos, const SpotConfig& cfg);

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_map = -1;
  std::unique_ptr<TouchSpotModel> model;  // weights from the best epoch
};

struct TrainOptions {
  std::function<void(const EpochLog&)> on_epoch;
  std::filesystem::path checkpoint;  // written whenever validation mAP improves, if set
};

TrainResult train_model(const SpotConfig& cfg, const std::vector<Video>& train, const std::vector<Video>& val,
                        const TrainOptions& opts = {});

// Sliding windows of length L with stride L/2, the last one aligned to the video end;
// frames covered twice keep the larger touch score and that window's offset.
FrameScores predict_video(const TouchSpotModel& model, const Video& video);

ScoreMap predict_scores(const TouchSpotModel& model, const std::vector<Video>& videos,
                        const PostprocessOptions& opt);
DetectionMap detections_from_scores(const ScoreMap& scores, const PostprocessOptions& opt);

std::vector<VideoPredictions> pair_with_ground_truth(const DetectionMap& detections,
                                                     const std::vector<VideoAnnotation>& annotations);

MapResult evaluate_model(const TouchSpotModel& model, const std::vector<Video>& videos,
                         const PostprocessOptions& opt, const std::vector<int>& tolerances);

// Baseline: every frame scored uniformly at random, then the same post-processing.
MapResult evaluate_random_scores(const std::vector<Video>& videos, const PostprocessOptions& opt,
                                 const std::vector<int>& tolerances, std::uint64_t seed);

}  // namespace touchspot
