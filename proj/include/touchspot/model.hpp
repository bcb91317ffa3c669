#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "touchspot/autograd.hpp"
#include "touchspot/core.hpp"
#include "touchspot/ops.hpp"

namespace touchspot {

// Spatial grid of feature vectors, [H, W, C], all entries finite.
struct FeatureMap {
  Tensor grid;

  FeatureMap() = default;
  explicit FeatureMap(Tensor g);  // throws std::invalid_argument if not rank 3 or not finite
  int height() const { return grid.dim(0); }
  int width() const { return grid.dim(1); }
  int channels() const { return grid.dim(2); }
};

// Fixed 2D sinusoidal embedding [h, w, c]: the first c/2 channels encode the row, the last
// c/2 the column, as (sin, cos) pairs over geometric frequencies. Throws if c % 4 != 0.
Tensor sinusoidal_pos_embedding(int h, int w, int c);

// Owns named parameters with stable addresses.
class ParameterSet {
 public:
  ag::Parameter& add(const std::string& name, Tensor value);
  ag::Parameter* find(const std::string& name);
  const ag::Parameter* find(const std::string& name) const;
  std::vector<ag::Parameter*> all();
  std::vector<const ag::Parameter*> all() const;
  size_t count() const { return params_.size(); }
  size_t num_scalars() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<ag::Parameter>> params_;
};

// Strided convolutional stack, spatial downscale 2^depth, channels-last.
class ConvBackbone {
 public:
  ConvBackbone(ParameterSet& ps, const std::string& prefix, int in_channels, int width, int out_channels,
               int downscale, Rng& rng);
  // x[N, H, W, Cin] -> [N, H / downscale, W / downscale, C]
  ag::Var forward(ag::Tape& tape, const ag::Var& x) const;

 private:
  std::vector<ag::Parameter*> weights_;
  std::vector<ag::Parameter*> biases_;
  int stride_ = 2;
};

// Hand-informed cross-attention enhancement: global tokens query left/right hand tokens.
class HiceModule {
 public:
  HiceModule(ParameterSet& ps, int channels, int heads, int ffn_expansion, Rng& rng);

  struct Grids {
    int global_h, global_w, hand_h, hand_w;
  };

  // f[N, H*W, C], left/right[N, Hp*Wp, C] -> [N, H*W, C]. Throws std::runtime_error naming the
  // stage if any intermediate value is non-finite.
  ag::Var forward(ag::Tape& tape, const ag::Var& f, const ag::Var& left, const ag::Var& right, const Grids& grids,
                  ag::AttentionTrace* trace = nullptr) const;

  int channels() const { return channels_; }
  int heads() const { return heads_; }

  ag::Parameter* wq;
  ag::Parameter* bq;
  ag::Parameter* wk;
  ag::Parameter* bk;
  ag::Parameter* wv;
  ag::Parameter* bv;
  ag::Parameter* id_left;   // [C] hand identity embeddings
  ag::Parameter* id_right;
  ag::Parameter* wo;
  ag::Parameter* bo;
  ag::Parameter* w1;
  ag::Parameter* b1;
  ag::Parameter* w2;
  ag::Parameter* b2;

 private:
  int channels_;
  int heads_;
};

// Single-map convenience wrapper around HiceModule::forward.
FeatureMap hice_forward(const FeatureMap& f, const FeatureMap& left, const FeatureMap& right, const HiceModule& hice,
                        ag::AttentionTrace* trace = nullptr);

// Multi-scale temporal encoder-decoder over [B, L, C]. The encoder halves the length with
// strided convolutions; each decoder level adds the upsampled refinement of the level below
// to a convolved skip of the encoder features at its own scale.
class TemporalEncoderDecoder {
 public:
  TemporalEncoderDecoder(ParameterSet& ps, int channels, int scales, Rng& rng);

  ag::Var forward(ag::Tape& tape, const ag::Var& x) const;
  // Sets every kernel to the identity at the centre tap and every bias to zero.
  void set_identity();
  int scales() const { return static_cast<int>(down_.size()); }

 private:
  struct Conv {
    ag::Parameter* w;
    ag::Parameter* b;
  };
  ag::Var apply(ag::Tape& tape, const Conv& c, const ag::Var& x, int stride) const;

  int channels_;
  std::vector<Conv> down_;
  std::vector<Conv> skip_;
  std::vector<Conv> up_;
  Conv mix_;
};

class PredictionHeads {
 public:
  PredictionHeads(ParameterSet& ps, int channels, int grasp_hidden, Rng& rng);

  struct Outputs {
    ag::Var class_probs;  // [N, 2], softmax rows (background, touch)
    ag::Var displacement; // [N, 1]
    ag::Var grasp_logits; // [N, 2 * 9]: left then right
  };

  // temporal[N, C]; hands[N, 2C] = left pooled ++ right pooled.
  Outputs forward(ag::Tape& tape, const ag::Var& temporal, const ag::Var& hands) const;

  ag::Parameter* cls_w;
  ag::Parameter* cls_b;
  ag::Parameter* disp_w;
  ag::Parameter* disp_b;
  std::vector<ag::Parameter*> grasp_w;
  std::vector<ag::Parameter*> grasp_b;
};

// Batched network input: N = batch * length frames in clip-major order.
struct ModelInputs {
  int batch = 0;
  int length = 0;
  Tensor frames;         // [N, H, W, 3]
  Tensor left_patches;   // [N, P, P, 9]: previous, current, next frame crops
  Tensor right_patches;  // [N, P, P, 9]
  std::vector<double> left_present;  // [N] 1 or 0
  std::vector<double> right_present;
};

ModelInputs prepare_inputs(const std::vector<ClipSample>& clips, const SpotConfig& cfg);

struct ForwardOutputs {
  PredictionHeads::Outputs heads;
  ag::Var global_maps;  // [N, h, w, C] backbone output
  ag::Var left_maps;    // [N, hp, wp, C], zero where the hand is absent
  ag::Var right_maps;
  ag::Var enhanced;     // [N, h*w, C]
  ag::Var temporal;     // [N, C]
};

class TouchSpotModel {
 public:
  TouchSpotModel(const SpotConfig& cfg, int frame_size);

  const SpotConfig& config() const { return cfg_; }
  int frame_size() const { return frame_size_; }

  // Global maps per frame plus per-hand maps (zeroed for absent hands).
  struct BackboneOutputs {
    ag::Var global_maps;
    ag::Var left_maps;
    ag::Var right_maps;
  };
  BackboneOutputs backbone_features(ag::Tape& tape, const ModelInputs& in) const;

  ForwardOutputs forward(ag::Tape& tape, const ModelInputs& in, ag::AttentionTrace* trace = nullptr) const;

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  HiceModule& hice() { return *hice_; }
  TemporalEncoderDecoder& temporal() { return *temporal_; }
  PredictionHeads& heads() { return *heads_; }

 private:
  SpotConfig cfg_;
  int frame_size_;
  ParameterSet params_;
  std::unique_ptr<ConvBackbone> global_backbone_;
  std::unique_ptr<ConvBackbone> hand_backbone_;
  std::unique_ptr<HiceModule> hice_;
  std::unique_ptr<TemporalEncoderDecoder> temporal_;
  std::unique_ptr<PredictionHeads> heads_;
};

// Checkpoint: "TSCK", u32 version, config text, frame size, then named float64 tensors.
void save_checkpoint(const std::filesystem::path& path, const TouchSpotModel& model);
std::unique_ptr<TouchSpotModel> load_checkpoint(const std::filesystem::path& path);

}  // namespace touchspot
