#include "touchspot/model.hpp"

#include <cassert>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "touchspot/config_io.hpp"
#include "touchspot/data.hpp"

namespace touchspot {

using ag::Tape;
using ag::Var;

FeatureMap::FeatureMap(Tensor g) : grid(std::move(g)) {
  if (grid.rank() != 3) throw std::invalid_argument("FeatureMap must be [H, W, C], got " + shape_string(grid.shape));
  if (!grid.all_finite()) throw std::invalid_argument("FeatureMap contains non-finite values");
}

Tensor sinusoidal_pos_embedding(int h, int w, int c) {
  if (c <= 0 || c % 4 != 0) throw std::invalid_argument("sinusoidal_pos_embedding: channels must be divisible by 4");
  const int quarter = c / 4;
  Tensor out({h, w, c});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* v = out.data.data() + (static_cast<size_t>(y) * w + x) * c;
      for (int i = 0; i < quarter; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / quarter);
        v[2 * i] = std::sin(y * freq);
        v[2 * i + 1] = std::cos(y * freq);
        v[c / 2 + 2 * i] = std::sin(x * freq);
        v[c / 2 + 2 * i + 1] = std::cos(x * freq);
      }
    }
  }
  return out;
}

ag::Parameter& ParameterSet::add(const std::string& name, Tensor value) {
  if (find(name)) throw std::invalid_argument("duplicate parameter " + name);
  params_.push_back(std::make_unique<ag::Parameter>(name, std::move(value)));
  return *params_.back();
}

ag::Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const ag::Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

std::vector<ag::Parameter*> ParameterSet::all() {
  std::vector<ag::Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const ag::Parameter*> ParameterSet::all() const {
  std::vector<const ag::Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

size_t ParameterSet::num_scalars() const {
  size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

namespace {

Tensor random_normal(std::vector<int> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = stddev * rng.normal();
  return t;
}

void require_finite(const Var& v, const char* stage) {
  if (!v.value().all_finite()) {
    throw std::runtime_error(std::string("hice_forward: non-finite values after ") + stage);
  }
}

}  // namespace

ConvBackbone::ConvBackbone(ParameterSet& ps, const std::string& prefix, int in_channels, int width, int out_channels,
                           int downscale, Rng& rng) {
  int depth = 0;
  while ((1 << depth) < downscale) ++depth;
  const int layers = std::max(depth, 1);
  int cin = in_channels;
  for (int i = 0; i < layers; ++i) {
    const int cout = i == layers - 1 ? out_channels : width << i;
    const int fan_in = 9 * cin;
    const std::string name = prefix + ".conv" + std::to_string(i);
    weights_.push_back(&ps.add(name + ".w", random_normal({fan_in, cout}, std::sqrt(2.0 / fan_in), rng)));
    biases_.push_back(&ps.add(name + ".b", Tensor({cout})));
    cin = cout;
  }
  stride_ = depth > 0 ? 2 : 1;
}

Var ConvBackbone::forward(Tape& tape, const Var& x) const {
  Var h = x;
  for (size_t i = 0; i < weights_.size(); ++i) {
    ag::ConvSpec spec{3, 3, stride_, stride_, 1, 1};
    h = ag::conv2d(h, tape.param(*weights_[i]), tape.param(*biases_[i]), spec);
    if (i + 1 < weights_.size()) h = ag::silu(h);
  }
  return h;
}

HiceModule::HiceModule(ParameterSet& ps, int channels, int heads, int ffn_expansion, Rng& rng)
    : channels_(channels), heads_(heads) {
  if (channels % heads != 0) throw std::invalid_argument("HiceModule: channels must divide evenly across heads");
  const int c = channels;
  const double proj_std = std::sqrt(1.0 / c);
  wq = &ps.add("hice.q.w", random_normal({c, c}, proj_std, rng));
  bq = &ps.add("hice.q.b", Tensor({c}));
  wk = &ps.add("hice.k.w", random_normal({c, c}, proj_std, rng));
  bk = &ps.add("hice.k.b", Tensor({c}));
  wv = &ps.add("hice.v.w", random_normal({c, c}, proj_std, rng));
  bv = &ps.add("hice.v.b", Tensor({c}));
  id_left = &ps.add("hice.id_left", random_normal({c}, 0.5, rng));
  id_right = &ps.add("hice.id_right", random_normal({c}, 0.5, rng));
  // Zero-initialised residual branches: the module starts as the identity.
  wo = &ps.add("hice.out.w", Tensor({c, c}));
  bo = &ps.add("hice.out.b", Tensor({c}));
  w1 = &ps.add("hice.ffn1.w", random_normal({c, c * ffn_expansion}, std::sqrt(2.0 / c), rng));
  b1 = &ps.add("hice.ffn1.b", Tensor({c * ffn_expansion}));
  w2 = &ps.add("hice.ffn2.w", Tensor({c * ffn_expansion, c}));
  b2 = &ps.add("hice.ffn2.b", Tensor({c}));
}

Var HiceModule::forward(Tape& tape, const Var& f, const Var& left, const Var& right, const Grids& g,
                        ag::AttentionTrace* trace) const {
  const int c = channels_;
  if (f.value().rank() != 3 || f.value().dim(2) != c || f.value().dim(1) != g.global_h * g.global_w) {
    throw std::invalid_argument("hice_forward: global tokens " + shape_string(f.shape()) + " do not match grid");
  }
  const std::vector<int> hand_shape{f.value().dim(0), g.hand_h * g.hand_w, c};
  if (left.shape() != hand_shape || right.shape() != hand_shape) {
    throw std::invalid_argument("hice_forward: hand tokens do not match " + shape_string(hand_shape));
  }
  Var pos_global = tape.constant(
      Tensor({g.global_h * g.global_w, c}, sinusoidal_pos_embedding(g.global_h, g.global_w, c).data));
  Var pos_hand = tape.constant(Tensor({g.hand_h * g.hand_w, c}, sinusoidal_pos_embedding(g.hand_h, g.hand_w, c).data));

  Var q = ag::linear(ag::add_broadcast(f, pos_global), tape.param(*wq), tape.param(*bq));
  require_finite(q, "query projection");
  Var key_left = ag::add_broadcast(ag::add_broadcast(left, pos_hand), tape.param(*id_left));
  Var key_right = ag::add_broadcast(ag::add_broadcast(right, pos_hand), tape.param(*id_right));
  Var k = ag::linear(ag::concat(key_left, key_right, 1), tape.param(*wk), tape.param(*bk));
  require_finite(k, "key projection");
  Var v = ag::linear(ag::concat(left, right, 1), tape.param(*wv), tape.param(*bv));
  require_finite(v, "value projection");

#ifndef NDEBUG
  ag::AttentionTrace local;
  if (!trace) trace = &local;
#endif
  Var attn = ag::cross_attention(q, k, v, heads_, trace);
  require_finite(attn, "cross-attention");
#ifndef NDEBUG
  {
    const Tensor& w = trace->weights;
    const int tk = w.dim(3);
    for (size_t r = 0; r < w.size() / tk; ++r) {
      double s = 0;
      for (int j = 0; j < tk; ++j) s += w.data[r * tk + j];
      assert(std::abs(s - 1.0) <= 1e-5 && "attention row does not sum to 1");
    }
  }
#endif
  Var updated = ag::add(ag::linear(attn, tape.param(*wo), tape.param(*bo)), f);
  require_finite(updated, "attention residual");
  Var ffn = ag::linear(ag::silu(ag::linear(updated, tape.param(*w1), tape.param(*b1))), tape.param(*w2),
                       tape.param(*b2));
  Var out = ag::add(ffn, updated);
  require_finite(out, "feed-forward residual");
  return out;
}

FeatureMap hice_forward(const FeatureMap& f, const FeatureMap& left, const FeatureMap& right, const HiceModule& hice,
                        ag::AttentionTrace* trace) {
  if (left.grid.shape != right.grid.shape) throw std::invalid_argument("hice_forward: hand maps differ in shape");
  if (f.channels() != hice.channels() || left.channels() != hice.channels()) {
    throw std::invalid_argument("hice_forward: channel count does not match the module");
  }
  Tape tape;
  const int c = f.channels();
  Var fv = tape.constant(Tensor({1, f.height() * f.width(), c}, f.grid.data));
  Var lv = tape.constant(Tensor({1, left.height() * left.width(), c}, left.grid.data));
  Var rv = tape.constant(Tensor({1, right.height() * right.width(), c}, right.grid.data));
  Var out = hice.forward(tape, fv, lv, rv, {f.height(), f.width(), left.height(), left.width()}, trace);
  return FeatureMap(Tensor(f.grid.shape, out.value().data));
}

TemporalEncoderDecoder::TemporalEncoderDecoder(ParameterSet& ps, int channels, int scales, Rng& rng)
    : channels_(channels) {
  const int c = channels;
  const int fan_in = 3 * c;
  auto identity_plus_noise = [&](double stddev) {
    Tensor w = random_normal({fan_in, c}, stddev, rng);
    for (int i = 0; i < c; ++i) w.data[static_cast<size_t>(c + i) * c + i] += 1.0;
    return w;
  };
  for (int k = 0; k < scales; ++k) {
    const std::string s = std::to_string(k);
    down_.push_back({&ps.add("temporal.down" + s + ".w", random_normal({fan_in, c}, std::sqrt(2.0 / fan_in), rng)),
                     &ps.add("temporal.down" + s + ".b", Tensor({c}))});
    skip_.push_back({&ps.add("temporal.skip" + s + ".w", identity_plus_noise(0.05)),
                     &ps.add("temporal.skip" + s + ".b", Tensor({c}))});
    up_.push_back({&ps.add("temporal.up" + s + ".w", identity_plus_noise(0.05)),
                   &ps.add("temporal.up" + s + ".b", Tensor({c}))});
  }
  mix_ = {&ps.add("temporal.mix.w", identity_plus_noise(0.1)), &ps.add("temporal.mix.b", Tensor({c}))};
}

void TemporalEncoderDecoder::set_identity() {
  const int c = channels_;
  auto reset = [c](const Conv& conv) {
    std::fill(conv.w->value.data.begin(), conv.w->value.data.end(), 0.0);
    for (int i = 0; i < c; ++i) conv.w->value.data[static_cast<size_t>(c + i) * c + i] = 1.0;
    std::fill(conv.b->value.data.begin(), conv.b->value.data.end(), 0.0);
  };
  for (const auto& conv : down_) reset(conv);
  for (const auto& conv : skip_) reset(conv);
  for (const auto& conv : up_) reset(conv);
  reset(mix_);
}

Var TemporalEncoderDecoder::apply(Tape& tape, const Conv& c, const Var& x, int stride) const {
  const int b = x.value().dim(0), t = x.value().dim(1);
  Var x4 = ag::reshape(x, {b, 1, t, channels_});
  Var y = ag::conv2d(x4, tape.param(*c.w), tape.param(*c.b), ag::ConvSpec{1, 3, 1, stride, 0, 1});
  return ag::reshape(y, {b, y.value().dim(2), channels_});
}

Var TemporalEncoderDecoder::forward(Tape& tape, const Var& x) const {
  if (x.value().rank() != 3 || x.value().dim(2) != channels_) {
    throw std::invalid_argument("temporal_forward: expected [B, L, C], got " + shape_string(x.shape()));
  }
  const int len = x.value().dim(1);
  const int k_scales = scales();
  if (len < (1 << k_scales)) {
    throw std::invalid_argument("temporal_forward: L=" + std::to_string(len) + " too short for " +
                                std::to_string(k_scales) + " scales");
  }
  std::vector<Var> enc{x};
  for (int k = 0; k < k_scales; ++k) enc.push_back(ag::silu(apply(tape, down_[k], enc.back(), 2)));
  Var h = apply(tape, mix_, enc.back(), 1);
  for (int k = k_scales; k >= 1; --k) {
    const int target = enc[k - 1].value().dim(1);
    Var detail = ag::upsample_time(ag::sub(h, enc[k]), target);
    h = ag::add(apply(tape, skip_[k - 1], enc[k - 1], 1), apply(tape, up_[k - 1], detail, 1));
  }
  return h;
}

PredictionHeads::PredictionHeads(ParameterSet& ps, int channels, int grasp_hidden, Rng& rng) {
  const int c = channels;
  cls_w = &ps.add("heads.cls.w", random_normal({c, 2}, std::sqrt(1.0 / c), rng));
  cls_b = &ps.add("heads.cls.b", Tensor({2}));
  disp_w = &ps.add("heads.disp.w", random_normal({c, 1}, 0.1 * std::sqrt(1.0 / c), rng));
  disp_b = &ps.add("heads.disp.b", Tensor({1}));
  const int dims[5] = {2 * c, grasp_hidden, grasp_hidden, grasp_hidden, 2 * kNumGraspClasses};
  for (int i = 0; i < 4; ++i) {
    const std::string s = std::to_string(i);
    grasp_w.push_back(
        &ps.add("heads.grasp" + s + ".w", random_normal({dims[i], dims[i + 1]}, std::sqrt(2.0 / dims[i]), rng)));
    grasp_b.push_back(&ps.add("heads.grasp" + s + ".b", Tensor({dims[i + 1]})));
  }
}

PredictionHeads::Outputs PredictionHeads::forward(Tape& tape, const Var& temporal, const Var& hands) const {
  Outputs out;
  out.class_probs = ag::softmax(ag::linear(temporal, tape.param(*cls_w), tape.param(*cls_b)));
  out.displacement = ag::linear(temporal, tape.param(*disp_w), tape.param(*disp_b));
  Var g = hands;
  for (size_t i = 0; i < grasp_w.size(); ++i) {
    g = ag::linear(g, tape.param(*grasp_w[i]), tape.param(*grasp_b[i]));
    if (i + 1 < grasp_w.size()) g = ag::silu(g);
  }
  out.grasp_logits = g;
  return out;
}

ModelInputs prepare_inputs(const std::vector<ClipSample>& clips, const SpotConfig& cfg) {
  if (clips.empty()) throw std::invalid_argument("prepare_inputs: no clips");
  ModelInputs in;
  in.batch = static_cast<int>(clips.size());
  in.length = clips.front().length();
  const Image& first = clips.front().frames().front();
  const int h = first.height, w = first.width, p = cfg.patch_size;
  const int n = in.batch * in.length;
  in.frames = Tensor({n, h, w, 3});
  in.left_patches = Tensor({n, p, p, 9});
  in.right_patches = Tensor({n, p, p, 9});
  in.left_present.assign(n, 0.0);
  in.right_present.assign(n, 0.0);
  const size_t frame_sz = static_cast<size_t>(h) * w * 3;
  const size_t patch_px = static_cast<size_t>(p) * p;
  for (int b = 0; b < in.batch; ++b) {
    const ClipSample& clip = clips[b];
    if (clip.length() != in.length) throw std::invalid_argument("prepare_inputs: clips differ in length");
    for (int t = 0; t < in.length; ++t) {
      const size_t row = static_cast<size_t>(b) * in.length + t;
      const Image& img = clip.frames()[t];
      if (img.height != h || img.width != w) throw std::invalid_argument("prepare_inputs: frame size mismatch");
      std::copy(img.pixels.begin(), img.pixels.end(), in.frames.data.begin() + row * frame_sz);
      for (int hand = 0; hand < 2; ++hand) {
        const HandBox& box = clip.hand_boxes()[t][static_cast<HandSide>(hand)];
        if (!box.present()) continue;
        (hand == 0 ? in.left_present : in.right_present)[row] = 1.0;
        Tensor& dst = hand == 0 ? in.left_patches : in.right_patches;
        for (int k = -1; k <= 1; ++k) {
          const int src_t = std::clamp(t + k, 0, in.length - 1);
          const Image patch = extract_hand_patch(clip.frames()[src_t], box, cfg.patch_scale, p);
          for (size_t px = 0; px < patch_px; ++px) {
            for (int c = 0; c < 3; ++c) dst.data[(row * patch_px + px) * 9 + (k + 1) * 3 + c] = patch.pixels[px * 3 + c];
          }
        }
      }
    }
  }
  return in;
}

TouchSpotModel::TouchSpotModel(const SpotConfig& cfg, int frame_size) : cfg_(cfg), frame_size_(frame_size) {
  const auto problems = validate_config(cfg);
  if (!problems.empty()) throw std::invalid_argument("invalid config: " + problems.front());
  if (frame_size % cfg.backbone_downscale != 0) {
    throw std::invalid_argument("frame size must be divisible by backbone_downscale");
  }
  Rng rng(Rng::derive(cfg.seed, 0x6d6f64656cull));
  const int c = cfg.feature_dim;
  global_backbone_ = std::make_unique<ConvBackbone>(params_, "backbone.global", 3, cfg.backbone_width, c,
                                                    cfg.backbone_downscale, rng);
  hand_backbone_ = std::make_unique<ConvBackbone>(params_, "backbone.hand", 9, cfg.backbone_width, c,
                                                  cfg.backbone_downscale, rng);
  hice_ = std::make_unique<HiceModule>(params_, c, cfg.num_heads, cfg.ffn_expansion, rng);
  temporal_ = std::make_unique<TemporalEncoderDecoder>(params_, c, cfg.temporal_scales, rng);
  heads_ = std::make_unique<PredictionHeads>(params_, c, cfg.grasp_hidden, rng);
}

TouchSpotModel::BackboneOutputs TouchSpotModel::backbone_features(Tape& tape, const ModelInputs& in) const {
  const int n = in.batch * in.length;
  if (in.frames.rank() != 4 || in.frames.dim(0) != n || in.frames.dim(1) != frame_size_ ||
      in.frames.dim(2) != frame_size_ || in.frames.dim(3) != 3) {
    throw std::invalid_argument("backbone_features: frames " + shape_string(in.frames.shape) +
                                " do not match the configured frame size " + std::to_string(frame_size_));
  }
  const std::vector<int> patch_shape{n, cfg_.patch_size, cfg_.patch_size, 9};
  if (in.left_patches.shape != patch_shape || in.right_patches.shape != patch_shape) {
    throw std::invalid_argument("backbone_features: hand patches do not match " + shape_string(patch_shape));
  }
  BackboneOutputs out;
  out.global_maps = global_backbone_->forward(tape, tape.constant(in.frames));
  out.left_maps = ag::scale_rows(hand_backbone_->forward(tape, tape.constant(in.left_patches)), in.left_present);
  out.right_maps = ag::scale_rows(hand_backbone_->forward(tape, tape.constant(in.right_patches)), in.right_present);
  return out;
}

ForwardOutputs TouchSpotModel::forward(Tape& tape, const ModelInputs& in, ag::AttentionTrace* trace) const {
  ForwardOutputs out;
  const BackboneOutputs bb = backbone_features(tape, in);
  out.global_maps = bb.global_maps;
  out.left_maps = bb.left_maps;
  out.right_maps = bb.right_maps;
  const int n = in.batch * in.length;
  const int c = cfg_.feature_dim;
  const int gh = bb.global_maps.value().dim(1), gw = bb.global_maps.value().dim(2);
  const int hh = bb.left_maps.value().dim(1), hw = bb.left_maps.value().dim(2);
  Var f = ag::reshape(bb.global_maps, {n, gh * gw, c});
  Var left = ag::reshape(bb.left_maps, {n, hh * hw, c});
  Var right = ag::reshape(bb.right_maps, {n, hh * hw, c});
  out.enhanced = hice_->forward(tape, f, left, right, {gh, gw, hh, hw}, trace);
  Var pooled = ag::reshape(ag::mean_tokens(out.enhanced), {in.batch, in.length, c});
  out.temporal = ag::reshape(temporal_->forward(tape, pooled), {n, c});
  Var hands = ag::concat(ag::mean_tokens(left), ag::mean_tokens(right), 1);
  out.heads = heads_->forward(tape, out.temporal, hands);
  return out;
}

namespace {

constexpr char kCheckpointMagic[4] = {'T', 'S', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t read_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("checkpoint truncated reading " + what);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& what) {
  const std::uint32_t n = read_u32(in, what);
  if (n > (1u << 24)) throw std::runtime_error("checkpoint has implausible " + what + " length");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw std::runtime_error("checkpoint truncated reading " + what);
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TouchSpotModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kCheckpointMagic, 4);
  write_u32(out, kCheckpointVersion);
  write_string(out, to_config_text(model.config()));
  write_u32(out, static_cast<std::uint32_t>(model.frame_size()));
  const auto params = model.parameters().all();
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    write_string(out, p->name);
    write_u32(out, static_cast<std::uint32_t>(p->value.rank()));
    for (int d : p->value.shape) write_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(p->value.data.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::unique_ptr<TouchSpotModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kCheckpointMagic)) {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  const std::uint32_t version = read_u32(in, "version");
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const SpotConfig cfg = parse_config_text(read_string(in, "config"));
  const int frame_size = static_cast<int>(read_u32(in, "frame size"));
  auto model = std::make_unique<TouchSpotModel>(cfg, frame_size);
  const std::uint32_t count = read_u32(in, "parameter count");
  if (count != model->parameters().count()) {
    throw std::runtime_error("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                             std::to_string(model->parameters().count()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(in, "tensor name");
    ag::Parameter* p = model->parameters().find(name);
    if (!p) throw std::runtime_error("checkpoint tensor " + name + " is unknown to the model");
    const std::uint32_t rank = read_u32(in, "rank");
    std::vector<int> shape;
    for (std::uint32_t r = 0; r < rank && r < 8; ++r) shape.push_back(static_cast<int>(read_u32(in, "shape")));
    if (shape != p->value.shape) {
      throw std::runtime_error("checkpoint tensor " + name + " has shape " + shape_string(shape) + ", expected " +
                               shape_string(p->value.shape));
    }
    if (!in.read(reinterpret_cast<char*>(p->value.data.data()),
                 static_cast<std::streamsize>(p->value.size() * sizeof(double)))) {
      throw std::runtime_error("checkpoint truncated in tensor " + name);
    }
  }
  return model;
}

}  // namespace touchspot
