#include "touchspot/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace touchspot {

namespace {

std::vector<Video> generate_split(int n, synth::SynthParams params, std::uint64_t stream, const std::string& prefix) {
  params.seed = Rng::derive(params.seed, stream);
  std::vector<Video> videos = synth::to_videos(synth::generate_dataset(n, params), prefix);
  for (auto& v : videos) v.annotation.video_id = prefix + "_" + v.annotation.video_id;
  return videos;
}

}  // namespace

SyntheticBenchmark make_benchmark(int n_train, int n_test, const synth::SynthParams& params) {
  if (n_train < 1 || n_test < 1) throw std::invalid_argument("benchmark needs at least one train and one test video");
  SyntheticBenchmark b;
  b.train = generate_split(n_train, params, 1, "train");
  b.test = generate_split(n_test, params, 2, "test");
  // Validation is carved from the training videos by fraction, not by split tag.
  for (auto& v : b.train) v.annotation.split.clear();
  return b;
}

AblationAxis ablation_axis_from_string(const std::string& s) {
  if (s == "components") return AblationAxis::kComponents;
  if (s == "clip_length") return AblationAxis::kClipLength;
  if (s == "context") return AblationAxis::kContext;
  throw std::invalid_argument("unknown ablation axis '" + s + "' (expected components, clip_length or context)");
}

const char* to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::kComponents: return "components";
    case AblationAxis::kClipLength: return "clip_length";
    case AblationAxis::kContext: return "context";
  }
  return "?";
}

std::vector<AblationVariant> ablation_variants(AblationAxis axis, const SpotConfig& base, double scale) {
  std::vector<AblationVariant> out;
  switch (axis) {
    case AblationAxis::kComponents: {
      SpotConfig no_grasp = base;
      no_grasp.lambda_g = 0;
      SpotConfig no_tor = base;
      no_tor.use_tor = false;
      SpotConfig no_soft = base;
      no_soft.use_soft_labels = false;
      SpotConfig only_hice = base;
      only_hice.lambda_g = 0;
      only_hice.use_tor = false;
      only_hice.use_soft_labels = false;
      out = {{"w/o Grasp Loss", no_grasp},
             {"w/o Gauss-TOR", no_tor},
             {"w/o Soft Label", no_soft},
             {"only HiCE", only_hice},
             {"Full model", base}};
      break;
    }
    case AblationAxis::kClipLength: {
      if (!(scale > 0)) throw std::invalid_argument("clip length scale must be > 0");
      for (int l : {25, 40, 50, 80}) {
        SpotConfig c = base;
        c.clip_length = static_cast<int>(std::lround(l * scale));
        out.push_back({"L=" + std::to_string(c.clip_length), c});
      }
      break;
    }
    case AblationAxis::kContext: {
      for (double s : {1.0, 1.2, 1.5}) {
        SpotConfig c = base;
        c.patch_scale = s;
        char name[32];
        std::snprintf(name, sizeof(name), "context %.1f", s);
        out.push_back({name, c});
      }
      break;
    }
  }
  for (const auto& v : out) {
    const auto problems = validate_config(v.cfg);
    if (!problems.empty()) throw std::invalid_argument("ablation row '" + v.name + "': " + problems.front());
  }
  return out;
}

MapResult mean_map(const std::vector<MapResult>& runs) {
  if (runs.empty()) throw std::invalid_argument("mean_map: no runs");
  MapResult m;
  m.tolerances = runs.front().tolerances;
  m.ap.assign(m.tolerances.size(), 0.0);
  for (const auto& r : runs) {
    if (r.tolerances != m.tolerances) throw std::invalid_argument("mean_map: runs use different tolerances");
    m.map += r.map / static_cast<double>(runs.size());
    for (size_t i = 0; i < r.ap.size(); ++i) m.ap[i] += r.ap[i] / static_cast<double>(runs.size());
  }
  return m;
}

std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants, const SyntheticBenchmark& bench,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::function<void(const std::string&)>& progress) {
  if (seeds.empty()) throw std::invalid_argument("run_ablation: no seeds");
  std::vector<AblationRow> rows;
  for (const auto& variant : variants) {
    AblationRow row{variant.name, {}, {}};
    for (std::uint64_t seed : seeds) {
      SpotConfig cfg = variant.cfg;
      cfg.seed = seed;
      const DataSplit split = split_train_val(bench.train, cfg);
      const TrainResult tr = train_model(cfg, split.train, split.val);
      row.runs.push_back(
          evaluate_model(*tr.model, bench.test, PostprocessOptions::from_config(cfg), cfg.tolerances));
      if (progress) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s seed %llu: mAP %.4f", variant.name.c_str(),
                      static_cast<unsigned long long>(seed), row.runs.back().map);
        progress(buf);
      }
    }
    row.mean = mean_map(row.runs);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_map_table(const std::vector<std::pair<std::string, MapResult>>& rows) {
  if (rows.empty()) return "";
  size_t name_w = 6;
  for (const auto& [name, r] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(name_w), "Method");
  os << buf;
  for (int d : rows.front().second.tolerances) {
    std::snprintf(buf, sizeof(buf), " | %8s", ("d=" + std::to_string(d)).c_str());
    os << buf;
  }
  os << " | " << "     mAP\n";
  os << std::string(name_w, '-');
  for (size_t i = 0; i <= rows.front().second.tolerances.size(); ++i) os << "-+---------";
  os << "\n";
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(name_w), name.c_str());
    os << buf;
    for (double ap : r.ap) {
      std::snprintf(buf, sizeof(buf), " | %8.2f", 100.0 * ap);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), " | %8.2f\n", 100.0 * r.map);
    os << buf;
  }
  return os.str();
}

}  // namespace touchspot
