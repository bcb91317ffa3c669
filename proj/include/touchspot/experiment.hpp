#pragma once

#include <functional>
#include <string>
#include <vector>

#include "touchspot/synth.hpp"
#include "touchspot/train.hpp"

namespace touchspot {

// Disjoint synthetic train and test sets. Video ids are prefixed "train_" / "test_".
struct SyntheticBenchmark {
  std::vector<Video> train;
  std::vector<Video> test;
};
SyntheticBenchmark make_benchmark(int n_train, int n_test, const synth::SynthParams& params);

enum class AblationAxis { kComponents, kClipLength, kContext };
AblationAxis ablation_axis_from_string(const std::string& s);
const char* to_string(AblationAxis axis);

struct AblationVariant {
  std::string name;
  SpotConfig cfg;
};

// Rows of the ablation table for `axis`, built from `base`. Clip lengths are the reference
// values {25, 40, 50, 80} multiplied by `scale` and rounded.
std::vector<AblationVariant> ablation_variants(AblationAxis axis, const SpotConfig& base, double scale = 1.0);

struct AblationRow {
  std::string name;
  std::vector<MapResult> runs;  // one per seed
  MapResult mean;
};

// Trains each variant once per seed on bench.train (validation carved by val_fraction) and
// evaluates on bench.test with the variant's own post-processing.
std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants, const SyntheticBenchmark& bench,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::function<void(const std::string&)>& progress = {});

MapResult mean_map(const std::vector<MapResult>& runs);

// "name | AP@d0 | AP@d1 | ... | mAP" table, values in percent with two decimals.
std::string format_map_table(const std::vector<std::pair<std::string, MapResult>>& rows);

}  // namespace touchspot
