// Copyright 2026 The texgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TEXGEN_CORPUS_H_
#define TEXGEN_CORPUS_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "texgen/common.h"

namespace texgen {

// One (force, speed) condition of a material's AR grid.
struct ArGridEntry {
  double force = 0.0;  // N
  double speed = 0.0;  // mm/s
  std::array<double, kArOrder> lsf{};
  double variance = 0.0;  // excitation power

  bool operator==(const ArGridEntry&) const = default;
};

struct ArGrid {
  std::array<ArGridEntry, kNumConditions> entries{};

  bool operator==(const ArGrid&) const = default;
};

struct TapTrace {
  double impact_speed = 0.0;  // mm/s
  std::array<double, kTapSamples> samples{};  // m/s^2 at 10 kHz

  bool operator==(const TapTrace&) const = default;
};

struct TapBank {
  std::array<TapTrace, kNumTapTraces> traces{};

  bool operator==(const TapBank&) const = default;
};

struct MaterialRecord {
  std::string id;
  // Material an augmented variant was derived from; empty for originals.
  std::string source_id;
  ArGrid ar_grid;
  TapBank tap_bank;
  double friction = 0.0;
  std::vector<std::string> captions;
  int class_label = 0;
  std::string family;
  // Measured (force, speed) samples that the unified grid was binned from.
  // Optional; AR resampling falls back to the grid itself when empty.
  std::vector<ArGridEntry> raw_samples;

  // Source material id: source_id when set, otherwise id.
  const std::string& SourceId() const {
    return source_id.empty() ? id : source_id;
  }

  bool operator==(const MaterialRecord&) const = default;
};

// Per-channel z-normalization statistics for AR (18x22) and tap (13x100)
// tensors. Channels whose std fell below kMinChannelStd keep a unit divisor
// and are flagged.
struct NormStats {
  static constexpr double kMinChannelStd = 1e-8;

  std::vector<double> ar_mean, ar_std;
  std::vector<double> tap_mean, tap_std;
  std::vector<std::uint8_t> ar_flag, tap_flag;

  bool empty() const { return ar_mean.empty(); }
  bool operator==(const NormStats&) const = default;
};

struct Corpus {
  std::vector<MaterialRecord> materials;
  nlohmann::json generator = nlohmann::json::object();
  NormStats norm_stats;  // empty unless fitted and saved

  bool operator==(const Corpus&) const = default;
};

// Row-major stacks of per-material tensors.
struct TensorSet {
  std::size_t count = 0;
  std::vector<double> ar;   // count x 396
  std::vector<double> tap;  // count x 1300
};

struct GridCentroid {
  double force;  // N
  double speed;  // mm/s
};

// The fixed 6 force x 3 speed grid over 0.2-2.0 N and 20-300 mm/s, force
// major: entry i has force level i / 3 and speed level i % 3.
const std::array<GridCentroid, kNumConditions>& UnifiedGridCentroids();

// Impact speeds (mm/s) used by the synthetic generator: 20, 40, ..., 260.
const std::array<double, kNumTapTraces>& DefaultImpactSpeeds();

// Throws Error(kFormatError) naming the record and offending field.
void ValidateRecord(const MaterialRecord& record);

std::array<double, kArTensorSize> ArTensor(const ArGrid& grid);
std::array<double, kTapTensorSize> TapTensor(const TapBank& bank);
ArGrid ArGridFromTensor(const double* tensor);
TapBank TapBankFromTensor(const double* tensor,
                          const std::array<double, kNumTapTraces>& speeds);

TensorSet StackTensors(const Corpus& corpus);

// ---- Disk format ----------------------------------------------------------

// Reads <dir>/manifest.json plus <dir>/<id>/ar.json and <dir>/<id>/tap.f32.
// An existing directory without a manifest is an empty corpus.
Corpus LoadCorpus(const std::filesystem::path& dir);

void SaveCorpus(const Corpus& corpus, const std::filesystem::path& dir);

// ---- Normalization --------------------------------------------------------

NormStats FitNormStats(const TensorSet& tensors);

void NormalizeInPlace(TensorSet& tensors, const NormStats& stats);
void DenormalizeInPlace(TensorSet& tensors, const NormStats& stats);

// Fits stats on the corpus and returns its normalized tensors.
std::pair<TensorSet, NormStats> Normalize(const Corpus& corpus);

// ---- Augmentation ---------------------------------------------------------

struct TapMixWeights {
  double target = 0.95;
  double donor = 0.05;
};

struct MixedTapBank {
  std::size_t material_index = 0;
  int donor_class = 0;
  std::string donor_id;
  TapBank bank;
};

inline constexpr int kTapMixDonorClasses = 19;

// For every material, one mixed bank per donor class (19 distinct other
// classes), pairing traces by index. Mixed samples are rounded to float32 so
// they survive the tap.f32 format unchanged. Throws
// Error(kInsufficientClasses) with fewer than 20 classes.
std::vector<MixedTapBank> AugmentTapMix(const Corpus& corpus,
                                        std::uint64_t seed,
                                        TapMixWeights weights = {});

struct BinFallback {
  std::string material_id;
  int bin = 0;
  int used_bin = 0;
};

// n_augments resampled AR grids per material; each entry blends two random
// members of the bin's raw samples and is relabeled with the bin centroid.
// n_augments == 0 returns the corpus unchanged; otherwise returns only the
// augmented variants (ids "<id>-a<k>"), which keep class label and captions.
Corpus AugmentArResample(const Corpus& corpus, int n_augments,
                         std::uint64_t seed,
                         std::vector<BinFallback>* fallbacks = nullptr);

// AR resampling paired with tap mixing: augment k of a material takes mixed
// bank k mod 19. Without 20 classes the source bank is kept.
Corpus BuildTrainingCorpus(const Corpus& corpus, int n_augments,
                           std::uint64_t seed);

// ---- Synthetic corpus -----------------------------------------------------

enum class MaterialFamily { kRigidSmooth = 0, kRigidRough, kCompliantSmooth, kCompliantRough };

const char* FamilyName(MaterialFamily family);

// Deterministic stand-in corpus: materials cycle through the four families;
// each material is its own class.
Corpus GenerateSyntheticCorpus(std::uint64_t seed, int n_materials);

// Deterministic caption embeddings (unit 512-vectors) for a synthetic corpus:
// a per-material direction plus a family direction plus per-caption noise.
std::map<std::string, std::vector<double>> SyntheticCaptionEmbeddings(
    const Corpus& corpus, std::uint64_t seed);

}  // namespace texgen

#endif  // TEXGEN_CORPUS_H_
