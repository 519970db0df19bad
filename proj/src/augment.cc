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

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "texgen/corpus.h"

namespace texgen {
namespace {

// Grid distance in min-max normalized (force, speed) coordinates.
double NormalizedDistance2(double f0, double v0, double f1, double v1) {
  const double df = (f0 - f1) / (2.0 - 0.2);
  const double dv = (v0 - v1) / (300.0 - 20.0);
  return df * df + dv * dv;
}

int NearestBin(double force, double speed) {
  const auto& centroids = UnifiedGridCentroids();
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int b = 0; b < kNumConditions; ++b) {
    const double d = NormalizedDistance2(force, speed, centroids[b].force, centroids[b].speed);
    if (d < best_d) {
      best_d = d;
      best = b;
    }
  }
  return best;
}

std::string AugmentId(const std::string& id, int k) {
  char suffix[16];
  std::snprintf(suffix, sizeof(suffix), "-a%02d", k);
  return id + suffix;
}

}  // namespace

std::vector<MixedTapBank> AugmentTapMix(const Corpus& corpus, std::uint64_t seed,
                                        TapMixWeights weights) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < corpus.materials.size(); ++i) {
    by_class[corpus.materials[i].class_label].push_back(i);
  }
  if (by_class.size() < static_cast<std::size_t>(kTapMixDonorClasses + 1)) {
    throw Error(ErrorCode::kInsufficientClasses,
                "tap mixing needs at least 20 classes, corpus has " +
                    std::to_string(by_class.size()));
  }
  std::vector<int> labels;
  for (const auto& [label, members] : by_class) labels.push_back(label);

  std::mt19937_64 rng(seed);
  std::vector<MixedTapBank> out;
  out.reserve(corpus.materials.size() * kTapMixDonorClasses);
  for (std::size_t i = 0; i < corpus.materials.size(); ++i) {
    const auto& target = corpus.materials[i];
    std::vector<int> others;
    for (int label : labels) {
      if (label != target.class_label) others.push_back(label);
    }
    std::shuffle(others.begin(), others.end(), rng);
    others.resize(kTapMixDonorClasses);
    for (int donor_class : others) {
      const auto& members = by_class[donor_class];
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      const auto& donor = corpus.materials[members[pick(rng)]];
      MixedTapBank mixed;
      mixed.material_index = i;
      mixed.donor_class = donor_class;
      mixed.donor_id = donor.id;
      for (int t = 0; t < kNumTapTraces; ++t) {
        auto& trace = mixed.bank.traces[t];
        trace.impact_speed = target.tap_bank.traces[t].impact_speed;
        for (int s = 0; s < kTapSamples; ++s) {
          const double v = weights.target * target.tap_bank.traces[t].samples[s] +
                           weights.donor * donor.tap_bank.traces[t].samples[s];
          trace.samples[s] = static_cast<float>(v);
        }
      }
      out.push_back(std::move(mixed));
    }
  }
  return out;
}

Corpus AugmentArResample(const Corpus& corpus, int n_augments, std::uint64_t seed,
                         std::vector<BinFallback>* fallbacks) {
  if (n_augments < 0) throw Error(ErrorCode::kInvalidArgument, "n_augments must be >= 0");
  if (n_augments == 0) return corpus;

  const auto& centroids = UnifiedGridCentroids();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Corpus out;
  out.generator = corpus.generator;
  out.materials.reserve(corpus.materials.size() * n_augments);

  for (const auto& src : corpus.materials) {
    // Bin the raw samples; materials without raw samples use their grid.
    std::array<std::vector<const ArGridEntry*>, kNumConditions> members;
    if (src.raw_samples.empty()) {
      for (const auto& e : src.ar_grid.entries) members[NearestBin(e.force, e.speed)].push_back(&e);
    } else {
      for (const auto& e : src.raw_samples) members[NearestBin(e.force, e.speed)].push_back(&e);
    }
    std::array<int, kNumConditions> used_bin{};
    for (int b = 0; b < kNumConditions; ++b) {
      used_bin[b] = b;
      if (!members[b].empty()) continue;
      double best_d = std::numeric_limits<double>::infinity();
      int best = -1;
      for (int o = 0; o < kNumConditions; ++o) {
        if (members[o].empty()) continue;
        const double d = NormalizedDistance2(centroids[b].force, centroids[b].speed,
                                             centroids[o].force, centroids[o].speed);
        if (d < best_d) {
          best_d = d;
          best = o;
        }
      }
      if (best < 0) {
        throw Error(ErrorCode::kFormatError, "record " + src.id + ": no samples to resample");
      }
      used_bin[b] = best;
      if (fallbacks != nullptr) fallbacks->push_back({src.id, b, best});
    }

    for (int k = 0; k < n_augments; ++k) {
      MaterialRecord rec;
      rec.id = AugmentId(src.id, k);
      rec.source_id = src.SourceId();
      rec.tap_bank = src.tap_bank;
      rec.friction = src.friction;
      rec.captions = src.captions;
      rec.class_label = src.class_label;
      rec.family = src.family;
      for (int b = 0; b < kNumConditions; ++b) {
        const auto& pool = members[used_bin[b]];
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        const ArGridEntry& first = *pool[pick(rng)];
        const ArGridEntry& second = *pool[pick(rng)];
        const double t = unit(rng);
        auto& e = rec.ar_grid.entries[b];
        e.force = centroids[b].force;
        e.speed = centroids[b].speed;
        for (int i = 0; i < kArOrder; ++i) e.lsf[i] = (1.0 - t) * first.lsf[i] + t * second.lsf[i];
        e.variance = (1.0 - t) * first.variance + t * second.variance;
      }
      out.materials.push_back(std::move(rec));
    }
  }
  return out;
}

Corpus BuildTrainingCorpus(const Corpus& corpus, int n_augments, std::uint64_t seed) {
  Corpus out = AugmentArResample(corpus, n_augments, seed);
  if (n_augments == 0) return out;
  std::vector<MixedTapBank> mixed;
  try {
    mixed = AugmentTapMix(corpus, seed ^ 0x9e3779b97f4a7c15ULL);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kInsufficientClasses) throw;
    return out;
  }
  // Mixed banks come grouped per material, 19 each, in corpus order.
  for (std::size_t m = 0; m < corpus.materials.size(); ++m) {
    for (int k = 0; k < n_augments; ++k) {
      out.materials[m * n_augments + k].tap_bank =
          mixed[m * kTapMixDonorClasses + k % kTapMixDonorClasses].bank;
    }
  }
  return out;
}

}  // namespace texgen
