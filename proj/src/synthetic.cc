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

// Parametric stand-in for a measured texture corpus. Four families
// (rigid/compliant x smooth/rough) with non-overlapping parameter ranges:
//
//   family            texture wavelength  main pole   substrate pole  variance  tap freq    tap decay  friction
//   rigid-smooth      1.5-3.0 mm          0.80-0.85   0.10-0.25       0.05-0.10  600-1200 Hz 1.5-3 ms   0.10-0.25
//   rigid-rough       0.3-0.6 mm          0.93-0.96   0.10-0.25       0.50-0.80  600-1200 Hz 1.5-3 ms   0.35-0.60
//   compliant-smooth  1.5-3.0 mm          0.65-0.72   0.70-0.85       0.18-0.28  80-250 Hz   4-8 ms     0.50-0.70
//   compliant-rough   0.3-0.6 mm          0.85-0.90   0.70-0.85       1.20-1.80  80-250 Hz   4-8 ms     0.60-0.90
//
// The same table is written into the manifest's "generator" block.

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>

#include "texgen/corpus.h"
#include "texgen/lpc.h"

namespace texgen {
namespace {

struct Range {
  double lo, hi;
};

struct FamilySpec {
  MaterialFamily family;
  Range wavelength_mm;
  Range main_radius;
  Range substrate_pole;
  Range base_variance;
  Range tap_freq_hz;
  Range tap_decay_ms;
  Range tap_gain;
  Range friction;
  bool rough;
};

constexpr std::array<FamilySpec, 4> kFamilies{{
    {MaterialFamily::kRigidSmooth, {1.5, 3.0}, {0.80, 0.85}, {0.10, 0.25}, {0.05, 0.10},
     {600, 1200}, {1.5, 3.0}, {15, 30}, {0.10, 0.25}, false},
    {MaterialFamily::kRigidRough, {0.3, 0.6}, {0.93, 0.96}, {0.10, 0.25}, {0.50, 0.80},
     {600, 1200}, {1.5, 3.0}, {15, 30}, {0.35, 0.60}, true},
    {MaterialFamily::kCompliantSmooth, {1.5, 3.0}, {0.65, 0.72}, {0.70, 0.85}, {0.18, 0.28},
     {80, 250}, {4.0, 8.0}, {3, 8}, {0.50, 0.70}, false},
    {MaterialFamily::kCompliantRough, {0.3, 0.6}, {0.85, 0.90}, {0.70, 0.85}, {1.20, 1.80},
     {80, 250}, {4.0, 8.0}, {3, 8}, {0.60, 0.90}, true},
}};

struct MaterialParams {
  const FamilySpec* spec;
  double wavelength_mm;
  double main_radius;
  double substrate_pole;
  double base_variance;
  std::array<double, 8> filler_radius;
  double tap_freq_hz;
  double tap_decay_ms;
  double tap_gain;
  double tap_phase;
  double friction;
};

double Draw(std::mt19937_64& rng, Range r) {
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

// Expands prod_i (1 - p_i x) into predictor coefficients a_k = -A_k.
std::array<double, kArOrder> PolesToPredictor(const std::vector<std::complex<double>>& poles) {
  std::vector<std::complex<double>> poly{1.0};
  for (const auto& p : poles) {
    poly.push_back(0.0);
    for (std::size_t i = poly.size() - 1; i >= 1; --i) poly[i] -= p * poly[i - 1];
  }
  std::array<double, kArOrder> a{};
  for (int k = 1; k <= kArOrder; ++k) a[k - 1] = -poly[k].real();
  return a;
}

ArGridEntry ModelEntry(const MaterialParams& m, double force, double speed) {
  const double freq_hz = speed / m.wavelength_mm;
  const double theta = std::clamp(2.0 * kPi * freq_hz / kSignalRateHz, 0.02, 2.6);
  const double theta2 = std::min(2.0 * theta, 2.9);
  std::vector<std::complex<double>> poles;
  auto add_pair = [&poles](double radius, double angle) {
    poles.push_back(std::polar(radius, angle));
    poles.push_back(std::polar(radius, -angle));
  };
  add_pair(m.main_radius, theta);
  add_pair(m.main_radius - 0.1, theta2);
  for (int j = 0; j < 8; ++j) add_pair(m.filler_radius[j], (j + 1) * kPi / 9.0);
  poles.emplace_back(m.substrate_pole, 0.0);

  ArGridEntry e;
  e.force = force;
  e.speed = speed;
  lpc::ArCoeffs ar;
  ar.a = PolesToPredictor(poles);
  e.lsf = lpc::ArToLsf(ar);
  e.variance = m.base_variance * std::pow(force, 0.8) * std::pow(speed / 100.0, 0.6);
  return e;
}

const char* kNouns[4][3] = {
    {"glass", "acrylic", "polished steel"},
    {"sandpaper", "concrete", "coarse file"},
    {"foam", "rubber", "silicone"},
    {"cork", "carpet", "burlap"},
};

std::vector<std::string> MakeCaptions(MaterialFamily family, int index, bool first_of_family) {
  const int f = static_cast<int>(family);
  const std::string noun = kNouns[f][(index / 4) % 3];
  const std::string tag = " (sample " + std::to_string(index) + ")";
  std::vector<std::string> c;
  switch (family) {
    case MaterialFamily::kRigidSmooth:
      c = {"polished glossy " + noun, "smooth hard " + noun + " surface", "slick cold " + noun,
           "flat " + noun + " that glides under the stylus", "hard even " + noun + " sheet"};
      break;
    case MaterialFamily::kRigidRough:
      c = {"rough abrasive " + noun, "gritty hard " + noun + " surface",
           "scratchy " + noun + " with sharp particles", "coarse rigid " + noun,
           "bumpy stiff " + noun + " texture"};
      break;
    case MaterialFamily::kCompliantSmooth:
      c = {"soft and spongy " + noun, "squishy smooth " + noun, "cushioned " + noun + " surface",
           "gentle yielding " + noun, "plush soft " + noun + " pad"};
      break;
    case MaterialFamily::kCompliantRough:
      c = {"natural " + noun + " bark surface", "soft but grainy " + noun,
           "fibrous compliant " + noun, "rough spongy " + noun + " texture",
           "coarse cushioned " + noun};
      break;
  }
  for (std::size_t i = 0; i < c.size(); ++i) {
    // The family's first material keeps its first caption verbatim.
    if (!(first_of_family && i == 0)) c[i] += tag;
  }
  return c;
}

nlohmann::json FamilyTable() {
  nlohmann::json table = nlohmann::json::object();
  for (const auto& s : kFamilies) {
    auto range = [](Range r) { return nlohmann::json::array({r.lo, r.hi}); };
    table[FamilyName(s.family)] = {
        {"wavelength_mm", range(s.wavelength_mm)}, {"main_pole_radius", range(s.main_radius)},
        {"substrate_pole", range(s.substrate_pole)}, {"base_variance", range(s.base_variance)},
        {"tap_freq_hz", range(s.tap_freq_hz)},      {"tap_decay_ms", range(s.tap_decay_ms)},
        {"tap_gain", range(s.tap_gain)},            {"friction", range(s.friction)}};
  }
  return table;
}

}  // namespace

const char* FamilyName(MaterialFamily family) {
  switch (family) {
    case MaterialFamily::kRigidSmooth: return "rigid-smooth";
    case MaterialFamily::kRigidRough: return "rigid-rough";
    case MaterialFamily::kCompliantSmooth: return "compliant-smooth";
    case MaterialFamily::kCompliantRough: return "compliant-rough";
  }
  return "unknown";
}

Corpus GenerateSyntheticCorpus(std::uint64_t seed, int n_materials) {
  if (n_materials < 0) throw Error(ErrorCode::kInvalidArgument, "n_materials must be >= 0");
  Corpus corpus;
  corpus.generator = {{"kind", "synthetic"},
                      {"seed", seed},
                      {"n_materials", n_materials},
                      {"raw_samples_per_bin", 3},
                      {"raw_sample_jitter", 0.08},
                      {"families", FamilyTable()}};
  std::mt19937_64 rng(seed);
  const auto& centroids = UnifiedGridCentroids();
  const auto& speeds = DefaultImpactSpeeds();

  for (int idx = 0; idx < n_materials; ++idx) {
    const FamilySpec& spec = kFamilies[idx % 4];
    MaterialParams m;
    m.spec = &spec;
    m.wavelength_mm = Draw(rng, spec.wavelength_mm);
    m.main_radius = Draw(rng, spec.main_radius);
    m.substrate_pole = Draw(rng, spec.substrate_pole);
    m.base_variance = Draw(rng, spec.base_variance);
    for (double& r : m.filler_radius) r = Draw(rng, {0.20, 0.30});
    m.tap_freq_hz = Draw(rng, spec.tap_freq_hz);
    m.tap_decay_ms = Draw(rng, spec.tap_decay_ms);
    m.tap_gain = Draw(rng, spec.tap_gain);
    m.tap_phase = Draw(rng, {0.0, 0.5});
    m.friction = Draw(rng, spec.friction);

    MaterialRecord rec;
    char id[16];
    std::snprintf(id, sizeof(id), "M%03d", idx);
    rec.id = id;
    rec.class_label = idx;
    rec.family = FamilyName(spec.family);
    rec.friction = m.friction;
    rec.captions = MakeCaptions(spec.family, idx, idx < 4);

    for (int b = 0; b < kNumConditions; ++b) {
      rec.ar_grid.entries[b] = ModelEntry(m, centroids[b].force, centroids[b].speed);
      for (int s = 0; s < 3; ++s) {
        const double jf = 1.0 + Draw(rng, {-0.08, 0.08});
        const double jv = 1.0 + Draw(rng, {-0.08, 0.08});
        rec.raw_samples.push_back(
            ModelEntry(m, centroids[b].force * jf, centroids[b].speed * jv));
      }
    }

    std::normal_distribution<double> noise(0.0, 0.01 * m.tap_gain);
    const double decay_s = m.tap_decay_ms * 1e-3;
    for (int t = 0; t < kNumTapTraces; ++t) {
      auto& trace = rec.tap_bank.traces[t];
      trace.impact_speed = speeds[t];
      const double amp = m.tap_gain * speeds[t] / 100.0;
      for (int s = 0; s < kTapSamples; ++s) {
        const double time = s / kSignalRateHz;
        double v = std::exp(-time / decay_s) *
                   std::sin(2.0 * kPi * (m.tap_freq_hz * time + m.tap_phase));
        if (spec.rough) {
          v += 0.3 * std::exp(-time / decay_s) * std::sin(2.0 * kPi * 2.3 * m.tap_freq_hz * time);
        }
        trace.samples[s] = static_cast<float>(amp * v + noise(rng));
      }
    }
    corpus.materials.push_back(std::move(rec));
  }
  return corpus;
}

std::map<std::string, std::vector<double>> SyntheticCaptionEmbeddings(const Corpus& corpus,
                                                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_unit = [&] {
    std::vector<double> v(kTextDim);
    double norm = 0.0;
    for (double& x : v) {
      x = gauss(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
  };
  std::map<std::string, std::vector<double>> family_dirs;
  std::map<std::string, std::vector<double>> material_dirs;
  std::map<std::string, std::vector<double>> out;
  for (const auto& rec : corpus.materials) {
    if (!family_dirs.count(rec.family)) family_dirs[rec.family] = random_unit();
    const std::string& source = rec.SourceId();
    if (!material_dirs.count(source)) material_dirs[source] = random_unit();
    for (const auto& caption : rec.captions) {
      if (out.count(caption)) continue;
      const auto noise = random_unit();
      std::vector<double> v(kTextDim);
      double norm = 0.0;
      for (int i = 0; i < kTextDim; ++i) {
        v[i] = material_dirs[source][i] + 0.6 * family_dirs[rec.family][i] + 0.25 * noise[i];
        norm += v[i] * v[i];
      }
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
      out[caption] = std::move(v);
    }
  }
  return out;
}

}  // namespace texgen
