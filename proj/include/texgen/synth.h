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

#ifndef TEXGEN_SYNTH_H_
#define TEXGEN_SYNTH_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "texgen/corpus.h"
#include "texgen/lpc.h"

namespace texgen::synth {

enum class Provenance { kNode, kEdge, kInterior };

const char* ProvenanceName(Provenance p);

struct InterpolatedParams {
  std::array<double, kArOrder> a{};
  double variance = 0.0;
  std::array<double, kArOrder> lsf{};
  Provenance provenance = Provenance::kInterior;
  // Set when the query lay outside the grid hull and was clamped onto it.
  bool clamped = false;
};

struct GridPoint {
  double force = 0.0;
  double speed = 0.0;
};

// Barycentric interpolator over a Delaunay triangulation of the (force, speed)
// nodes. Coordinates are min-max normalized per axis before triangulation.
// Immutable after construction; lookups never allocate.
class Interpolator {
 public:
  explicit Interpolator(const ArGrid& grid);
  explicit Interpolator(std::vector<ArGridEntry> nodes);

  InterpolatedParams Evaluate(double force, double speed) const;
  void Evaluate(double force, double speed, InterpolatedParams& out) const;

  // Evaluates the blend of one triangle at a point inside or on it.
  InterpolatedParams EvaluateInTriangle(std::size_t triangle, double force, double speed) const;

  // Nearest point of the hull (in normalized coordinates), returned in raw units.
  GridPoint NearestHullPoint(double force, double speed) const;
  bool InsideHull(double force, double speed) const;

  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  // Hull vertex indices in counter-clockwise order, collinear nodes included.
  const std::vector<int>& hull() const { return hull_; }
  const std::vector<ArGridEntry>& nodes() const { return nodes_; }

 private:
  struct Point {
    double x, y;
  };

  Point Normalize(double force, double speed) const;
  std::array<double, 3> Barycentric(std::size_t triangle, Point q) const;
  void Blend(std::size_t triangle, const std::array<double, 3>& w, InterpolatedParams& out) const;
  Point ClampToHull(Point q) const;
  void Triangulate();
  void BuildHull();

  std::vector<ArGridEntry> nodes_;
  std::vector<Point> points_;
  double f_min_ = 0, f_scale_ = 1, v_min_ = 0, v_scale_ = 1;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<int> hull_;
};

// Streaming AR synthesizer: y[n] = sum_k a_k y[n-k] + e[n], e ~ N(0, variance).
// History is kept across calls, so parameter changes do not restart the filter.
class Synthesizer {
 public:
  explicit Synthesizer(std::uint64_t seed = 0, double sample_rate = kSignalRateHz);

  // Fills out with the next samples. Throws Error(kNonFiniteInput) on
  // non-finite coefficients or variance. Allocation-free.
  void Synthesize(const InterpolatedParams& params, std::span<double> out);
  void Synthesize(std::span<const double> a, double variance, std::span<double> out);
  std::vector<double> Synthesize(const InterpolatedParams& params, std::size_t n);

  // Zeroes the history and reseeds the generator.
  void Reset(std::uint64_t seed);

  double sample_rate() const { return sample_rate_; }
  // Most recent sample first: history()[k] = y[n-1-k].
  std::array<double, kArOrder> history() const;

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  double sample_rate_;
  // Mirrored ring: ring_[i] == ring_[i + kArOrder]; the window starting at
  // pos_ holds y[n-p] .. y[n-1], oldest first.
  std::array<double, 2 * kArOrder> ring_{};
  std::size_t pos_ = 0;
};

// Tap transient at impact speed v_tap (mm/s). Inside the recorded speed range
// the two neighboring traces are blended linearly; outside it the nearest
// trace is scaled by v_tap / v_nearest. Throws Error(kInvalidArgument) when
// v_tap is negative or not finite.
std::array<double, kTapSamples> RenderTap(const TapBank& bank, double v_tap);
void RenderTap(const TapBank& bank, double v_tap, std::span<double> out);

// Mono IEEE-float WAV. Throws Error(kIoError) when the file cannot be written.
void WriteWav(const std::filesystem::path& path, std::span<const double> samples,
              int sample_rate = static_cast<int>(kSignalRateHz));
void WriteWav(std::ostream& out, std::span<const double> samples,
              int sample_rate = static_cast<int>(kSignalRateHz));

}  // namespace texgen::synth

#endif  // TEXGEN_SYNTH_H_
