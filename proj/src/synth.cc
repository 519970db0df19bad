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

#include "texgen/synth.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "texgen/simd/kernels.h"

namespace texgen::synth {
namespace {

constexpr double kGeomEps = 1e-12;
// Barycentric weights within this distance of 0 or 1 mark an edge or node.
constexpr double kProvenanceEps = 1e-9;

double Cross(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

}  // namespace

const char* ProvenanceName(Provenance p) {
  switch (p) {
    case Provenance::kNode: return "node";
    case Provenance::kEdge: return "edge";
    case Provenance::kInterior: return "interior";
  }
  return "interior";
}

Interpolator::Interpolator(const ArGrid& grid)
    : Interpolator(std::vector<ArGridEntry>(grid.entries.begin(), grid.entries.end())) {}

Interpolator::Interpolator(std::vector<ArGridEntry> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 3) {
    throw Error(ErrorCode::kDegenerateGrid, "interpolation needs at least 3 grid points");
  }
  for (const auto& n : nodes_) {
    if (!std::isfinite(n.force) || !std::isfinite(n.speed) || !std::isfinite(n.variance)) {
      throw Error(ErrorCode::kNonFiniteInput, "grid point with non-finite value");
    }
    lpc::ValidateLsf(n.lsf);
  }
  double f_lo = INFINITY, f_hi = -INFINITY, v_lo = INFINITY, v_hi = -INFINITY;
  for (const auto& n : nodes_) {
    f_lo = std::min(f_lo, n.force);
    f_hi = std::max(f_hi, n.force);
    v_lo = std::min(v_lo, n.speed);
    v_hi = std::max(v_hi, n.speed);
  }
  if (!(f_hi > f_lo) || !(v_hi > v_lo)) {
    throw Error(ErrorCode::kDegenerateGrid, "grid points are collinear along one axis");
  }
  f_min_ = f_lo;
  f_scale_ = f_hi - f_lo;
  v_min_ = v_lo;
  v_scale_ = v_hi - v_lo;
  points_.reserve(nodes_.size());
  for (const auto& n : nodes_) points_.push_back(Normalize(n.force, n.speed));
  for (std::size_t i = 0; i < points_.size(); ++i) {
    for (std::size_t j = i + 1; j < points_.size(); ++j) {
      if (std::abs(points_[i].x - points_[j].x) < kGeomEps &&
          std::abs(points_[i].y - points_[j].y) < kGeomEps) {
        throw Error(ErrorCode::kDegenerateGrid,
                    "duplicate grid point (" + std::to_string(nodes_[i].force) + " N, " +
                        std::to_string(nodes_[i].speed) + " mm/s)");
      }
    }
  }
  Triangulate();
  if (triangles_.empty()) throw Error(ErrorCode::kDegenerateGrid, "grid points are collinear");
  BuildHull();
}

Interpolator::Point Interpolator::Normalize(double force, double speed) const {
  return {(force - f_min_) / f_scale_, (speed - v_min_) / v_scale_};
}

// Delaunay triangulation by exhaustive empty-circumcircle search. Candidate
// triangles from cocircular groups overlap; a greedy pass keeps a maximal
// non-overlapping subset, which tiles each cocircular polygon.
void Interpolator::Triangulate() {
  const int n = static_cast<int>(points_.size());
  struct Candidate {
    std::array<int, 3> v;
    double area;
  };
  std::vector<Candidate> candidates;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      for (int k = j + 1; k < n; ++k) {
        const Point a = points_[i], b = points_[j], c = points_[k];
        double area = Cross(b.x - a.x, b.y - a.y, c.x - a.x, c.y - a.y);
        if (std::abs(area) < kGeomEps) continue;
        std::array<int, 3> v{i, j, k};
        if (area < 0) {
          std::swap(v[1], v[2]);
          area = -area;
        }
        const Point p0 = points_[v[0]], p1 = points_[v[1]], p2 = points_[v[2]];
        bool empty = true;
        for (int m = 0; m < n && empty; ++m) {
          if (m == i || m == j || m == k) continue;
          const Point d = points_[m];
          const long double ax = p0.x - d.x, ay = p0.y - d.y;
          const long double bx = p1.x - d.x, by = p1.y - d.y;
          const long double cx = p2.x - d.x, cy = p2.y - d.y;
          const long double det = (ax * ax + ay * ay) * (bx * cy - cx * by) -
                                  (bx * bx + by * by) * (ax * cy - cx * ay) +
                                  (cx * cx + cy * cy) * (ax * by - bx * ay);
          if (det > 1e-12L) empty = false;
        }
        if (empty) candidates.push_back({v, area});
      }
    }
  }

  auto separated = [this](const std::array<int, 3>& s, const std::array<int, 3>& t) {
    for (int pass = 0; pass < 2; ++pass) {
      const auto& u = pass == 0 ? s : t;
      const auto& w = pass == 0 ? t : s;
      for (int e = 0; e < 3; ++e) {
        const Point a = points_[u[e]], b = points_[u[(e + 1) % 3]];
        double max_side = -INFINITY;
        for (int q : w) {
          max_side = std::max(max_side,
                              Cross(b.x - a.x, b.y - a.y, points_[q].x - a.x, points_[q].y - a.y));
        }
        // u is counter-clockwise, so w lies on the outer side of edge e.
        if (max_side <= kGeomEps) return true;
      }
    }
    return false;
  };

  for (const auto& cand : candidates) {
    bool ok = true;
    for (const auto& t : triangles_) {
      if (!separated(cand.v, t)) {
        ok = false;
        break;
      }
    }
    if (ok) triangles_.push_back(cand.v);
  }
}

void Interpolator::BuildHull() {
  // Monotone chain over all points, keeping collinear boundary points.
  std::vector<int> order(points_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [this](int a, int b) {
    return points_[a].x < points_[b].x || (points_[a].x == points_[b].x && points_[a].y < points_[b].y);
  });
  auto turn = [this](int o, int a, int b) {
    return Cross(points_[a].x - points_[o].x, points_[a].y - points_[o].y,
                 points_[b].x - points_[o].x, points_[b].y - points_[o].y);
  };
  std::vector<int> lower, upper;
  for (int idx : order) {
    while (lower.size() >= 2 && turn(lower[lower.size() - 2], lower.back(), idx) < -kGeomEps)
      lower.pop_back();
    lower.push_back(idx);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    while (upper.size() >= 2 && turn(upper[upper.size() - 2], upper.back(), *it) < -kGeomEps)
      upper.pop_back();
    upper.push_back(*it);
  }
  hull_.assign(lower.begin(), lower.end() - 1);
  hull_.insert(hull_.end(), upper.begin(), upper.end() - 1);
}

std::array<double, 3> Interpolator::Barycentric(std::size_t triangle, Point q) const {
  const auto& t = triangles_[triangle];
  const Point a = points_[t[0]], b = points_[t[1]], c = points_[t[2]];
  const double det = Cross(b.x - a.x, b.y - a.y, c.x - a.x, c.y - a.y);
  const double w1 = Cross(q.x - a.x, q.y - a.y, c.x - a.x, c.y - a.y) / det;
  const double w2 = Cross(b.x - a.x, b.y - a.y, q.x - a.x, q.y - a.y) / det;
  return {1.0 - w1 - w2, w1, w2};
}

void Interpolator::Blend(std::size_t triangle, const std::array<double, 3>& w,
                         InterpolatedParams& out) const {
  const auto& t = triangles_[triangle];
  const auto& n0 = nodes_[t[0]];
  const auto& n1 = nodes_[t[1]];
  const auto& n2 = nodes_[t[2]];
  for (int k = 0; k < kArOrder; ++k) {
    out.lsf[k] = w[0] * n0.lsf[k] + w[1] * n1.lsf[k] + w[2] * n2.lsf[k];
  }
  out.variance = w[0] * n0.variance + w[1] * n1.variance + w[2] * n2.variance;
  lpc::EnforceLsfSpacing(out.lsf);
  lpc::LsfToPredictor(out.lsf, out.a);

  int zeros = 0;
  bool node = false;
  for (double wi : w) {
    if (std::abs(wi) < kProvenanceEps) ++zeros;
    if (std::abs(wi - 1.0) < kProvenanceEps) node = true;
  }
  out.provenance = node ? Provenance::kNode : (zeros > 0 ? Provenance::kEdge : Provenance::kInterior);
}

Interpolator::Point Interpolator::ClampToHull(Point q) const {
  Point best = points_[hull_[0]];
  double best_d = INFINITY;
  for (std::size_t i = 0; i < hull_.size(); ++i) {
    const Point a = points_[hull_[i]];
    const Point b = points_[hull_[(i + 1) % hull_.size()]];
    const double ex = b.x - a.x, ey = b.y - a.y;
    double s = ((q.x - a.x) * ex + (q.y - a.y) * ey) / (ex * ex + ey * ey);
    s = std::clamp(s, 0.0, 1.0);
    const Point p{a.x + s * ex, a.y + s * ey};
    const double d = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y);
    if (d < best_d) {
      best_d = d;
      best = p;
    }
  }
  return best;
}

bool Interpolator::InsideHull(double force, double speed) const {
  const Point q = Normalize(force, speed);
  for (std::size_t i = 0; i < hull_.size(); ++i) {
    const Point a = points_[hull_[i]];
    const Point b = points_[hull_[(i + 1) % hull_.size()]];
    if (Cross(b.x - a.x, b.y - a.y, q.x - a.x, q.y - a.y) < -kGeomEps) return false;
  }
  return true;
}

GridPoint Interpolator::NearestHullPoint(double force, double speed) const {
  const Point q = Normalize(force, speed);
  if (InsideHull(force, speed)) return {force, speed};
  const Point p = ClampToHull(q);
  return {f_min_ + p.x * f_scale_, v_min_ + p.y * v_scale_};
}

void Interpolator::Evaluate(double force, double speed, InterpolatedParams& out) const {
  Point q = Normalize(force, speed);
  out.clamped = false;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::size_t best = 0;
    double best_min = -INFINITY;
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
      const auto w = Barycentric(t, q);
      const double lowest = std::min({w[0], w[1], w[2]});
      if (lowest > best_min) {
        best_min = lowest;
        best = t;
      }
    }
    if (best_min >= -1e-12 || attempt == 1) {
      auto w = Barycentric(best, q);
      // Snap roundoff so the blend stays convex.
      double sum = 0.0;
      for (double& wi : w) {
        wi = std::max(wi, 0.0);
        sum += wi;
      }
      for (double& wi : w) wi /= sum;
      Blend(best, w, out);
      return;
    }
    q = ClampToHull(q);
    out.clamped = true;
  }
}

InterpolatedParams Interpolator::Evaluate(double force, double speed) const {
  InterpolatedParams out;
  Evaluate(force, speed, out);
  return out;
}

InterpolatedParams Interpolator::EvaluateInTriangle(std::size_t triangle, double force,
                                                    double speed) const {
  if (triangle >= triangles_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "triangle index out of range");
  }
  InterpolatedParams out;
  Blend(triangle, Barycentric(triangle, Normalize(force, speed)), out);
  return out;
}

Synthesizer::Synthesizer(std::uint64_t seed, double sample_rate)
    : rng_(seed), sample_rate_(sample_rate) {
  if (!(sample_rate > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sample rate must be positive");
}

void Synthesizer::Reset(std::uint64_t seed) {
  rng_.seed(seed);
  normal_.reset();
  ring_.fill(0.0);
  pos_ = 0;
}

std::array<double, kArOrder> Synthesizer::history() const {
  std::array<double, kArOrder> h{};
  for (int k = 0; k < kArOrder; ++k) h[k] = ring_[pos_ + kArOrder - 1 - k];
  return h;
}

void Synthesizer::Synthesize(std::span<const double> a, double variance, std::span<double> out) {
  if (a.size() != static_cast<std::size_t>(kArOrder)) {
    throw Error(ErrorCode::kShapeError, "synthesizer expects 21 AR coefficients");
  }
  std::array<double, kArOrder> reversed{};
  for (int k = 0; k < kArOrder; ++k) {
    if (!std::isfinite(a[k])) throw Error(ErrorCode::kNonFiniteInput, "non-finite AR coefficient");
    reversed[kArOrder - 1 - k] = a[k];
  }
  if (!std::isfinite(variance) || variance < 0.0) {
    throw Error(ErrorCode::kNonFiniteInput, "excitation variance must be finite and >= 0");
  }
  const double sigma = std::sqrt(variance);
  const auto& kernels = simd::ActiveKernels();
  for (double& y : out) {
    const double v = kernels.dot(reversed.data(), ring_.data() + pos_, kArOrder) + sigma * normal_(rng_);
    ring_[pos_] = v;
    ring_[pos_ + kArOrder] = v;
    pos_ = pos_ + 1 == static_cast<std::size_t>(kArOrder) ? 0 : pos_ + 1;
    y = v;
  }
}

void Synthesizer::Synthesize(const InterpolatedParams& params, std::span<double> out) {
  Synthesize(params.a, params.variance, out);
}

std::vector<double> Synthesizer::Synthesize(const InterpolatedParams& params, std::size_t n) {
  std::vector<double> out(n);
  Synthesize(params, std::span<double>(out));
  return out;
}

void RenderTap(const TapBank& bank, double v_tap, std::span<double> out) {
  if (!std::isfinite(v_tap) || v_tap < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "impact speed must be finite and >= 0");
  }
  if (out.size() != static_cast<std::size_t>(kTapSamples)) {
    throw Error(ErrorCode::kShapeError, "tap output must hold 100 samples");
  }
  std::array<int, kNumTapTraces> order{};
  for (int i = 0; i < kNumTapTraces; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&bank](int x, int y) {
    return bank.traces[x].impact_speed < bank.traces[y].impact_speed;
  });
  const TapTrace& lowest = bank.traces[order.front()];
  const TapTrace& highest = bank.traces[order.back()];

  auto scaled = [&out, v_tap](const TapTrace& t) {
    const double g = t.impact_speed > 0.0 ? v_tap / t.impact_speed : 1.0;
    for (int s = 0; s < kTapSamples; ++s) out[s] = g * t.samples[s];
  };
  if (v_tap <= lowest.impact_speed) return scaled(lowest);
  if (v_tap >= highest.impact_speed) return scaled(highest);

  for (int i = 0; i + 1 < kNumTapTraces; ++i) {
    const TapTrace& lo = bank.traces[order[i]];
    const TapTrace& hi = bank.traces[order[i + 1]];
    if (v_tap > hi.impact_speed) continue;
    if (v_tap == hi.impact_speed) {
      std::copy(hi.samples.begin(), hi.samples.end(), out.begin());
      return;
    }
    const double t = (v_tap - lo.impact_speed) / (hi.impact_speed - lo.impact_speed);
    for (int s = 0; s < kTapSamples; ++s) {
      out[s] = (1.0 - t) * lo.samples[s] + t * hi.samples[s];
    }
    return;
  }
}

std::array<double, kTapSamples> RenderTap(const TapBank& bank, double v_tap) {
  std::array<double, kTapSamples> out{};
  RenderTap(bank, v_tap, out);
  return out;
}

void WriteWav(std::ostream& file, std::span<const double> samples, int sample_rate) {
  auto u32 = [&file](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    file.write(reinterpret_cast<const char*>(b), 4);
  };
  auto u16 = [&file](std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    file.write(reinterpret_cast<const char*>(b), 2);
  };
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 4);
  file.write("RIFF", 4);
  u32(4 + 26 + 12 + 8 + data_bytes);
  file.write("WAVE", 4);
  file.write("fmt ", 4);
  u32(18);
  u16(3);  // IEEE float
  u16(1);
  u32(static_cast<std::uint32_t>(sample_rate));
  u32(static_cast<std::uint32_t>(sample_rate) * 4);
  u16(4);
  u16(32);
  u16(0);
  file.write("fact", 4);
  u32(4);
  u32(static_cast<std::uint32_t>(samples.size()));
  file.write("data", 4);
  u32(data_bytes);
  for (double s : samples) {
    const float f = static_cast<float>(s);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
}

void WriteWav(const std::filesystem::path& path, std::span<const double> samples, int sample_rate) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  WriteWav(file, samples, sample_rate);
  if (!file) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

}  // namespace texgen::synth
