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

#ifndef TEXGEN_RENDER_H_
#define TEXGEN_RENDER_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "texgen/corpus.h"
#include "texgen/synth.h"

namespace texgen::render {

using Vec3 = std::array<double, 3>;

struct DeviceSample {
  double penetration = 0.0;                             // m, 0 out of contact
  std::array<double, 2> tangential_velocity{0.0, 0.0};  // m/s in the surface plane
  Vec3 normal{0.0, 0.0, 1.0};
  Vec3 tangent{1.0, 0.0, 0.0};
  std::optional<double> impact_speed;  // m/s
};

// Throws Error(kInvalidArgument) unless both axes are unit length and
// orthogonal within 1e-9 and the penetration is finite and >= 0.
void ValidateSample(const DeviceSample& sample);

struct RenderConfig {
  double k_n = 500.0;    // N/m
  double g_vib = 0.5;
  double f_max = 3.3;    // N
  double m_eff = 0.05;   // kg
  double servo_rate = 1000.0;    // Hz
  double signal_rate = 10000.0;  // Hz
  int friction_k = 5;
  double friction_tau = 0.1;

  // Throws Error(kInvalidArgument) on non-positive values or a signal rate
  // that is not an integer multiple of the servo rate.
  void Validate() const;
  int SamplesPerTick() const;
};

struct ForceFrame {
  double f_n = 0.0;    // N, includes the tap term
  double f_t = 0.0;    // N
  double f_vib = 0.0;  // N
  double f_tap = 0.0;  // N
  Vec3 total{0.0, 0.0, 0.0};
};

struct FrictionAnchor {
  std::vector<double> latent;
  double mu = 0.0;
};

using FrictionAnchorSet = std::vector<FrictionAnchor>;

// Softmax over cosine similarity (temperature tau) of the k most similar
// anchors, applied to their friction coefficients. Throws Error(kZeroVector)
// for a zero-norm query or anchor and Error(kInvalidArgument) for an empty
// set, k < 1, tau <= 0 or mismatched dimensions.
double EstimateFriction(std::span<const double> z_q, const FrictionAnchorSet& anchors, int k,
                        double tau);

// Below this tangential speed (m/s) no friction force is produced.
inline constexpr double kFrictionSpeedFloor = 1e-6;

// total = F_n n - F_t t + F_vib t, with F_n = k_n delta + m_eff tap_accel and
// F_t = mu F_n. Everything is zero out of contact.
ForceFrame ComposeForce(const DeviceSample& sample, double mu, double y_n, double tap_accel,
                        const RenderConfig& cfg);

// A timed piece of the stylus script. Exactly one of penetration_m or
// force_n sets the contact depth (force_n / k_n when given as a force).
struct ScriptSegment {
  double duration_s = 0.0;
  std::optional<double> penetration_m;
  std::optional<double> force_n;
  double speed_mm_s = 0.0;
  std::optional<double> tap_mm_s;  // impact at the segment start
};

using TrajectoryScript = std::vector<ScriptSegment>;

// Parses [{"duration_s":..,"delta_m"|"force_N":..,"speed_mm_s":..,"tap":..}].
// Throws Error(kInvalidScript) for negative durations, depths, forces or
// speeds, both or neither depth key, or malformed JSON.
TrajectoryScript ParseScript(const nlohmann::json& j);
TrajectoryScript LoadScript(const std::filesystem::path& path);

// Everything the servo loop needs from one material.
struct RenderMaterial {
  ArGrid ar_grid;
  TapBank tap_bank;
  double mu = 0.0;
};

RenderMaterial MaterialFromRecord(const MaterialRecord& rec);

struct SimLog {
  std::vector<double> penetration;  // m
  std::vector<double> speed;        // m/s
  std::vector<ForceFrame> frames;
  std::vector<double> compute_us;
  std::vector<double> vibration;  // full-rate synthesizer output
  double servo_rate = 1000.0;
  double signal_rate = 10000.0;

  std::size_t ticks() const { return frames.size(); }
};

struct TimingSummary {
  double mean_us = 0.0;
  double p99_us = 0.0;
  double max_us = 0.0;
};

TimingSummary SummarizeTiming(const SimLog& log);

// Hooks around the tick loop. Nothing between OnTicksBegin and OnTicksEnd
// allocates.
class TickObserver {
 public:
  virtual ~TickObserver() = default;
  virtual void OnTicksBegin() {}
  virtual void OnTicksEnd() {}
};

struct SimOptions {
  std::uint64_t seed = 0;
  TickObserver* observer = nullptr;
};

// Steps the servo loop over the script. Each tick looks up the AR model at the
// spring force and speed, advances the synthesizer by SamplesPerTick() samples
// (the last one drives F_vib), adds any active tap transients, and logs a
// ForceFrame and the tick's compute time. Taps overlap by superposition.
// Out of contact the synthesizer is paused and the logged stream is zero.
SimLog RunTrajectory(const TrajectoryScript& script, const RenderMaterial& material,
                     const RenderConfig& cfg, const SimOptions& options = {});

// Columns: tick, delta_m, v_t_m_s, F_n, F_t, F_vib, F_tap, compute_us.
void WriteLogCsv(const SimLog& log, const std::filesystem::path& path);
void WriteLogCsv(const SimLog& log, std::ostream& out);
void WriteVibrationWav(const SimLog& log, const std::filesystem::path& path);

}  // namespace texgen::render

#endif  // TEXGEN_RENDER_H_
