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

#include "texgen/render.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace texgen::render {
namespace {

double Norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

void RequirePositive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must be positive");
  }
}

double ReadNonNegative(const nlohmann::json& seg, const char* key, std::size_t index) {
  const auto& v = seg.at(key);
  if (!v.is_number()) {
    throw Error(ErrorCode::kInvalidScript,
                "segment " + std::to_string(index) + ": " + key + " must be a number");
  }
  const double x = v.get<double>();
  if (!std::isfinite(x) || x < 0.0) {
    throw Error(ErrorCode::kInvalidScript,
                "segment " + std::to_string(index) + ": " + key + " must be >= 0");
  }
  return x;
}

constexpr int kMaxActiveTaps = 8;

struct ActiveTap {
  std::array<double, kTapSamples> trace{};
  int tick = 0;
  bool live = false;
};

}  // namespace

void ValidateSample(const DeviceSample& s) {
  if (!std::isfinite(s.penetration) || s.penetration < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "penetration must be finite and >= 0");
  }
  if (std::abs(Norm(s.normal) - 1.0) > 1e-9 || std::abs(Norm(s.tangent) - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "normal and tangent must be unit vectors");
  }
  const double dot = s.normal[0] * s.tangent[0] + s.normal[1] * s.tangent[1] + s.normal[2] * s.tangent[2];
  if (std::abs(dot) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "normal and tangent must be orthogonal");
  }
}

void RenderConfig::Validate() const {
  RequirePositive(k_n, "k_n");
  RequirePositive(g_vib, "g_vib");
  RequirePositive(f_max, "F_max");
  RequirePositive(m_eff, "m_eff");
  RequirePositive(servo_rate, "servo_rate");
  RequirePositive(signal_rate, "signal_rate");
  RequirePositive(friction_tau, "friction_tau");
  if (friction_k < 1) throw Error(ErrorCode::kInvalidArgument, "friction_k must be >= 1");
  const double ratio = signal_rate / servo_rate;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0) {
    throw Error(ErrorCode::kInvalidArgument,
                "signal_rate must be an integer multiple of servo_rate");
  }
}

int RenderConfig::SamplesPerTick() const {
  return static_cast<int>(std::lround(signal_rate / servo_rate));
}

double EstimateFriction(std::span<const double> z_q, const FrictionAnchorSet& anchors, int k,
                        double tau) {
  if (anchors.empty()) throw Error(ErrorCode::kInvalidArgument, "friction anchor set is empty");
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (!(tau > 0.0)) throw Error(ErrorCode::kInvalidArgument, "tau must be positive");
  double qn = 0.0;
  for (double v : z_q) qn += v * v;
  qn = std::sqrt(qn);
  if (!(qn > 0.0)) throw Error(ErrorCode::kZeroVector, "query latent has zero norm");

  std::vector<std::pair<double, double>> sims;  // (cosine, mu)
  sims.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto& a = anchors[i];
    if (a.latent.size() != z_q.size()) {
      throw Error(ErrorCode::kInvalidArgument, "anchor latent dimension mismatch");
    }
    double dot = 0.0, an = 0.0;
    for (std::size_t j = 0; j < z_q.size(); ++j) {
      dot += z_q[j] * a.latent[j];
      an += a.latent[j] * a.latent[j];
    }
    an = std::sqrt(an);
    if (!(an > 0.0)) {
      throw Error(ErrorCode::kZeroVector, "anchor " + std::to_string(i) + " latent has zero norm");
    }
    sims.emplace_back(dot / (qn * an), a.mu);
  }
  const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), sims.size());
  std::partial_sort(sims.begin(), sims.begin() + top, sims.end(),
                    [](const auto& x, const auto& y) { return x.first > y.first; });
  const double peak = sims[0].first;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < top; ++i) {
    const double w = std::exp((sims[i].first - peak) / tau);
    num += w * sims[i].second;
    den += w;
  }
  return num / den;
}

ForceFrame ComposeForce(const DeviceSample& sample, double mu, double y_n, double tap_accel,
                        const RenderConfig& cfg) {
  ForceFrame f;
  if (!(sample.penetration > 0.0)) return f;
  f.f_tap = cfg.m_eff * tap_accel;
  f.f_n = cfg.k_n * sample.penetration + f.f_tap;
  const double speed = std::hypot(sample.tangential_velocity[0], sample.tangential_velocity[1]);
  f.f_t = speed < kFrictionSpeedFloor ? 0.0 : mu * f.f_n;
  f.f_vib = cfg.g_vib * y_n * cfg.f_max;
  for (int i = 0; i < 3; ++i) {
    f.total[i] = f.f_n * sample.normal[i] - f.f_t * sample.tangent[i] + f.f_vib * sample.tangent[i];
  }
  return f;
}

TrajectoryScript ParseScript(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::kInvalidScript, "script must be a JSON array");
  TrajectoryScript script;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& seg = j[i];
    if (!seg.is_object()) {
      throw Error(ErrorCode::kInvalidScript, "segment " + std::to_string(i) + " is not an object");
    }
    ScriptSegment s;
    if (!seg.contains("duration_s")) {
      throw Error(ErrorCode::kInvalidScript, "segment " + std::to_string(i) + ": missing duration_s");
    }
    const double duration = seg.at("duration_s").is_number() ? seg.at("duration_s").get<double>() : NAN;
    if (!std::isfinite(duration) || duration < 0.0) {
      throw Error(ErrorCode::kInvalidScript,
                  "segment " + std::to_string(i) + ": negative or invalid duration_s");
    }
    s.duration_s = duration;
    const bool has_delta = seg.contains("delta_m");
    const bool has_force = seg.contains("force_N");
    if (has_delta == has_force) {
      throw Error(ErrorCode::kInvalidScript,
                  "segment " + std::to_string(i) + ": give exactly one of delta_m or force_N");
    }
    if (has_delta) s.penetration_m = ReadNonNegative(seg, "delta_m", i);
    if (has_force) s.force_n = ReadNonNegative(seg, "force_N", i);
    if (seg.contains("speed_mm_s")) s.speed_mm_s = ReadNonNegative(seg, "speed_mm_s", i);
    if (seg.contains("tap") && !seg.at("tap").is_null()) s.tap_mm_s = ReadNonNegative(seg, "tap", i);
    script.push_back(s);
  }
  return script;
}

TrajectoryScript LoadScript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "script not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidScript, "script is not valid JSON: " + std::string(e.what()));
  }
  return ParseScript(j);
}

RenderMaterial MaterialFromRecord(const MaterialRecord& rec) {
  return {rec.ar_grid, rec.tap_bank, rec.friction};
}

TimingSummary SummarizeTiming(const SimLog& log) {
  TimingSummary t;
  if (log.compute_us.empty()) return t;
  std::vector<double> sorted = log.compute_us;
  std::sort(sorted.begin(), sorted.end());
  t.mean_us = std::accumulate(sorted.begin(), sorted.end(), 0.0) / sorted.size();
  const std::size_t idx = std::min(sorted.size() - 1,
                                   static_cast<std::size_t>(std::ceil(0.99 * sorted.size())) - 1);
  t.p99_us = sorted[idx];
  t.max_us = sorted.back();
  return t;
}

SimLog RunTrajectory(const TrajectoryScript& script, const RenderMaterial& material,
                     const RenderConfig& cfg, const SimOptions& options) {
  cfg.Validate();
  const int spt = cfg.SamplesPerTick();
  std::vector<long> segment_ticks;
  long total_ticks = 0;
  for (const auto& seg : script) {
    if (!(seg.duration_s >= 0.0)) throw Error(ErrorCode::kInvalidScript, "negative segment duration");
    const long n = std::lround(seg.duration_s * cfg.servo_rate);
    segment_ticks.push_back(n);
    total_ticks += n;
  }

  const synth::Interpolator interp(material.ar_grid);
  synth::Synthesizer synthesizer(options.seed, cfg.signal_rate);
  SimLog log;
  log.servo_rate = cfg.servo_rate;
  log.signal_rate = cfg.signal_rate;
  log.penetration.resize(total_ticks);
  log.speed.resize(total_ticks);
  log.frames.resize(total_ticks);
  log.compute_us.resize(total_ticks);
  log.vibration.assign(static_cast<std::size_t>(total_ticks) * spt, 0.0);

  std::array<ActiveTap, kMaxActiveTaps> taps{};
  const int tap_ticks = (kTapSamples + spt - 1) / spt;
  synth::InterpolatedParams params;

  if (options.observer != nullptr) options.observer->OnTicksBegin();
  long tick = 0;
  for (std::size_t s = 0; s < script.size(); ++s) {
    const ScriptSegment& seg = script[s];
    const double delta = seg.penetration_m ? *seg.penetration_m : *seg.force_n / cfg.k_n;
    for (long j = 0; j < segment_ticks[s]; ++j, ++tick) {
      const auto start = std::chrono::steady_clock::now();
      DeviceSample sample;
      sample.penetration = delta;
      sample.tangential_velocity = {seg.speed_mm_s * 1e-3, 0.0};
      if (j == 0 && seg.tap_mm_s) sample.impact_speed = *seg.tap_mm_s * 1e-3;

      if (sample.impact_speed) {
        // Reuse a finished slot, else the oldest one.
        ActiveTap* slot = &taps[0];
        for (auto& t : taps) {
          if (!t.live) {
            slot = &t;
            break;
          }
          if (t.tick > slot->tick) slot = &t;
        }
        synth::RenderTap(material.tap_bank, *sample.impact_speed * 1e3, slot->trace);
        slot->tick = 0;
        slot->live = true;
      }
      double tap_accel = 0.0;
      for (auto& t : taps) {
        if (!t.live) continue;
        tap_accel += t.trace[static_cast<std::size_t>(t.tick) * spt];
        if (++t.tick >= tap_ticks) t.live = false;
      }

      double* stream = log.vibration.data() + static_cast<std::size_t>(tick) * spt;
      double y_n = 0.0;
      if (delta > 0.0) {
        interp.Evaluate(cfg.k_n * delta, seg.speed_mm_s, params);
        synthesizer.Synthesize(params, std::span<double>(stream, spt));
        y_n = stream[spt - 1];
      }
      log.frames[tick] = ComposeForce(sample, material.mu, y_n, tap_accel, cfg);
      log.penetration[tick] = delta;
      log.speed[tick] = sample.tangential_velocity[0];
      const auto end = std::chrono::steady_clock::now();
      log.compute_us[tick] = std::chrono::duration<double, std::micro>(end - start).count();
    }
  }
  if (options.observer != nullptr) options.observer->OnTicksEnd();
  return log;
}

void WriteLogCsv(const SimLog& log, std::ostream& out) {
  out << "tick,delta_m,v_t_m_s,F_n,F_t,F_vib,F_tap,compute_us\n";
  out.precision(17);
  for (std::size_t i = 0; i < log.ticks(); ++i) {
    const auto& f = log.frames[i];
    out << i << ',' << log.penetration[i] << ',' << log.speed[i] << ',' << f.f_n << ',' << f.f_t
        << ',' << f.f_vib << ',' << f.f_tap << ',' << log.compute_us[i] << '\n';
  }
}

void WriteLogCsv(const SimLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  WriteLogCsv(log, out);
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

void WriteVibrationWav(const SimLog& log, const std::filesystem::path& path) {
  synth::WriteWav(path, log.vibration, static_cast<int>(std::lround(log.signal_rate)));
}

}  // namespace texgen::render
