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

#ifndef TEXGEN_SERVICE_H_
#define TEXGEN_SERVICE_H_

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "texgen/align.h"
#include "texgen/common.h"
#include "texgen/corpus.h"
#include "texgen/render.h"
#include "texgen/synth.h"
#include "texgen/vae.h"

namespace texgen::service {

// ---- Error mapping ------------------------------------------------------------

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitEmbeddingNotFound = 4;
inline constexpr int kExitInternal = 70;

// Process exit status for a library error. Argument errors map to 2, missing
// or unwritable files to 3, unknown prompts to 4; every other code has its own
// value from 5 up.
int ExitCodeFor(ErrorCode code);
int HttpStatusFor(ErrorCode code);
// {"error": {"code": "...", "message": "..."}}
nlohmann::json ErrorBody(std::string_view code, std::string_view message);

// ---- Configuration ------------------------------------------------------------

struct ServiceConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8080;
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  std::filesystem::path embeddings;
  render::RenderConfig render;
  int threads = 2;

  // TEXGEN_HOST, TEXGEN_PORT, TEXGEN_CHECKPOINT, TEXGEN_CORPUS,
  // TEXGEN_EMBEDDINGS, TEXGEN_THREADS and TEXGEN_RENDER_CONFIG (a JSON file of
  // RenderConfig fields). Throws Error(kInvalidArgument) on unparsable values.
  void ApplyEnvironment();
  // Throws Error(kNotFound) naming the first missing path and
  // Error(kInvalidArgument) for a bad render configuration.
  void Validate() const;
};

// Keys k_n, g_vib, f_max, m_eff, servo_rate, signal_rate, friction_k,
// friction_tau; absent keys keep their current value.
void ApplyRenderOverrides(const nlohmann::json& j, render::RenderConfig& cfg);

// ---- JSON views ---------------------------------------------------------------

nlohmann::json ArGridJson(const ArGrid& grid);
nlohmann::json TapBankJson(const TapBank& bank);
// Reads a 64-value latent. Throws Error(kShapeError) on the wrong length and
// Error(kNonFiniteInput) on non-finite entries.
std::vector<double> LatentFromJson(const nlohmann::json& j);

// Decoded grid and tap bank; the friction comes from the model's anchors (0
// without anchors, their mean for a zero latent).
render::RenderMaterial DecodeToMaterial(vae::Model& model, std::span<const double> z,
                                        const render::RenderConfig& cfg);

// ---- Streaming ----------------------------------------------------------------

// One client state message. Force in N, speed in mm/s, penetration in m; the
// penetration defaults to f / k_n. tap is an impact speed in mm/s.
struct ClientState {
  double f = 0.0;
  double v = 0.0;
  std::optional<double> delta;
  std::optional<double> tap;
};

struct StartMessage {
  std::optional<std::string> material;
  std::optional<std::vector<double>> z;
  std::uint64_t seed = 0;
  // Streams exactly this many seconds of samples, then sends an end message.
  std::optional<double> duration_s;
  bool forces = true;
};

struct StopMessage {};

// Raised for malformed client traffic; `code` is sent as the close reason.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

using ClientMessage = std::variant<StartMessage, ClientState, StopMessage>;

// Text frames: {"type": "start" | "state" | "stop", ...}. A message without a
// type is a state message. Throws ProtocolError.
ClientMessage ParseClientMessage(std::string_view text);

// Servo-rate renderer shared by the stream and offline synthesis. Each tick
// looks up the AR model at (f, v), advances the synthesizer by
// SamplesPerTick() samples and adds tap transients; out of contact the
// synthesizer pauses and emits zeros.
class StreamEngine {
 public:
  StreamEngine(render::RenderMaterial material, const render::RenderConfig& cfg,
               std::uint64_t seed);

  int samples_per_tick() const { return samples_per_tick_; }
  // `out` must hold samples_per_tick() values. Allocation-free.
  void Tick(const ClientState& state, std::span<double> out, render::ForceFrame& frame);
  std::uint64_t ticks() const { return ticks_; }

 private:
  render::RenderMaterial material_;
  render::RenderConfig cfg_;
  synth::Interpolator interp_;
  synth::Synthesizer synth_;
  synth::InterpolatedParams params_;
  int samples_per_tick_;
  std::uint64_t ticks_ = 0;
  // Pending tap output, a ring indexed from ring_pos_; taps superpose.
  std::array<double, kTapSamples> pending_{};
  std::array<double, kTapSamples> trace_{};
  std::size_t ring_pos_ = 0;
};

// Offline equivalent of a constant-state stream: seconds * signal_rate samples.
std::vector<double> SynthesizeConstant(const render::RenderMaterial& material,
                                       const render::RenderConfig& cfg, double force,
                                       double speed_mm_s, double seconds, std::uint64_t seed);

// Binary frame: u32 sequence number, u16 sample count, float32 samples, all
// little-endian.
std::string EncodeFrame(std::uint32_t seq, std::span<const double> samples);
struct DecodedFrame {
  std::uint32_t seq = 0;
  std::vector<float> samples;
};
// Throws ProtocolError("bad_frame") on a malformed frame.
DecodedFrame DecodeFrame(std::string_view bytes);

// Outbound frame queue that never blocks the session clock: once more than
// `capacity_samples` are waiting, the oldest frames are dropped and a gap is
// recorded for the next pop.
class OutboundQueue {
 public:
  struct Item {
    std::uint32_t seq = 0;
    std::size_t samples = 0;
    std::string binary;  // encoded sample frame
    std::string text;    // optional JSON sent after the frame
  };
  struct Gap {
    std::uint32_t from_seq = 0;
    std::uint32_t to_seq = 0;  // inclusive
    std::size_t samples = 0;
  };

  explicit OutboundQueue(std::size_t capacity_samples) : capacity_(capacity_samples) {}

  void Push(Item item);
  // Gap notices come out before the frame that follows them.
  std::optional<Gap> TakeGap();
  std::optional<Item> Pop();
  bool empty() const { return items_.empty(); }
  std::size_t queued_samples() const { return queued_; }
  std::size_t dropped_frames() const { return dropped_frames_; }

 private:
  std::size_t capacity_;
  std::deque<Item> items_;
  std::size_t queued_ = 0;
  std::optional<Gap> gap_;
  std::size_t dropped_frames_ = 0;
};

nlohmann::json GapJson(const OutboundQueue::Gap& gap);

// ---- Service ------------------------------------------------------------------

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

struct MaterialInfo {
  std::string id;
  std::string family;
  int class_label = 0;
  double friction = 0.0;
  std::vector<std::string> captions;
};

// Loaded artifacts plus the request handlers. Model, corpus and embeddings are
// read-only after loading; simulation logs live in memory.
class Service {
 public:
  static std::unique_ptr<Service> Load(const ServiceConfig& config);
  Service(std::unique_ptr<vae::Model> model, Corpus corpus, vae::EmbeddingMap embeddings,
          render::RenderConfig render);

  HttpResponse Handle(std::string_view method, std::string_view target, std::string_view body);

  const std::vector<MaterialInfo>& materials() const { return materials_; }
  const render::RenderConfig& render_config() const { return render_; }

  std::vector<double> LatentFromText(const std::string& prompt);
  // Posterior mean of a source material (mean over its augmented variants).
  std::vector<double> MaterialLatent(const std::string& id) const;
  // Decoded grid and tap bank with the friction estimated from the anchors.
  render::RenderMaterial DecodeMaterial(std::span<const double> z);
  // Throws Error(kNotFound) for an unknown id.
  render::RenderMaterial CorpusMaterial(const std::string& id) const;
  // Resolves a stream start request to a material.
  render::RenderMaterial ResolveStart(const StartMessage& start);

 private:
  HttpResponse Materials() const;
  HttpResponse FromText(const nlohmann::json& req);
  HttpResponse Average(const nlohmann::json& req);
  HttpResponse Decode(const nlohmann::json& req);
  HttpResponse Simulate(const nlohmann::json& req);
  HttpResponse Log(std::string_view id, std::string_view format);
  std::vector<double> LatentArgument(const nlohmann::json& v) const;

  std::unique_ptr<vae::Model> model_;
  Corpus corpus_;
  vae::EmbeddingMap embeddings_;
  render::RenderConfig render_;
  std::vector<MaterialInfo> materials_;
  std::map<std::string, std::vector<double>> source_latents_;

  std::mutex logs_mu_;
  std::map<std::string, render::SimLog> logs_;
  std::uint64_t next_log_ = 1;
};

// ---- Network server -----------------------------------------------------------

inline constexpr const char* kStreamSubprotocol = "texture-stream.v1";
// Samples a stream may fall behind before frames are dropped.
inline constexpr double kBackpressureSeconds = 0.5;

// HTTP/1.1 + WebSocket server on a thread pool. Start() binds (port 0 picks a
// free port) and returns; Stop() closes every connection and joins.
class Server {
 public:
  Server(Service& service, std::string host, std::uint16_t port, int threads);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  void Start();
  void Stop();
  // Blocks until Stop() is called from elsewhere or a signal arrives.
  void Wait();
  std::uint16_t port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace texgen::service

#endif  // TEXGEN_SERVICE_H_
