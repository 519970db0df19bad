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

#include "texgen/service.h"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace texgen::service {

using nlohmann::json;
namespace fs = std::filesystem;

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return kExitUsage;
    case ErrorCode::kNotFound:
    case ErrorCode::kIoError: return kExitIo;
    case ErrorCode::kEmbeddingNotFound: return kExitEmbeddingNotFound;
    case ErrorCode::kFormatError: return 5;
    case ErrorCode::kInsufficientClasses: return 6;
    case ErrorCode::kInvalidLsf: return 7;
    case ErrorCode::kUnstablePolynomial: return 8;
    case ErrorCode::kNonFiniteInput: return 9;
    case ErrorCode::kDegenerateGrid: return 10;
    case ErrorCode::kInvalidScript: return 11;
    case ErrorCode::kZeroVector: return 12;
    case ErrorCode::kShapeError: return 13;
    case ErrorCode::kBatchTooSmall: return 14;
    case ErrorCode::kNonFiniteGradient: return 15;
    case ErrorCode::kModelNotReady: return 16;
    case ErrorCode::kEmptyIndex: return 17;
    case ErrorCode::kDegenerateAxis: return 18;
    case ErrorCode::kEmptyInput: return 19;
    case ErrorCode::kDegenerateInput: return 20;
  }
  return kExitInternal;
}

int HttpStatusFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound:
    case ErrorCode::kEmbeddingNotFound: return 404;
    case ErrorCode::kModelNotReady: return 503;
    case ErrorCode::kIoError: return 500;
    default: return 400;
  }
}

json ErrorBody(std::string_view code, std::string_view message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

// ---- Configuration ------------------------------------------------------------

namespace {

const char* Env(const char* name) {
  const char* v = std::getenv(name);
  return (v != nullptr && *v != '\0') ? v : nullptr;
}

long ParseInt(const char* name, const char* text, long lo, long hi) {
  long value = 0;
  const char* end = text + std::strlen(text);
  auto [ptr, ec] = std::from_chars(text, end, value);
  if (ec != std::errc() || ptr != end || value < lo || value > hi) {
    throw Error(ErrorCode::kInvalidArgument, std::string(name) + " is not a valid integer: " + text);
  }
  return value;
}

}  // namespace

void ApplyRenderOverrides(const json& j, render::RenderConfig& cfg) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "render config must be an object");
  static const std::map<std::string, double render::RenderConfig::*> kDoubles = {
      {"k_n", &render::RenderConfig::k_n},
      {"g_vib", &render::RenderConfig::g_vib},
      {"f_max", &render::RenderConfig::f_max},
      {"m_eff", &render::RenderConfig::m_eff},
      {"servo_rate", &render::RenderConfig::servo_rate},
      {"signal_rate", &render::RenderConfig::signal_rate},
      {"friction_tau", &render::RenderConfig::friction_tau}};
  for (const auto& [key, value] : j.items()) {
    if (key == "friction_k") {
      if (!value.is_number_integer()) {
        throw Error(ErrorCode::kInvalidArgument, "friction_k must be an integer");
      }
      cfg.friction_k = value.get<int>();
      continue;
    }
    auto it = kDoubles.find(key);
    if (it == kDoubles.end()) throw Error(ErrorCode::kInvalidArgument, "unknown render key: " + key);
    if (!value.is_number()) throw Error(ErrorCode::kInvalidArgument, key + " must be a number");
    cfg.*(it->second) = value.get<double>();
  }
  cfg.Validate();
}

void ServiceConfig::ApplyEnvironment() {
  if (const char* v = Env("TEXGEN_HOST")) host = v;
  if (const char* v = Env("TEXGEN_PORT")) port = static_cast<std::uint16_t>(ParseInt("TEXGEN_PORT", v, 0, 65535));
  if (const char* v = Env("TEXGEN_CHECKPOINT")) checkpoint = v;
  if (const char* v = Env("TEXGEN_CORPUS")) corpus = v;
  if (const char* v = Env("TEXGEN_EMBEDDINGS")) embeddings = v;
  if (const char* v = Env("TEXGEN_THREADS")) threads = static_cast<int>(ParseInt("TEXGEN_THREADS", v, 1, 256));
  if (const char* v = Env("TEXGEN_RENDER_CONFIG")) {
    std::ifstream in(v);
    if (!in) throw Error(ErrorCode::kNotFound, std::string("render config not found: ") + v);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kInvalidArgument, std::string(v) + ": " + e.what());
    }
    ApplyRenderOverrides(j, render);
  }
}

void ServiceConfig::Validate() const {
  const std::pair<const char*, const fs::path*> paths[] = {
      {"checkpoint", &checkpoint}, {"corpus", &corpus}, {"embeddings", &embeddings}};
  for (const auto& [what, path] : paths) {
    if (path->empty()) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " path is required");
    if (!fs::exists(*path)) {
      throw Error(ErrorCode::kNotFound, std::string(what) + " not found: " + path->string());
    }
  }
  if (threads < 1) throw Error(ErrorCode::kInvalidArgument, "threads must be >= 1");
  render.Validate();
}

// ---- JSON views ---------------------------------------------------------------

json ArGridJson(const ArGrid& grid) {
  json out = json::array();
  for (const auto& e : grid.entries) {
    out.push_back({{"force", e.force}, {"speed", e.speed}, {"lsf", e.lsf}, {"variance", e.variance}});
  }
  return out;
}

json TapBankJson(const TapBank& bank) {
  json out = json::array();
  for (const auto& t : bank.traces) {
    out.push_back({{"impact_speed", t.impact_speed}, {"samples", t.samples}});
  }
  return out;
}

std::vector<double> LatentFromJson(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::kShapeError, "latent must be an array of 64 numbers");
  if (j.size() != static_cast<std::size_t>(kLatentDim)) {
    throw Error(ErrorCode::kShapeError,
                "latent has " + std::to_string(j.size()) + " entries, expected 64");
  }
  std::vector<double> z;
  z.reserve(kLatentDim);
  for (const auto& v : j) {
    if (!v.is_number()) throw Error(ErrorCode::kNonFiniteInput, "latent entries must be numbers");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw Error(ErrorCode::kNonFiniteInput, "latent has a non-finite entry");
    z.push_back(x);
  }
  return z;
}

// ---- Streaming ----------------------------------------------------------------

namespace {

double FiniteField(const json& j, const char* key, bool required, double fallback) {
  if (!j.contains(key)) {
    if (required) throw ProtocolError("missing_field", std::string("state message needs \"") + key + "\"");
    return fallback;
  }
  const auto& v = j.at(key);
  if (!v.is_number() || !std::isfinite(v.get<double>()) || v.get<double>() < 0.0) {
    throw ProtocolError("bad_field", std::string("\"") + key + "\" must be a finite number >= 0");
  }
  return v.get<double>();
}

}  // namespace

ClientMessage ParseClientMessage(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception&) {
    throw ProtocolError("bad_json", "message is not valid JSON");
  }
  if (!j.is_object()) throw ProtocolError("bad_json", "message must be a JSON object");
  std::string type = "state";
  if (j.contains("type")) {
    if (!j.at("type").is_string()) throw ProtocolError("bad_type", "\"type\" must be a string");
    type = j.at("type").get<std::string>();
  }
  if (type == "state") {
    ClientState s;
    s.f = FiniteField(j, "f", true, 0.0);
    s.v = FiniteField(j, "v", true, 0.0);
    if (j.contains("delta")) s.delta = FiniteField(j, "delta", true, 0.0);
    if (j.contains("tap") && !j.at("tap").is_null()) s.tap = FiniteField(j, "tap", true, 0.0);
    return s;
  }
  if (type == "start") {
    StartMessage m;
    if (j.contains("material")) {
      if (!j.at("material").is_string()) throw ProtocolError("bad_field", "\"material\" must be a string");
      m.material = j.at("material").get<std::string>();
    }
    if (j.contains("z")) {
      try {
        m.z = LatentFromJson(j.at("z"));
      } catch (const Error& e) {
        throw ProtocolError("bad_field", e.what());
      }
    }
    if (m.material.has_value() == m.z.has_value()) {
      throw ProtocolError("bad_start", "start needs exactly one of \"material\" or \"z\"");
    }
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_unsigned()) throw ProtocolError("bad_field", "\"seed\" must be an unsigned integer");
      m.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("duration_s")) {
      const double d = FiniteField(j, "duration_s", true, 0.0);
      m.duration_s = d;
    }
    if (j.contains("forces")) {
      if (!j.at("forces").is_boolean()) throw ProtocolError("bad_field", "\"forces\" must be a boolean");
      m.forces = j.at("forces").get<bool>();
    }
    return m;
  }
  if (type == "stop") return StopMessage{};
  throw ProtocolError("bad_type", "unknown message type \"" + type + "\"");
}

StreamEngine::StreamEngine(render::RenderMaterial material, const render::RenderConfig& cfg,
                           std::uint64_t seed)
    : material_(std::move(material)),
      cfg_(cfg),
      interp_(material_.ar_grid),
      synth_(seed, cfg.signal_rate),
      samples_per_tick_((cfg.Validate(), cfg.SamplesPerTick())) {}

void StreamEngine::Tick(const ClientState& state, std::span<double> out, render::ForceFrame& frame) {
  const std::size_t spt = static_cast<std::size_t>(samples_per_tick_);
  const double delta = state.delta ? *state.delta : state.f / cfg_.k_n;
  render::DeviceSample sample;
  sample.penetration = delta;
  sample.tangential_velocity = {state.v * 1e-3, 0.0};
  if (state.tap) {
    synth::RenderTap(material_.tap_bank, *state.tap, trace_);
    for (std::size_t i = 0; i < trace_.size(); ++i) {
      pending_[(ring_pos_ + i) % pending_.size()] += trace_[i];
    }
  }
  double y_n = 0.0;
  if (delta > 0.0) {
    interp_.Evaluate(state.f, state.v, params_);
    synth_.Synthesize(params_, out.first(spt));
    y_n = out[spt - 1];
  } else {
    std::fill(out.begin(), out.begin() + spt, 0.0);
  }
  const double tap_accel = pending_[ring_pos_];
  for (std::size_t i = 0; i < spt; ++i) {
    out[i] += pending_[ring_pos_];
    pending_[ring_pos_] = 0.0;
    ring_pos_ = (ring_pos_ + 1) % pending_.size();
  }
  frame = render::ComposeForce(sample, material_.mu, y_n, tap_accel, cfg_);
  ++ticks_;
}

std::vector<double> SynthesizeConstant(const render::RenderMaterial& material,
                                       const render::RenderConfig& cfg, double force,
                                       double speed_mm_s, double seconds, std::uint64_t seed) {
  if (!(seconds >= 0.0) || !std::isfinite(seconds)) {
    throw Error(ErrorCode::kInvalidArgument, "seconds must be finite and >= 0");
  }
  if (!(force >= 0.0) || !(speed_mm_s >= 0.0) || !std::isfinite(force) || !std::isfinite(speed_mm_s)) {
    throw Error(ErrorCode::kInvalidArgument, "force and speed must be finite and >= 0");
  }
  StreamEngine engine(material, cfg, seed);
  const long ticks = std::lround(seconds * cfg.servo_rate);
  const std::size_t spt = static_cast<std::size_t>(engine.samples_per_tick());
  std::vector<double> out(static_cast<std::size_t>(ticks) * spt);
  ClientState state{force, speed_mm_s, std::nullopt, std::nullopt};
  render::ForceFrame frame;
  for (long t = 0; t < ticks; ++t) {
    engine.Tick(state, std::span<double>(out.data() + t * spt, spt), frame);
  }
  return out;
}

std::string EncodeFrame(std::uint32_t seq, std::span<const double> samples) {
  if (samples.size() > 0xFFFF) throw Error(ErrorCode::kInvalidArgument, "frame holds at most 65535 samples");
  std::string out(6 + 4 * samples.size(), '\0');
  auto put32 = [&out](std::size_t at, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out[at + b] = static_cast<char>((v >> (8 * b)) & 0xFF);
  };
  put32(0, seq);
  out[4] = static_cast<char>(samples.size() & 0xFF);
  out[5] = static_cast<char>((samples.size() >> 8) & 0xFF);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const float f = static_cast<float>(samples[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put32(6 + 4 * i, bits);
  }
  return out;
}

DecodedFrame DecodeFrame(std::string_view bytes) {
  if (bytes.size() < 6) throw ProtocolError("bad_frame", "frame shorter than its header");
  auto get32 = [&bytes](std::size_t at) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + b])) << (8 * b);
    return v;
  };
  DecodedFrame f;
  f.seq = get32(0);
  const std::size_t count = static_cast<unsigned char>(bytes[4]) |
                            (static_cast<std::size_t>(static_cast<unsigned char>(bytes[5])) << 8);
  if (bytes.size() != 6 + 4 * count) throw ProtocolError("bad_frame", "frame length does not match its count");
  f.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = get32(6 + 4 * i);
    std::memcpy(&f.samples[i], &bits, 4);
  }
  return f;
}

void OutboundQueue::Push(Item item) {
  queued_ += item.samples;
  items_.push_back(std::move(item));
  while (queued_ > capacity_ && items_.size() > 1) {
    const Item& old = items_.front();
    if (gap_) {
      gap_->to_seq = old.seq;
      gap_->samples += old.samples;
    } else {
      gap_ = Gap{old.seq, old.seq, old.samples};
    }
    queued_ -= old.samples;
    ++dropped_frames_;
    items_.pop_front();
  }
}

std::optional<OutboundQueue::Gap> OutboundQueue::TakeGap() {
  auto g = gap_;
  gap_.reset();
  return g;
}

std::optional<OutboundQueue::Item> OutboundQueue::Pop() {
  if (items_.empty()) return std::nullopt;
  Item item = std::move(items_.front());
  items_.pop_front();
  queued_ -= item.samples;
  return item;
}

json GapJson(const OutboundQueue::Gap& gap) {
  return {{"type", "gap"}, {"from_seq", gap.from_seq}, {"to_seq", gap.to_seq}, {"samples", gap.samples}};
}

// ---- Service ------------------------------------------------------------------

std::unique_ptr<Service> Service::Load(const ServiceConfig& config) {
  config.Validate();
  auto model = vae::LoadCheckpoint(config.checkpoint);
  Corpus corpus = LoadCorpus(config.corpus);
  auto embeddings = align::LoadEmbeddings(config.embeddings);
  return std::make_unique<Service>(std::move(model), std::move(corpus), std::move(embeddings),
                                   config.render);
}

Service::Service(std::unique_ptr<vae::Model> model, Corpus corpus, vae::EmbeddingMap embeddings,
                 render::RenderConfig render)
    : model_(std::move(model)),
      corpus_(std::move(corpus)),
      embeddings_(std::move(embeddings)),
      render_(render) {
  render_.Validate();
  std::set<std::string> seen;
  for (const auto& rec : corpus_.materials) {
    if (!seen.insert(rec.SourceId()).second) continue;
    materials_.push_back({rec.SourceId(), rec.family, rec.class_label, rec.friction, rec.captions});
  }
  const auto collapsed = align::CollapseBySource(corpus_, align::EncodeCorpus(*model_, corpus_));
  for (const auto& m : collapsed) source_latents_.emplace(m.id, m.mean);
}

std::vector<double> Service::LatentFromText(const std::string& prompt) {
  return model_->TextToLatent(align::LookupEmbedding(embeddings_, prompt));
}

std::vector<double> Service::MaterialLatent(const std::string& id) const {
  auto it = source_latents_.find(id);
  if (it == source_latents_.end()) throw Error(ErrorCode::kNotFound, "unknown material: " + id);
  return it->second;
}

render::RenderMaterial DecodeToMaterial(vae::Model& model, std::span<const double> z,
                                        const render::RenderConfig& cfg) {
  render::RenderMaterial m;
  m.ar_grid = model.DecodeArGrid(z);
  m.tap_bank = model.DecodeTapBank(z);
  const auto& anchors = model.anchors();
  if (anchors.empty()) return m;
  try {
    m.mu = render::EstimateFriction(z, anchors, cfg.friction_k, cfg.friction_tau);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kZeroVector) throw;
    double sum = 0.0;
    for (const auto& a : anchors) sum += a.mu;
    m.mu = sum / static_cast<double>(anchors.size());
  }
  return m;
}

render::RenderMaterial Service::DecodeMaterial(std::span<const double> z) {
  return DecodeToMaterial(*model_, z, render_);
}

render::RenderMaterial Service::CorpusMaterial(const std::string& id) const {
  for (const auto& rec : corpus_.materials) {
    if (rec.id == id) return render::MaterialFromRecord(rec);
  }
  for (const auto& rec : corpus_.materials) {
    if (rec.SourceId() == id) return render::MaterialFromRecord(rec);
  }
  throw Error(ErrorCode::kNotFound, "unknown material: " + id);
}

render::RenderMaterial Service::ResolveStart(const StartMessage& start) {
  if (start.material) return CorpusMaterial(*start.material);
  return DecodeMaterial(*start.z);
}

std::vector<double> Service::LatentArgument(const json& v) const {
  if (v.is_string()) return MaterialLatent(v.get<std::string>());
  return LatentFromJson(v);
}

namespace {

HttpResponse JsonResponse(int status, const json& body) {
  return {status, "application/json", body.dump()};
}

HttpResponse ErrorResponse(const Error& e) {
  return JsonResponse(HttpStatusFor(e.code()), ErrorBody(ErrorCodeName(e.code()), e.what()));
}

const json& Field(const json& req, const char* key) {
  if (!req.is_object() || !req.contains(key)) {
    throw Error(ErrorCode::kInvalidArgument, std::string("request needs \"") + key + "\"");
  }
  return req.at(key);
}

}  // namespace

HttpResponse Service::Handle(std::string_view method, std::string_view target, std::string_view body) {
  std::string_view path = target;
  std::string_view query;
  if (auto q = target.find('?'); q != std::string_view::npos) {
    path = target.substr(0, q);
    query = target.substr(q + 1);
  }
  auto need = [&](std::string_view m) {
    if (method != m) {
      throw HttpResponse{405, "application/json",
                         ErrorBody("MethodNotAllowed", std::string(path) + " expects " + std::string(m)).dump()};
    }
  };
  auto parse = [&]() {
    try {
      return json::parse(body);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kFormatError, std::string("request body is not valid JSON: ") + e.what());
    }
  };
  try {
    if (path == "/materials") {
      need("GET");
      return Materials();
    }
    if (path == "/latent/from-text") {
      need("POST");
      return FromText(parse());
    }
    if (path == "/latent/average") {
      need("POST");
      return Average(parse());
    }
    if (path == "/decode") {
      need("POST");
      return Decode(parse());
    }
    if (path == "/simulate") {
      need("POST");
      return Simulate(parse());
    }
    if (path.starts_with("/logs/")) {
      need("GET");
      std::string_view format = "csv";
      if (query.starts_with("format=")) format = query.substr(7);
      return Log(path.substr(6), format);
    }
    return JsonResponse(404, ErrorBody("NotFound", "no route for " + std::string(path)));
  } catch (const HttpResponse& r) {
    return r;
  } catch (const Error& e) {
    return ErrorResponse(e);
  } catch (const json::exception& e) {
    return JsonResponse(400, ErrorBody("FormatError", e.what()));
  } catch (const std::exception& e) {
    return JsonResponse(500, ErrorBody("Internal", e.what()));
  }
}

HttpResponse Service::Materials() const {
  json list = json::array();
  for (const auto& m : materials_) {
    list.push_back({{"id", m.id},
                    {"family", m.family},
                    {"class_label", m.class_label},
                    {"friction", m.friction},
                    {"captions", m.captions}});
  }
  return JsonResponse(200, {{"materials", list}});
}

HttpResponse Service::FromText(const json& req) {
  const json& prompt = Field(req, "prompt");
  if (!prompt.is_string()) throw Error(ErrorCode::kInvalidArgument, "\"prompt\" must be a string");
  return JsonResponse(200, {{"z", LatentFromText(prompt.get<std::string>())}});
}

HttpResponse Service::Average(const json& req) {
  const auto a = LatentArgument(Field(req, "a"));
  const auto b = LatentArgument(Field(req, "b"));
  return JsonResponse(200, {{"z", align::AverageLatents(a, b)}});
}

HttpResponse Service::Decode(const json& req) {
  const auto z = LatentFromJson(Field(req, "z"));
  const auto m = DecodeMaterial(z);
  return JsonResponse(200, {{"ar_grid", ArGridJson(m.ar_grid)},
                            {"tap_bank", TapBankJson(m.tap_bank)},
                            {"mu", m.mu}});
}

HttpResponse Service::Simulate(const json& req) {
  const auto script = render::ParseScript(Field(req, "script"));
  render::RenderMaterial material;
  if (req.contains("material")) {
    if (!req.at("material").is_string()) throw Error(ErrorCode::kInvalidArgument, "\"material\" must be a string");
    material = CorpusMaterial(req.at("material").get<std::string>());
  } else {
    material = DecodeMaterial(LatentFromJson(Field(req, "z")));
  }
  render::SimOptions opt;
  if (req.contains("seed")) {
    if (!req.at("seed").is_number_unsigned()) throw Error(ErrorCode::kInvalidArgument, "\"seed\" must be an unsigned integer");
    opt.seed = req.at("seed").get<std::uint64_t>();
  }
  render::SimLog log = render::RunTrajectory(script, material, render_, opt);
  const auto timing = render::SummarizeTiming(log);
  const std::size_t ticks = log.ticks();
  std::string id;
  {
    std::lock_guard<std::mutex> lock(logs_mu_);
    id = "log-" + std::to_string(next_log_++);
    logs_.emplace(id, std::move(log));
  }
  return JsonResponse(200, {{"log_id", id},
                            {"ticks", ticks},
                            {"timing", {{"mean_us", timing.mean_us},
                                        {"p99_us", timing.p99_us},
                                        {"max_us", timing.max_us}}}});
}

HttpResponse Service::Log(std::string_view id, std::string_view format) {
  std::lock_guard<std::mutex> lock(logs_mu_);
  auto it = logs_.find(std::string(id));
  if (it == logs_.end()) throw Error(ErrorCode::kNotFound, "unknown log: " + std::string(id));
  std::ostringstream out;
  if (format == "csv") {
    render::WriteLogCsv(it->second, out);
    return {200, "text/csv", out.str()};
  }
  if (format == "wav") {
    synth::WriteWav(out, it->second.vibration, static_cast<int>(std::lround(it->second.signal_rate)));
    return {200, "audio/wav", out.str()};
  }
  throw Error(ErrorCode::kInvalidArgument, "format must be csv or wav");
}

}  // namespace texgen::service
