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

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>

#include "support/alloc_probe.h"
#include "texgen/lpc.h"

namespace texgen::service {
namespace {

namespace fs = std::filesystem;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

// ---- Pure helpers -------------------------------------------------------------

TEST(ErrorMapping, ExitCodesAreDistinct) {
  EXPECT_EQ(ExitCodeFor(ErrorCode::kInvalidArgument), 2);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kIoError), 3);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kNotFound), 3);
  EXPECT_EQ(ExitCodeFor(ErrorCode::kEmbeddingNotFound), 4);
  const ErrorCode others[] = {
      ErrorCode::kFormatError,       ErrorCode::kInsufficientClasses, ErrorCode::kInvalidLsf,
      ErrorCode::kUnstablePolynomial, ErrorCode::kNonFiniteInput,      ErrorCode::kDegenerateGrid,
      ErrorCode::kInvalidScript,     ErrorCode::kZeroVector,          ErrorCode::kShapeError,
      ErrorCode::kBatchTooSmall,     ErrorCode::kNonFiniteGradient,   ErrorCode::kModelNotReady,
      ErrorCode::kEmptyIndex,        ErrorCode::kDegenerateAxis,      ErrorCode::kEmptyInput,
      ErrorCode::kDegenerateInput};
  std::set<int> seen{0, 2, 3, 4};
  for (ErrorCode c : others) {
    const int rc = ExitCodeFor(c);
    EXPECT_GE(rc, 5);
    EXPECT_TRUE(seen.insert(rc).second) << ErrorCodeName(c);
  }
  EXPECT_EQ(HttpStatusFor(ErrorCode::kEmbeddingNotFound), 404);
  EXPECT_EQ(HttpStatusFor(ErrorCode::kShapeError), 400);
  EXPECT_EQ(ErrorBody("X", "y")["error"]["code"], "X");
}

TEST(ClientMessages, ParsesAndRejects) {
  auto s = std::get<ClientState>(ParseClientMessage(R"({"f": 1.5, "v": 120, "delta": 0.003, "tap": 200})"));
  EXPECT_EQ(s.f, 1.5);
  EXPECT_EQ(s.v, 120.0);
  EXPECT_EQ(*s.delta, 0.003);
  EXPECT_EQ(*s.tap, 200.0);
  s = std::get<ClientState>(ParseClientMessage(R"({"type": "state", "f": 0, "v": 0})"));
  EXPECT_FALSE(s.delta.has_value());
  const auto start = std::get<StartMessage>(
      ParseClientMessage(R"({"type": "start", "material": "M001", "seed": 7, "duration_s": 1})"));
  EXPECT_EQ(*start.material, "M001");
  EXPECT_EQ(start.seed, 7u);
  EXPECT_EQ(*start.duration_s, 1.0);
  EXPECT_TRUE(std::holds_alternative<StopMessage>(ParseClientMessage(R"({"type": "stop"})")));

  auto code_of = [](const char* text) {
    try {
      ParseClientMessage(text);
    } catch (const ProtocolError& e) {
      return e.code();
    }
    return std::string("accepted");
  };
  EXPECT_EQ(code_of("not json"), "bad_json");
  EXPECT_EQ(code_of("[1, 2]"), "bad_json");
  EXPECT_EQ(code_of(R"({"v": 1})"), "missing_field");
  EXPECT_EQ(code_of(R"({"f": -1, "v": 1})"), "bad_field");
  EXPECT_EQ(code_of(R"({"f": "1", "v": 1})"), "bad_field");
  EXPECT_EQ(code_of(R"({"type": "dance"})"), "bad_type");
  EXPECT_EQ(code_of(R"({"type": "start"})"), "bad_start");
  EXPECT_EQ(code_of(R"({"type": "start", "material": "M", "z": []})"), "bad_field");
}

TEST(Frames, LayoutAndRoundTrip) {
  const std::vector<double> samples{0.5, -1.25, 3.0};
  const std::string bytes = EncodeFrame(0x01020304u, samples);
  ASSERT_EQ(bytes.size(), 6u + 12u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 0x04);
  EXPECT_EQ(static_cast<unsigned char>(bytes[3]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 3);
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 0);
  // 0.5f is 0x3F000000.
  EXPECT_EQ(static_cast<unsigned char>(bytes[9]), 0x3F);
  const auto f = DecodeFrame(bytes);
  EXPECT_EQ(f.seq, 0x01020304u);
  EXPECT_EQ(f.samples, (std::vector<float>{0.5f, -1.25f, 3.0f}));
  EXPECT_THROW(DecodeFrame(bytes.substr(0, 10)), ProtocolError);
  EXPECT_THROW(DecodeFrame("abc"), ProtocolError);
}

TEST(Backpressure, DropsOldestAndReportsGap) {
  OutboundQueue q(5000);
  for (std::uint32_t s = 0; s < 50; ++s) q.Push({s, 100, "b", ""});
  EXPECT_EQ(q.queued_samples(), 5000u);
  EXPECT_FALSE(q.TakeGap().has_value());
  for (std::uint32_t s = 50; s < 60; ++s) q.Push({s, 100, "b", ""});
  EXPECT_EQ(q.queued_samples(), 5000u);
  EXPECT_EQ(q.dropped_frames(), 10u);
  const auto gap = q.TakeGap();
  ASSERT_TRUE(gap.has_value());
  EXPECT_EQ(gap->from_seq, 0u);
  EXPECT_EQ(gap->to_seq, 9u);
  EXPECT_EQ(gap->samples, 1000u);
  EXPECT_FALSE(q.TakeGap().has_value());
  EXPECT_EQ(q.Pop()->seq, 10u);
  EXPECT_EQ(GapJson(*gap)["type"], "gap");
}

// ---- Stream engine ------------------------------------------------------------

render::RenderMaterial FirstMaterial() {
  static const Corpus corpus = GenerateSyntheticCorpus(5, 4);
  return render::MaterialFromRecord(corpus.materials[1]);
}

TEST(StreamEngine, ConstantStateMatchesDirectSynthesis) {
  const auto material = FirstMaterial();
  const render::RenderConfig cfg;
  const auto offline = SynthesizeConstant(material, cfg, 1.0, 100.0, 1.0, 42);
  ASSERT_EQ(offline.size(), 10000u);
  // Oracle: one interpolated parameter set driving the synthesizer directly.
  const synth::Interpolator interp(material.ar_grid);
  synth::Synthesizer direct(42);
  const auto expect = direct.Synthesize(interp.Evaluate(1.0, 100.0), 10000);
  EXPECT_EQ(offline, expect);

  StreamEngine engine(material, cfg, 42);
  std::vector<double> block(10);
  render::ForceFrame frame;
  for (int t = 0; t < 1000; ++t) {
    engine.Tick({1.0, 100.0, std::nullopt, std::nullopt}, block, frame);
    for (int i = 0; i < 10; ++i) ASSERT_EQ(block[i], offline[t * 10 + i]);
  }
  EXPECT_EQ(engine.ticks(), 1000u);
  EXPECT_NEAR(frame.f_n, 1.0, 1e-12);
  EXPECT_NEAR(frame.f_t, material.mu * 1.0, 1e-12);
}

TEST(StreamEngine, OutOfContactIsSilentAndTapsSuperpose) {
  const auto material = FirstMaterial();
  StreamEngine engine(material, render::RenderConfig{}, 1);
  std::vector<double> block(10);
  render::ForceFrame frame;
  engine.Tick({0.0, 50.0, std::nullopt, std::nullopt}, block, frame);
  for (double v : block) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(frame.f_n, 0.0);

  const auto trace = synth::RenderTap(material.tap_bank, 150.0);
  std::vector<double> out;
  engine.Tick({0.0, 0.0, std::nullopt, 150.0}, block, frame);
  out.insert(out.end(), block.begin(), block.end());
  for (int t = 0; t < 4; ++t) {
    engine.Tick({0.0, 0.0, std::nullopt, std::nullopt}, block, frame);
    out.insert(out.end(), block.begin(), block.end());
  }
  // Second tap 50 samples after the first.
  engine.Tick({0.0, 0.0, std::nullopt, 150.0}, block, frame);
  out.insert(out.end(), block.begin(), block.end());
  for (int t = 0; t < 14; ++t) {
    engine.Tick({0.0, 0.0, std::nullopt, std::nullopt}, block, frame);
    out.insert(out.end(), block.begin(), block.end());
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    double expect = 0.0;
    if (i < 100) expect += trace[i];
    if (i >= 50 && i < 150) expect += trace[i - 50];
    EXPECT_DOUBLE_EQ(out[i], expect) << i;
  }
}

TEST(StreamEngine, TickDoesNotAllocate) {
  StreamEngine engine(FirstMaterial(), render::RenderConfig{}, 3);
  std::vector<double> block(10);
  render::ForceFrame frame;
  engine.Tick({1.0, 80.0, std::nullopt, 100.0}, block, frame);
  const std::size_t before = testing::AllocationCount();
  for (int t = 0; t < 2000; ++t) {
    const double v = 20.0 + 0.1 * t;
    engine.Tick({0.5 + 0.0005 * t, v, std::nullopt, t % 200 == 0 ? std::optional<double>(120.0) : std::nullopt},
                block, frame);
  }
  EXPECT_EQ(testing::AllocationCount(), before);
}

// ---- Service handlers ---------------------------------------------------------

struct Fixture {
  Corpus corpus = GenerateSyntheticCorpus(5, 4);
  vae::EmbeddingMap embeddings = SyntheticCaptionEmbeddings(corpus, 2);
  std::unique_ptr<vae::Model> model;

  Fixture() {
    model = std::make_unique<vae::Model>(vae::NetConfig{}, 1);
    model->SetNormStats(Normalize(corpus).second);
    model->set_trained(true);
    model->anchors() = align::BuildAnchorSet(*model, corpus);
  }

  std::unique_ptr<Service> MakeService() {
    auto copy = std::make_unique<vae::Model>(vae::NetConfig{}, 1);
    copy->SetNormStats(model->norm_stats());
    copy->set_trained(true);
    copy->anchors() = model->anchors();
    return std::make_unique<Service>(std::move(copy), corpus, embeddings, render::RenderConfig{});
  }
};

json Body(const HttpResponse& r) { return json::parse(r.body); }

TEST(ServiceHandlers, MaterialsAndText) {
  Fixture fx;
  auto svc = fx.MakeService();
  const auto list = Body(svc->Handle("GET", "/materials", ""));
  ASSERT_EQ(list["materials"].size(), 4u);
  EXPECT_EQ(list["materials"][0]["id"], fx.corpus.materials[0].id);

  const std::string prompt = fx.corpus.materials[2].captions[0];
  const auto r = svc->Handle("POST", "/latent/from-text", json{{"prompt", prompt}}.dump());
  ASSERT_EQ(r.status, 200);
  const auto z = Body(r)["z"].get<std::vector<double>>();
  EXPECT_EQ(z, fx.model->TextToLatent(fx.embeddings.at(prompt)));

  const auto missing = svc->Handle("POST", "/latent/from-text", R"({"prompt": "velvet moss"})");
  EXPECT_EQ(missing.status, 404);
  EXPECT_EQ(Body(missing)["error"]["code"], "EmbeddingNotFound");
}

TEST(ServiceHandlers, AverageIsIdempotentAndAcceptsIds) {
  Fixture fx;
  auto svc = fx.MakeService();
  std::vector<double> z(kLatentDim);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (double& v : z) v = g(rng);
  const auto same = Body(svc->Handle("POST", "/latent/average", json{{"a", z}, {"b", z}}.dump()));
  EXPECT_EQ(same["z"].get<std::vector<double>>(), z);

  const std::string a = fx.corpus.materials[0].id, b = fx.corpus.materials[3].id;
  const auto mid = Body(svc->Handle("POST", "/latent/average", json{{"a", a}, {"b", b}}.dump()));
  const auto za = svc->MaterialLatent(a), zb = svc->MaterialLatent(b);
  const auto got = mid["z"].get<std::vector<double>>();
  for (int i = 0; i < kLatentDim; ++i) EXPECT_EQ(got[i], 0.5 * (za[i] + zb[i]));
  EXPECT_EQ(svc->Handle("POST", "/latent/average", json{{"a", "nope"}, {"b", b}}.dump()).status, 404);
  EXPECT_EQ(svc->Handle("POST", "/latent/average", json{{"a", z}}.dump()).status, 400);
}

TEST(ServiceHandlers, DecodeFuzzIsTotal) {
  Fixture fx;
  auto svc = fx.MakeService();
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> z(kLatentDim);
    for (double& v : z) v = g(rng);
    if (trial == 0) std::fill(z.begin(), z.end(), 0.0);
    const auto r = svc->Handle("POST", "/decode", json{{"z", z}}.dump());
    ASSERT_EQ(r.status, 200) << r.body;
    const auto j = Body(r);
    ASSERT_EQ(j["ar_grid"].size(), static_cast<std::size_t>(kNumConditions));
    ASSERT_EQ(j["tap_bank"].size(), static_cast<std::size_t>(kNumTapTraces));
    for (const auto& e : j["ar_grid"]) {
      const auto lsf = e["lsf"].get<std::vector<double>>();
      ASSERT_NO_THROW(lpc::ValidateLsf(lsf));
      std::array<double, kArOrder> a{};
      lpc::LsfToPredictor(lsf, a);
      ASSERT_TRUE(lpc::IsStable(a));
      ASSERT_GE(e["variance"].get<double>(), 0.0);
    }
    ASSERT_GE(j["mu"].get<double>(), 0.0);
  }
}

TEST(ServiceHandlers, DecodeErrorsAreStructured) {
  Fixture fx;
  auto svc = fx.MakeService();
  auto code = [&](const char* body) {
    const auto r = svc->Handle("POST", "/decode", body);
    return std::make_pair(r.status, Body(r)["error"]["code"].get<std::string>());
  };
  EXPECT_EQ(code(R"({"z": [1, 2]})"), std::make_pair(400, std::string("ShapeError")));
  EXPECT_EQ(code("{oops"), std::make_pair(400, std::string("FormatError")));
  EXPECT_EQ(code("{}"), std::make_pair(400, std::string("InvalidArgument")));
  EXPECT_EQ(svc->Handle("GET", "/decode", "").status, 405);
  EXPECT_EQ(svc->Handle("GET", "/nowhere", "").status, 404);
}

TEST(ServiceHandlers, SimulateThenFetchLogs) {
  Fixture fx;
  auto svc = fx.MakeService();
  const json script = json::array({{{"duration_s", 0.2}, {"force_N", 1.0}, {"speed_mm_s", 80}, {"tap", 150}}});
  const auto r = svc->Handle("POST", "/simulate",
                             json{{"script", script}, {"material", fx.corpus.materials[1].id}}.dump());
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = Body(r);
  EXPECT_EQ(j["ticks"], 200);
  const std::string id = j["log_id"];
  const auto csv = svc->Handle("GET", "/logs/" + id, "");
  EXPECT_EQ(csv.content_type, "text/csv");
  EXPECT_TRUE(csv.body.starts_with("tick,delta_m,v_t_m_s,F_n,F_t,F_vib,F_tap,compute_us\n"));
  EXPECT_EQ(std::count(csv.body.begin(), csv.body.end(), '\n'), 201);
  const auto wav = svc->Handle("GET", "/logs/" + id + "?format=wav", "");
  EXPECT_EQ(wav.content_type, "audio/wav");
  EXPECT_EQ(wav.body.substr(0, 4), "RIFF");
  EXPECT_EQ(wav.body.size(), 58u + 4u * 2000u);
  EXPECT_EQ(svc->Handle("GET", "/logs/log-999", "").status, 404);

  std::vector<double> z(kLatentDim, 0.1);
  EXPECT_EQ(svc->Handle("POST", "/simulate", json{{"script", script}, {"z", z}}.dump()).status, 200);
  const auto bad = svc->Handle("POST", "/simulate", json{{"script", json::array({{{"duration_s", -1}}})}, {"z", z}}.dump());
  EXPECT_EQ(Body(bad)["error"]["code"], "InvalidScript");
}

// ---- Configuration ------------------------------------------------------------

TEST(ServiceConfig, EnvironmentOverridesAndValidation) {
  ServiceConfig cfg;
  ::setenv("TEXGEN_PORT", "9123", 1);
  ::setenv("TEXGEN_HOST", "0.0.0.0", 1);
  ::setenv("TEXGEN_CORPUS", "/nonexistent/corpus", 1);
  cfg.ApplyEnvironment();
  EXPECT_EQ(cfg.port, 9123);
  EXPECT_EQ(cfg.host, "0.0.0.0");
  EXPECT_EQ(cfg.corpus, fs::path("/nonexistent/corpus"));
  ::setenv("TEXGEN_PORT", "http", 1);
  EXPECT_THROW(cfg.ApplyEnvironment(), Error);
  ::unsetenv("TEXGEN_PORT");
  ::unsetenv("TEXGEN_HOST");
  ::unsetenv("TEXGEN_CORPUS");

  cfg.checkpoint = "/nonexistent/ckpt.bin";
  try {
    cfg.Validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
  }
  render::RenderConfig r;
  ApplyRenderOverrides(json{{"k_n", 800.0}, {"friction_k", 3}}, r);
  EXPECT_EQ(r.k_n, 800.0);
  EXPECT_EQ(r.friction_k, 3);
  EXPECT_THROW(ApplyRenderOverrides(json{{"spring", 1.0}}, r), Error);
  EXPECT_THROW(ApplyRenderOverrides(json{{"k_n", -1.0}}, r), Error);
}

// ---- Network ------------------------------------------------------------------

std::string FileBytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("texgen_server_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    vae::SaveCheckpoint(*fx_.model, dir_ / "checkpoint.bin");
    SaveCorpus(fx_.corpus, dir_ / "corpus");
    align::SaveEmbeddings(fx_.embeddings, dir_ / "embeddings.json");
    cfg_.checkpoint = dir_ / "checkpoint.bin";
    cfg_.corpus = dir_ / "corpus";
    cfg_.embeddings = dir_ / "embeddings.json";
    cfg_.port = 0;
    before_ = Snapshot();
    svc_ = Service::Load(cfg_);
    server_ = std::make_unique<Server>(*svc_, "127.0.0.1", 0, 2);
    server_->Start();
  }

  void TearDown() override {
    server_.reset();
    EXPECT_EQ(Snapshot(), before_) << "service modified its inputs";
    fs::remove_all(dir_);
  }

  std::map<std::string, std::string> Snapshot() const {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir_)) {
      if (e.is_regular_file()) out[e.path().string()] = FileBytes(e.path());
    }
    return out;
  }

  http::response<http::string_body> Request(http::verb verb, const std::string& target, const std::string& body) {
    net::io_context ioc;
    tcp::socket sock(ioc);
    sock.connect({net::ip::make_address("127.0.0.1"), server_->port()});
    http::request<http::string_body> req(verb, target, 11);
    req.set(http::field::host, "127.0.0.1");
    req.body() = body;
    req.prepare_payload();
    http::write(sock, req);
    beast::flat_buffer buf;
    http::response<http::string_body> res;
    http::read(sock, buf, res);
    return res;
  }

  std::unique_ptr<websocket::stream<tcp::socket>> OpenStream(net::io_context& ioc, bool subprotocol = true) {
    auto ws = std::make_unique<websocket::stream<tcp::socket>>(ioc);
    ws->next_layer().connect({net::ip::make_address("127.0.0.1"), server_->port()});
    if (subprotocol) {
      ws->set_option(websocket::stream_base::decorator([](websocket::request_type& req) {
        req.set(http::field::sec_websocket_protocol, kStreamSubprotocol);
      }));
    }
    websocket::response_type res;
    ws->handshake(res, "127.0.0.1", "/stream");
    EXPECT_EQ(std::string(res[http::field::sec_websocket_protocol]), kStreamSubprotocol);
    return ws;
  }

  static void Send(websocket::stream<tcp::socket>& ws, const json& j) {
    ws.text(true);
    ws.write(net::buffer(j.dump()));
  }

  Fixture fx_;
  fs::path dir_;
  ServiceConfig cfg_;
  std::map<std::string, std::string> before_;
  std::unique_ptr<Service> svc_;
  std::unique_ptr<Server> server_;
};

TEST_F(ServerTest, HttpEndpoints) {
  auto res = Request(http::verb::get, "/materials", "");
  EXPECT_EQ(res.result_int(), 200);
  EXPECT_EQ(json::parse(res.body())["materials"].size(), 4u);
  res = Request(http::verb::post, "/latent/from-text", R"({"prompt": "no such prompt"})");
  EXPECT_EQ(res.result_int(), 404);
  EXPECT_EQ(json::parse(res.body())["error"]["code"], "EmbeddingNotFound");
  std::vector<double> z(kLatentDim, 0.3);
  res = Request(http::verb::post, "/decode", json{{"z", z}}.dump());
  EXPECT_EQ(res.result_int(), 200);
  EXPECT_EQ(res[http::field::content_type], "application/json");
}

TEST_F(ServerTest, OneSecondStreamDeliversExactSamples) {
  net::io_context ioc;
  auto ws = OpenStream(ioc);
  const std::string id = fx_.corpus.materials[1].id;
  Send(*ws, {{"type", "start"}, {"material", id}, {"seed", 9}, {"duration_s", 1.0}});
  const auto t0 = std::chrono::steady_clock::now();
  Send(*ws, {{"f", 1.0}, {"v", 100.0}});
  std::vector<float> samples;
  std::uint32_t next_seq = 0;
  int gaps = 0, force_frames = 0;
  json end;
  while (end.is_null()) {
    beast::flat_buffer buf;
    ws->read(buf);
    const std::string data = beast::buffers_to_string(buf.data());
    if (ws->got_binary()) {
      const auto f = DecodeFrame(data);
      EXPECT_EQ(f.seq, next_seq++);
      samples.insert(samples.end(), f.samples.begin(), f.samples.end());
      continue;
    }
    const json j = json::parse(data);
    if (j["type"] == "gap") ++gaps;
    if (j["type"] == "forces") {
      ++force_frames;
      EXPECT_EQ(j["f_n"].size(), 10u);
    }
    if (j["type"] == "end") end = j;
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(samples.size(), 10000u);
  EXPECT_EQ(end["samples"], 10000);
  EXPECT_EQ(gaps, 0);
  EXPECT_EQ(force_frames, 100);
  EXPECT_GT(elapsed, 0.9);
  EXPECT_LT(elapsed, 2.0);
  const auto offline = SynthesizeConstant(svc_->CorpusMaterial(id), render::RenderConfig{}, 1.0, 100.0, 1.0, 9);
  ASSERT_EQ(offline.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) ASSERT_EQ(samples[i], static_cast<float>(offline[i])) << i;
  Send(*ws, {{"type", "stop"}});
  beast::flat_buffer buf;
  beast::error_code ec;
  ws->read(buf, ec);
  EXPECT_EQ(ec, websocket::error::closed);
  EXPECT_EQ(ws->reason().code, websocket::close_code::normal);
}

TEST_F(ServerTest, StreamRequiresSubprotocol) {
  net::io_context ioc;
  EXPECT_THROW(OpenStream(ioc, false), beast::system_error);
}

TEST_F(ServerTest, ProtocolViolationsCloseWithCode) {
  const std::pair<std::string, std::string> cases[] = {
      {"garbage", "bad_json"},
      {R"({"f": 1, "v": 1})", "not_started"},
      {R"({"type": "start", "material": "nope"})", "NotFound"},
  };
  for (const auto& [msg, code] : cases) {
    net::io_context ioc;
    auto ws = OpenStream(ioc);
    ws->text(true);
    ws->write(net::buffer(msg));
    beast::flat_buffer buf;
    beast::error_code ec;
    ws->read(buf, ec);
    EXPECT_EQ(ec, websocket::error::closed) << msg;
    EXPECT_EQ(ws->reason().code, websocket::close_code::policy_error) << msg;
    EXPECT_EQ(std::string(ws->reason().reason.c_str()), code);
  }
  net::io_context ioc;
  auto ws = OpenStream(ioc);
  ws->binary(true);
  ws->write(net::buffer(std::string("\x01\x02", 2)));
  beast::flat_buffer buf;
  beast::error_code ec;
  ws->read(buf, ec);
  EXPECT_EQ(std::string(ws->reason().reason.c_str()), "binary_not_allowed");
}

}  // namespace
}  // namespace texgen::service
