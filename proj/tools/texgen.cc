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

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "texgen/align.h"
#include "texgen/corpus.h"
#include "texgen/eval.h"
#include "texgen/render.h"
#include "texgen/service.h"
#include "texgen/synth.h"
#include "texgen/vae.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace texgen;

namespace {

json ReadJson(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "file not found: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormatError, path.string() + ": " + e.what());
  }
}

void WriteJson(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

void MakeDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
}

// A latent file holds either a bare array or {"z": [...]}.
std::vector<double> ReadLatent(const fs::path& path) {
  const json j = ReadJson(path);
  return service::LatentFromJson(j.is_object() && j.contains("z") ? j.at("z") : j);
}

std::pair<double, double> ParseFv(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "--fv expects FORCE,SPEED");
  try {
    std::size_t used_f = 0, used_v = 0;
    const std::string fs_text = text.substr(0, comma), vs_text = text.substr(comma + 1);
    const double f = std::stod(fs_text, &used_f);
    const double v = std::stod(vs_text, &used_v);
    if (used_f != fs_text.size() || used_v != vs_text.size()) throw std::invalid_argument("trailing");
    return {f, v};
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kInvalidArgument, "--fv expects FORCE,SPEED, got " + text);
  }
}

fs::path DefaultEmbeddings(const fs::path& corpus, const fs::path& given) {
  return given.empty() ? corpus / "embeddings.json" : given;
}

struct MaterialSource {
  fs::path corpus;
  std::string material;
  fs::path checkpoint;
  fs::path latent;
  fs::path render_config;

  void AddOptions(CLI::App* cmd) {
    cmd->add_option("--material", material, "Material id from --corpus");
    cmd->add_option("--corpus", corpus, "Corpus directory");
    cmd->add_option("--latent", latent, "Latent JSON file, decoded with --checkpoint");
    cmd->add_option("--checkpoint", checkpoint, "Model checkpoint");
    cmd->add_option("--render-config", render_config, "JSON file of render settings");
  }

  render::RenderConfig Config() const {
    render::RenderConfig cfg;
    if (!render_config.empty()) service::ApplyRenderOverrides(ReadJson(render_config), cfg);
    return cfg;
  }

  render::RenderMaterial Resolve(const render::RenderConfig& cfg) const {
    if (material.empty() == latent.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "give exactly one of --material or --latent");
    }
    if (!material.empty()) {
      if (corpus.empty()) throw Error(ErrorCode::kInvalidArgument, "--material needs --corpus");
      const Corpus c = LoadCorpus(corpus);
      for (const auto& rec : c.materials) {
        if (rec.id == material) return render::MaterialFromRecord(rec);
      }
      throw Error(ErrorCode::kNotFound, "unknown material: " + material);
    }
    if (checkpoint.empty()) throw Error(ErrorCode::kInvalidArgument, "--latent needs --checkpoint");
    const auto z = ReadLatent(latent);
    auto model = vae::LoadCheckpoint(checkpoint);
    return service::DecodeToMaterial(*model, z, cfg);
  }
};

// ---- Commands -----------------------------------------------------------------

struct GenCorpusArgs {
  std::uint64_t seed = 0;
  int materials = 100;
  fs::path out;
};

void GenCorpus(const GenCorpusArgs& a) {
  if (a.materials < 0) throw Error(ErrorCode::kInvalidArgument, "--materials must be >= 0");
  const Corpus corpus = GenerateSyntheticCorpus(a.seed, a.materials);
  MakeDir(a.out);
  SaveCorpus(corpus, a.out);
  align::SaveEmbeddings(SyntheticCaptionEmbeddings(corpus, a.seed), a.out / "embeddings.json");
  std::cout << "wrote " << corpus.materials.size() << " materials to " << a.out.string() << '\n';
}

struct AugmentArgs {
  fs::path corpus;
  fs::path out;
  int augments = 20;
  std::uint64_t seed = 0;
};

void Augment(const AugmentArgs& a) {
  if (a.augments < 0) throw Error(ErrorCode::kInvalidArgument, "--augments must be >= 0");
  const Corpus corpus = LoadCorpus(a.corpus);
  const Corpus out = BuildTrainingCorpus(corpus, a.augments, a.seed);
  MakeDir(a.out);
  SaveCorpus(out, a.out);
  const fs::path emb = a.corpus / "embeddings.json";
  if (fs::exists(emb)) align::SaveEmbeddings(align::LoadEmbeddings(emb), a.out / "embeddings.json");
  std::cout << "wrote " << out.materials.size() << " augmented records from " << corpus.materials.size()
            << " materials to " << a.out.string() << '\n';
}

struct TrainArgs {
  fs::path corpus;
  fs::path config;
  fs::path embeddings;
  fs::path out;
  int epochs = -1;
  long long seed = -1;
  int log_every = 10;
};

void Train(const TrainArgs& a) {
  vae::TrainConfig tc;
  vae::NetConfig net;
  if (!a.config.empty()) {
    json j = ReadJson(a.config);
    if (!j.is_object()) throw Error(ErrorCode::kFormatError, "config must be a JSON object");
    if (j.contains("net")) {
      net = vae::NetConfig::FromJson(j.at("net"));
      j.erase("net");
    }
    tc = vae::TrainConfig::FromJson(j);
  }
  if (a.epochs >= 0) tc.epochs = a.epochs;
  if (a.seed >= 0) tc.seed = static_cast<std::uint64_t>(a.seed);
  tc.Validate();

  const Corpus corpus = LoadCorpus(a.corpus);
  const auto embeddings = align::LoadEmbeddings(DefaultEmbeddings(a.corpus, a.embeddings));
  const auto stats = Normalize(corpus).second;
  vae::Model model(net, tc.seed);
  model.SetNormStats(stats);
  const auto data = vae::BuildTrainingSet(corpus, embeddings, stats);
  std::cout << "training on " << data.size() << " records for " << tc.epochs << " epochs\n";
  const auto metrics = vae::Train(model, data, tc, [&](const vae::EpochMetrics& m) {
    if (a.log_every > 0 && (m.epoch == 1 || m.epoch % a.log_every == 0 || m.epoch == tc.epochs)) {
      std::printf("epoch %4d  total %.5f  rec %.5f  kl %.4f  nce %.4f  align %.4f  |g| %.3f  %.2fs\n",
                  m.epoch, m.terms.total, m.terms.reconstruction(), m.terms.raw_kl,
                  m.terms.raw_info_nce, m.terms.raw_align, m.grad_norm, m.wall_s);
      std::fflush(stdout);
    }
  });
  model.anchors() = align::BuildAnchorSet(model, corpus);
  MakeDir(a.out);
  vae::SaveCheckpoint(model, a.out / "checkpoint.bin");
  vae::WriteMetricsCsv(metrics, a.out / "metrics.csv");
  if (!metrics.empty()) {
    std::printf("reconstruction %.5f -> %.5f (%.1f%% of epoch 1)\n",
                metrics.front().terms.reconstruction(), metrics.back().terms.reconstruction(),
                100.0 * metrics.back().terms.reconstruction() / metrics.front().terms.reconstruction());
  }
  std::cout << "wrote " << (a.out / "checkpoint.bin").string() << " and metrics.csv\n";
}

struct SynthArgs {
  MaterialSource source;
  std::string fv;
  double seconds = 1.0;
  std::uint64_t seed = 0;
  fs::path out;
};

void Synth(const SynthArgs& a) {
  const auto [f, v] = ParseFv(a.fv);
  const auto cfg = a.source.Config();
  const auto material = a.source.Resolve(cfg);
  const auto samples = service::SynthesizeConstant(material, cfg, f, v, a.seconds, a.seed);
  if (a.out.has_parent_path()) MakeDir(a.out.parent_path());
  synth::WriteWav(a.out, samples, static_cast<int>(std::lround(cfg.signal_rate)));
  std::cout << "wrote " << samples.size() << " samples at " << cfg.signal_rate << " Hz to "
            << a.out.string() << '\n';
}

struct SimulateArgs {
  MaterialSource source;
  fs::path script;
  std::uint64_t seed = 0;
  fs::path out;
};

void Simulate(const SimulateArgs& a) {
  const auto cfg = a.source.Config();
  const auto material = a.source.Resolve(cfg);
  const auto script = render::LoadScript(a.script);
  render::SimOptions opt;
  opt.seed = a.seed;
  const auto log = render::RunTrajectory(script, material, cfg, opt);
  const auto timing = render::SummarizeTiming(log);
  MakeDir(a.out);
  render::WriteLogCsv(log, a.out / "log.csv");
  render::WriteVibrationWav(log, a.out / "vibration.wav");
  WriteJson({{"ticks", log.ticks()},
             {"samples", log.vibration.size()},
             {"mu", material.mu},
             {"timing", {{"mean_us", timing.mean_us}, {"p99_us", timing.p99_us}, {"max_us", timing.max_us}}}},
            a.out / "summary.json");
  std::printf("%zu ticks, mean %.2f us, p99 %.2f us, max %.2f us\n", log.ticks(), timing.mean_us,
              timing.p99_us, timing.max_us);
}

struct EvalArgs {
  fs::path checkpoint;
  fs::path corpus;
  fs::path embeddings;
  fs::path ratings;
  fs::path out;
  std::uint64_t seed = 0;
};

void Eval(const EvalArgs& a) {
  auto model = vae::LoadCheckpoint(a.checkpoint);
  const Corpus corpus = LoadCorpus(a.corpus);
  MakeDir(a.out);
  json report = json::object();

  const auto latents = align::EncodeCorpus(*model, corpus);
  std::map<std::string, int> label_of;
  std::vector<int> labels;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    const std::string& source = corpus.materials[i].SourceId();
    labels.push_back(label_of.emplace(source, static_cast<int>(label_of.size())).first->second);
    rows.push_back(latents[i].mean);
    ids.push_back(latents[i].id);
  }
  const auto points = eval::MakePoints(rows);
  report["clustering"] = eval::ClusteringMetrics(points, labels, a.seed).ToJson();
  eval::WritePcaCsv(ids, labels, eval::Pca2(points), a.out / "pca.csv");

  const fs::path emb = DefaultEmbeddings(a.corpus, a.embeddings);
  if (fs::exists(emb) || !a.embeddings.empty()) {
    const auto score = align::CaptionRetrieval(*model, corpus, align::LoadEmbeddings(emb),
                                               align::CollapseBySource(corpus, latents));
    report["caption_retrieval"] = {{"correct", score.correct}, {"total", score.total}, {"rate", score.rate()}};
  }
  if (!a.ratings.empty()) {
    const auto records = eval::LoadRatingsCsv(a.ratings);
    eval::WriteProjectionCsv(records, a.out / "projections.csv");
    json rates = json::object();
    for (const auto& [attr, rate] : eval::InsideRate(records)) rates[eval::AttributeName(attr)] = rate;
    report["inside_rate"] = rates;
  }
  WriteJson(report, a.out / "metrics.json");
  std::cout << report.dump(2) << '\n';
}

struct EncodeTextArgs {
  fs::path checkpoint;
  fs::path embeddings;
  std::string prompt;
  fs::path out;
};

void EncodeText(const EncodeTextArgs& a) {
  auto model = vae::LoadCheckpoint(a.checkpoint);
  const auto embeddings = align::LoadEmbeddings(a.embeddings);
  const auto z = model->TextToLatent(align::LookupEmbedding(embeddings, a.prompt));
  const json j = {{"prompt", a.prompt}, {"z", z}};
  if (!a.out.empty()) WriteJson(j, a.out);
  std::cout << j.dump() << '\n';
}

struct DecodeArgs {
  fs::path checkpoint;
  fs::path latent;
  fs::path out;
  fs::path render_config;
};

void Decode(const DecodeArgs& a) {
  render::RenderConfig cfg;
  if (!a.render_config.empty()) service::ApplyRenderOverrides(ReadJson(a.render_config), cfg);
  auto model = vae::LoadCheckpoint(a.checkpoint);
  const auto m = service::DecodeToMaterial(*model, ReadLatent(a.latent), cfg);
  const json j = {{"ar_grid", service::ArGridJson(m.ar_grid)},
                  {"tap_bank", service::TapBankJson(m.tap_bank)},
                  {"mu", m.mu}};
  WriteJson(j, a.out);
  std::cout << "decoded latent to " << a.out.string() << " (mu " << m.mu << ")\n";
}

struct ServeArgs {
  service::ServiceConfig cfg;
  std::string host;
  int port = -1;
  int threads = -1;
  fs::path checkpoint, corpus, embeddings, render_config;
};

void Serve(ServeArgs& a) {
  auto& cfg = a.cfg;
  cfg.ApplyEnvironment();
  if (!a.host.empty()) cfg.host = a.host;
  if (a.port >= 0) cfg.port = static_cast<std::uint16_t>(a.port);
  if (a.threads > 0) cfg.threads = a.threads;
  if (!a.checkpoint.empty()) cfg.checkpoint = a.checkpoint;
  if (!a.corpus.empty()) cfg.corpus = a.corpus;
  if (!a.embeddings.empty()) cfg.embeddings = a.embeddings;
  if (!a.render_config.empty()) service::ApplyRenderOverrides(ReadJson(a.render_config), cfg.render);
  if (cfg.embeddings.empty() && !cfg.corpus.empty()) cfg.embeddings = cfg.corpus / "embeddings.json";
  auto svc = service::Service::Load(cfg);
  service::Server server(*svc, cfg.host, cfg.port, cfg.threads);
  server.Start();
  std::cout << "listening on http://" << cfg.host << ':' << server.port() << " ("
            << svc->materials().size() << " materials)" << std::endl;
  server.Wait();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Haptic texture authoring: corpus, training, synthesis, rendering and serving"};
  app.require_subcommand(1);

  GenCorpusArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic corpus and caption embeddings");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--materials", gen.materials, "Number of materials")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  AugmentArgs aug;
  auto* aug_cmd = app.add_subcommand("augment", "Build the augmented training corpus");
  aug_cmd->add_option("--corpus", aug.corpus, "Input corpus directory")->required();
  aug_cmd->add_option("--out", aug.out, "Output directory")->required();
  aug_cmd->add_option("--augments", aug.augments, "Augmented variants per material");
  aug_cmd->add_option("--seed", aug.seed, "Augmentation seed");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train the latent model");
  train_cmd->add_option("--corpus", train.corpus, "Training corpus directory")->required();
  train_cmd->add_option("--config", train.config, "Training config JSON (optional \"net\" section)");
  train_cmd->add_option("--embeddings", train.embeddings, "Caption embeddings (default CORPUS/embeddings.json)");
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--epochs", train.epochs, "Override the configured epoch count");
  train_cmd->add_option("--seed", train.seed, "Override the configured seed");
  train_cmd->add_option("--log-every", train.log_every, "Print every N epochs (0 silences)");

  SynthArgs syn;
  auto* synth_cmd = app.add_subcommand("synth", "Synthesize vibration at a constant force and speed");
  syn.source.AddOptions(synth_cmd);
  synth_cmd->add_option("--fv", syn.fv, "FORCE_N,SPEED_MM_S")->required();
  synth_cmd->add_option("--seconds", syn.seconds, "Duration");
  synth_cmd->add_option("--seed", syn.seed, "Synthesizer seed");
  synth_cmd->add_option("--out", syn.out, "Output WAV")->required();

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the servo loop over a stylus script");
  sim.source.AddOptions(sim_cmd);
  sim_cmd->add_option("--script", sim.script, "Trajectory script JSON")->required();
  sim_cmd->add_option("--seed", sim.seed, "Synthesizer seed");
  sim_cmd->add_option("--out", sim.out, "Output directory")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Clustering, retrieval and rating-projection reports");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("--corpus", ev.corpus, "Corpus directory")->required();
  eval_cmd->add_option("--embeddings", ev.embeddings, "Caption embeddings (default CORPUS/embeddings.json)");
  eval_cmd->add_option("--ratings", ev.ratings, "Ratings CSV for the anchor-axis projection");
  eval_cmd->add_option("--seed", ev.seed, "k-means seed");
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();

  EncodeTextArgs enc;
  auto* enc_cmd = app.add_subcommand("encode-text", "Map a prompt to a latent");
  enc_cmd->add_option("--checkpoint", enc.checkpoint, "Model checkpoint")->required();
  enc_cmd->add_option("--embeddings", enc.embeddings, "Caption embeddings file")->required();
  enc_cmd->add_option("--prompt", enc.prompt, "Prompt text")->required();
  enc_cmd->add_option("--out", enc.out, "Also write the latent JSON here");

  DecodeArgs dec;
  auto* dec_cmd = app.add_subcommand("decode", "Decode a latent into a texture model");
  dec_cmd->add_option("--checkpoint", dec.checkpoint, "Model checkpoint")->required();
  dec_cmd->add_option("--latent", dec.latent, "Latent JSON file")->required();
  dec_cmd->add_option("--out", dec.out, "Output JSON")->required();
  dec_cmd->add_option("--render-config", dec.render_config, "JSON file of render settings");

  ServeArgs srv;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP/WebSocket service");
  serve_cmd->add_option("--host", srv.host, "Listen address (TEXGEN_HOST)");
  serve_cmd->add_option("--port", srv.port, "Listen port, 0 picks one (TEXGEN_PORT)");
  serve_cmd->add_option("--threads", srv.threads, "Worker threads (TEXGEN_THREADS)");
  serve_cmd->add_option("--checkpoint", srv.checkpoint, "Model checkpoint (TEXGEN_CHECKPOINT)");
  serve_cmd->add_option("--corpus", srv.corpus, "Corpus directory (TEXGEN_CORPUS)");
  serve_cmd->add_option("--embeddings", srv.embeddings, "Caption embeddings (TEXGEN_EMBEDDINGS)");
  serve_cmd->add_option("--render-config", srv.render_config, "Render settings JSON (TEXGEN_RENDER_CONFIG)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : service::kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) GenCorpus(gen);
    else if (aug_cmd->parsed()) Augment(aug);
    else if (train_cmd->parsed()) Train(train);
    else if (synth_cmd->parsed()) Synth(syn);
    else if (sim_cmd->parsed()) Simulate(sim);
    else if (eval_cmd->parsed()) Eval(ev);
    else if (enc_cmd->parsed()) EncodeText(enc);
    else if (dec_cmd->parsed()) Decode(dec);
    else if (serve_cmd->parsed()) Serve(srv);
  } catch (const Error& e) {
    std::cerr << "error: " << ErrorCodeName(e.code()) << ": " << e.what() << '\n';
    return service::ExitCodeFor(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return service::kExitInternal;
  }
  return service::kExitOk;
}
