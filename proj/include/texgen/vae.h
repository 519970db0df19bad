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

#ifndef TEXGEN_VAE_H_
#define TEXGEN_VAE_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "texgen/corpus.h"
#include "texgen/nn.h"
#include "texgen/render.h"

namespace texgen::vae {

using nn::Matrix;

// Layer widths. The defaults are the full model; Tiny() keeps every layer
// type but fits in under a thousand parameters.
struct NetConfig {
  std::size_t conditions = kNumConditions;
  std::size_t order = kArOrder;
  std::size_t taps = kNumTapTraces;
  std::size_t tap_len = kTapSamples;
  std::size_t latent = kLatentDim;
  std::size_t text = kTextDim;
  std::vector<std::size_t> ar_encoder{256, 256, 128};
  std::vector<std::size_t> tap_encoder{256};
  std::vector<std::size_t> ar_decoder{256, 512};
  std::vector<std::size_t> tap_decoder{256, 512};
  std::size_t ar_residual = 3;
  std::size_t tap_residual = 2;
  std::size_t latent_proj_hidden = 128;
  std::size_t text_proj_hidden = 256;
  double dropout = 0.1;

  std::size_t ar_size() const { return conditions * (order + 1); }
  std::size_t tap_size() const { return taps * tap_len; }

  static NetConfig Tiny();
  nlohmann::json ToJson() const;
  static NetConfig FromJson(const nlohmann::json& j);
};

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch = 32;
  double lambda_rec = 1.0;
  double lambda_tap = 2.0;
  double lambda_ar = 2.0;
  double lambda_text = 0.1;
  double lambda_align = 0.1;
  double tau = 0.1;
  double beta_max = 0.001;
  int beta_start = 20;
  int beta_end = 120;
  double grad_clip = 1.0;
  int epochs = 300;
  std::uint64_t seed = 0;

  // Throws Error(kInvalidArgument) on non-positive settings.
  void Validate() const;
  double Beta(int epoch) const;
  nlohmann::json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& j);
};

// Normalized network inputs for one batch.
struct Batch {
  Matrix ar;    // B x ar_size
  Matrix tap;   // B x tap_size
  Matrix text;  // B x text
};

struct Posterior {
  Matrix mu;
  Matrix logvar;
};

// z = mu + exp(logvar / 2) * eps with eps ~ N(0, I) drawn row-major from rng.
Matrix Reparameterize(const Posterior& post, std::mt19937_64& rng);

// Weighted contributions; total is their sum.
struct LossTerms {
  double tap = 0.0;     // lambda_rec lambda_tap SmoothL1
  double ar = 0.0;      // lambda_rec lambda_ar SmoothL1
  double kl = 0.0;      // beta KL
  double info_nce = 0.0;
  double align = 0.0;
  double total = 0.0;
  // Unweighted values for logging.
  double raw_tap = 0.0, raw_ar = 0.0, raw_kl = 0.0, raw_info_nce = 0.0, raw_align = 0.0;
  double beta = 0.0;

  double reconstruction() const { return tap + ar; }
};

struct LossOptions {
  int epoch = 0;
  bool training = true;
  bool zero_noise = false;        // z = mu exactly
  const Matrix* noise = nullptr;  // fixed epsilon, overrides the RNG
  std::mt19937_64* rng = nullptr;
};

class Model {
 public:
  explicit Model(NetConfig cfg = {}, std::uint64_t init_seed = 0);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const NetConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  // Re-draws every weight and bias uniformly in +-1/sqrt(fan_in); resets
  // batch-norm state.
  void Initialize(std::uint64_t seed);

  // AR stats are needed to compare raw-space decoder output with normalized
  // targets; identity stats are used until set.
  void SetNormStats(NormStats stats);
  const NormStats& norm_stats() const { return norm_; }
  bool has_norm_stats() const { return !norm_.empty(); }

  bool trained() const { return trained_; }
  void set_trained(bool t) { trained_ = t; }

  render::FrictionAnchorSet& anchors() { return anchors_; }
  const render::FrictionAnchorSet& anchors() const { return anchors_; }
  std::vector<double>& tap_speeds() { return tap_speeds_; }
  const std::vector<double>& tap_speeds() const { return tap_speeds_; }

  // Evaluation-mode passes. Throw Error(kShapeError) on wrong widths.
  Posterior Encode(const Matrix& ar, const Matrix& tap);
  // Raw decoder output: per condition `order` LSFs (radians) then variance.
  Matrix DecodeAr(const Matrix& z);
  // Normalized tap tensor.
  Matrix DecodeTap(const Matrix& z);
  // Pre-normalization text projection. Throws Error(kModelNotReady) unless
  // trained (or loaded from a trained checkpoint).
  Matrix TextToLatent(const Matrix& text);

  // Single-material conveniences for the full-size configuration. Inputs and
  // outputs are raw (unnormalized) and use the stored NormStats.
  std::vector<double> EncodeMean(const MaterialRecord& rec);
  ArGrid DecodeArGrid(std::span<const double> z);
  TapBank DecodeTapBank(std::span<const double> z);
  std::vector<double> TextToLatent(std::span<const double> embedding);

  // Full objective. With backward set, parameter gradients are accumulated
  // (call params().ZeroGrad() first). Throws Error(kBatchTooSmall) below 2
  // rows.
  LossTerms Loss(const Batch& batch, const TrainConfig& tc, const LossOptions& opt, bool backward);

  // Serialized in the checkpoint next to the tensors.
  nlohmann::json MetaJson() const;

 private:
  void Build();
  void ArRawToNormalized(const Matrix& raw, Matrix& out) const;
  void CheckWidth(const Matrix& m, std::size_t cols, const char* what) const;

  NetConfig cfg_;
  nn::ParamStore store_;
  nn::Sequential ar_enc_, tap_enc_;
  std::unique_ptr<nn::Linear> fusion_;
  nn::Sequential ar_trunk_, lsf_head_, var_head_;
  nn::Sequential tap_dec_;
  nn::Sequential latent_proj_;
  nn::Sequential text_proj_;
  nn::L2Normalize text_norm_;
  NormStats norm_;
  std::vector<double> ar_mean_, ar_std_;
  bool trained_ = false;
  render::FrictionAnchorSet anchors_;
  std::vector<double> tap_speeds_;
  std::mutex mu_;
};

// ---- Training -----------------------------------------------------------------

// Normalized tensors plus every caption embedding of each item.
struct TrainingSet {
  TensorSet tensors;
  std::vector<std::vector<std::vector<double>>> captions;
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return tensors.count; }
};

using EmbeddingMap = std::map<std::string, std::vector<double>>;

// Normalizes the corpus with `stats` and attaches caption embeddings. Throws
// Error(kEmbeddingNotFound) for a caption without an embedding and
// Error(kInvalidArgument) for a material without captions.
TrainingSet BuildTrainingSet(const Corpus& corpus, const EmbeddingMap& embeddings,
                             const NormStats& stats);

struct EpochMetrics {
  int epoch = 0;  // 1-based
  long steps = 0;
  LossTerms terms;  // mean over the epoch's batches
  double grad_norm = 0.0;  // mean pre-clip norm
  std::uint64_t param_hash = 0;
  double wall_s = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Shuffled mini-batches, one caption drawn per item per step, Adam with
// global-norm clipping. A trailing batch with a single item is skipped.
// Deterministic in tc.seed apart from wall_s. Marks the model trained.
std::vector<EpochMetrics> Train(Model& model, const TrainingSet& data, const TrainConfig& tc,
                                const EpochCallback& on_epoch = {});

void WriteMetricsCsv(const std::vector<EpochMetrics>& metrics, const std::filesystem::path& path);

// ---- Checkpoint ---------------------------------------------------------------

// Binary: "TXGCKPT1", u32 version, u64 meta length, meta JSON, u32 tensor count,
// then per tensor u32 name length, name, u32 rows, u32 cols, float32 data.
// All integers little-endian.
void SaveCheckpoint(const Model& model, const std::filesystem::path& path);
std::unique_ptr<Model> LoadCheckpoint(const std::filesystem::path& path);

}  // namespace texgen::vae

#endif  // TEXGEN_VAE_H_
