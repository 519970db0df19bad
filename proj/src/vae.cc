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

#include "texgen/vae.h"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace texgen::vae {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kLogVarLimit = 10.0;

void AddMlp(nn::Sequential& seq, nn::ParamStore& store, const std::string& prefix, std::size_t in,
            const std::vector<std::size_t>& hidden) {
  std::size_t prev = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    seq.Add(std::make_unique<nn::Linear>(store, prefix + ".fc" + std::to_string(i), prev, hidden[i]));
    seq.Add(std::make_unique<nn::Relu>());
    prev = hidden[i];
  }
}

std::size_t LastWidth(std::size_t in, const std::vector<std::size_t>& hidden) {
  return hidden.empty() ? in : hidden.back();
}

json SizesJson(const std::vector<std::size_t>& v) { return json(v); }

}  // namespace

// ---- Configs ------------------------------------------------------------------

NetConfig NetConfig::Tiny() {
  NetConfig c;
  c.conditions = 2;
  c.order = 3;
  c.taps = 2;
  c.tap_len = 3;
  c.latent = 4;
  c.text = 6;
  c.ar_encoder = {5};
  c.tap_encoder = {4};
  c.ar_decoder = {5};
  c.tap_decoder = {5};
  c.ar_residual = 1;
  c.tap_residual = 1;
  c.latent_proj_hidden = 5;
  c.text_proj_hidden = 5;
  c.dropout = 0.0;
  return c;
}

json NetConfig::ToJson() const {
  return json{{"conditions", conditions},
              {"order", order},
              {"taps", taps},
              {"tap_len", tap_len},
              {"latent", latent},
              {"text", text},
              {"ar_encoder", SizesJson(ar_encoder)},
              {"tap_encoder", SizesJson(tap_encoder)},
              {"ar_decoder", SizesJson(ar_decoder)},
              {"tap_decoder", SizesJson(tap_decoder)},
              {"ar_residual", ar_residual},
              {"tap_residual", tap_residual},
              {"latent_proj_hidden", latent_proj_hidden},
              {"text_proj_hidden", text_proj_hidden},
              {"dropout", dropout}};
}

NetConfig NetConfig::FromJson(const json& j) {
  NetConfig c;
  try {
    c.conditions = j.at("conditions").get<std::size_t>();
    c.order = j.at("order").get<std::size_t>();
    c.taps = j.at("taps").get<std::size_t>();
    c.tap_len = j.at("tap_len").get<std::size_t>();
    c.latent = j.at("latent").get<std::size_t>();
    c.text = j.at("text").get<std::size_t>();
    c.ar_encoder = j.at("ar_encoder").get<std::vector<std::size_t>>();
    c.tap_encoder = j.at("tap_encoder").get<std::vector<std::size_t>>();
    c.ar_decoder = j.at("ar_decoder").get<std::vector<std::size_t>>();
    c.tap_decoder = j.at("tap_decoder").get<std::vector<std::size_t>>();
    c.ar_residual = j.at("ar_residual").get<std::size_t>();
    c.tap_residual = j.at("tap_residual").get<std::size_t>();
    c.latent_proj_hidden = j.at("latent_proj_hidden").get<std::size_t>();
    c.text_proj_hidden = j.at("text_proj_hidden").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormatError, std::string("network config: ") + e.what());
  }
  return c;
}

void TrainConfig::Validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, std::string("train config: ") + what);
  };
  require(lr > 0, "lr must be positive");
  require(batch >= 2, "batch must be at least 2");
  require(lambda_rec >= 0 && lambda_tap >= 0 && lambda_ar >= 0 && lambda_text >= 0 &&
              lambda_align >= 0,
          "loss weights must be non-negative");
  require(tau > 0, "tau must be positive");
  require(beta_max >= 0, "beta_max must be non-negative");
  require(beta_end > beta_start, "beta_end must exceed beta_start");
  require(grad_clip > 0, "grad_clip must be positive");
  require(epochs >= 0, "epochs must be non-negative");
}

double TrainConfig::Beta(int epoch) const {
  const double t = static_cast<double>(epoch - beta_start) / static_cast<double>(beta_end - beta_start);
  return beta_max * std::clamp(t, 0.0, 1.0);
}

json TrainConfig::ToJson() const {
  return json{{"lr", lr},
              {"batch", batch},
              {"lambda_rec", lambda_rec},
              {"lambda_tap", lambda_tap},
              {"lambda_ar", lambda_ar},
              {"lambda_text", lambda_text},
              {"lambda_align", lambda_align},
              {"tau", tau},
              {"beta_max", beta_max},
              {"beta_start", beta_start},
              {"beta_end", beta_end},
              {"grad_clip", grad_clip},
              {"epochs", epochs},
              {"seed", seed}};
}

TrainConfig TrainConfig::FromJson(const json& j) {
  TrainConfig c;
  if (!j.is_object()) throw Error(ErrorCode::kFormatError, "train config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "lr") c.lr = value.get<double>();
      else if (key == "batch") c.batch = value.get<std::size_t>();
      else if (key == "lambda_rec") c.lambda_rec = value.get<double>();
      else if (key == "lambda_tap") c.lambda_tap = value.get<double>();
      else if (key == "lambda_ar") c.lambda_ar = value.get<double>();
      else if (key == "lambda_text") c.lambda_text = value.get<double>();
      else if (key == "lambda_align") c.lambda_align = value.get<double>();
      else if (key == "tau") c.tau = value.get<double>();
      else if (key == "beta_max") c.beta_max = value.get<double>();
      else if (key == "beta_start") c.beta_start = value.get<int>();
      else if (key == "beta_end") c.beta_end = value.get<int>();
      else if (key == "grad_clip") c.grad_clip = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw Error(ErrorCode::kFormatError, "train config: unknown key " + key);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormatError, std::string("train config: ") + e.what());
  }
  return c;
}

Matrix Reparameterize(const Posterior& post, std::mt19937_64& rng) {
  if (post.mu.rows != post.logvar.rows || post.mu.cols != post.logvar.cols) {
    throw Error(ErrorCode::kShapeError, "posterior mean and log-variance differ in shape");
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix z(post.mu.rows, post.mu.cols);
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    z.data[i] = post.mu.data[i] + std::exp(0.5 * post.logvar.data[i]) * gauss(rng);
  }
  return z;
}

// ---- Model --------------------------------------------------------------------

Model::Model(NetConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  Build();
  Initialize(init_seed);
  ar_mean_.assign(cfg_.ar_size(), 0.0);
  ar_std_.assign(cfg_.ar_size(), 1.0);
  if (cfg_.taps == static_cast<std::size_t>(kNumTapTraces)) {
    const auto& s = DefaultImpactSpeeds();
    tap_speeds_.assign(s.begin(), s.end());
  }
}

void Model::Build() {
  const std::size_t L = cfg_.latent;
  AddMlp(ar_enc_, store_, "ar_enc", cfg_.ar_size(), cfg_.ar_encoder);
  ar_enc_.Add(std::make_unique<nn::Linear>(store_, "ar_enc.out", LastWidth(cfg_.ar_size(), cfg_.ar_encoder), L));
  AddMlp(tap_enc_, store_, "tap_enc", cfg_.tap_size(), cfg_.tap_encoder);
  tap_enc_.Add(std::make_unique<nn::Linear>(store_, "tap_enc.out", LastWidth(cfg_.tap_size(), cfg_.tap_encoder), L));
  fusion_ = std::make_unique<nn::Linear>(store_, "fusion", 2 * L, 2 * L);

  AddMlp(ar_trunk_, store_, "ar_dec", L, cfg_.ar_decoder);
  const std::size_t ar_w = LastWidth(L, cfg_.ar_decoder);
  for (std::size_t i = 0; i < cfg_.ar_residual; ++i) {
    ar_trunk_.Add(std::make_unique<nn::Residual>(store_, "ar_dec.res" + std::to_string(i), ar_w, cfg_.dropout));
  }
  lsf_head_.Add(std::make_unique<nn::Linear>(store_, "ar_dec.lsf", ar_w, cfg_.conditions * cfg_.order));
  lsf_head_.Add(std::make_unique<nn::LsfHead>(cfg_.order));
  var_head_.Add(std::make_unique<nn::Linear>(store_, "ar_dec.var", ar_w, cfg_.conditions));
  var_head_.Add(std::make_unique<nn::Softplus>());

  AddMlp(tap_dec_, store_, "tap_dec", L, cfg_.tap_decoder);
  const std::size_t tap_w = LastWidth(L, cfg_.tap_decoder);
  for (std::size_t i = 0; i < cfg_.tap_residual; ++i) {
    tap_dec_.Add(std::make_unique<nn::Residual>(store_, "tap_dec.res" + std::to_string(i), tap_w, 0.0));
  }
  tap_dec_.Add(std::make_unique<nn::Linear>(store_, "tap_dec.out", tap_w, cfg_.tap_size()));

  latent_proj_.Add(std::make_unique<nn::Linear>(store_, "latent_proj.fc0", L, cfg_.latent_proj_hidden));
  latent_proj_.Add(std::make_unique<nn::BatchNorm>(store_, "latent_proj.bn", cfg_.latent_proj_hidden));
  latent_proj_.Add(std::make_unique<nn::Relu>());
  latent_proj_.Add(std::make_unique<nn::Dropout>(cfg_.dropout));
  latent_proj_.Add(std::make_unique<nn::Linear>(store_, "latent_proj.fc1", cfg_.latent_proj_hidden, L));
  latent_proj_.Add(std::make_unique<nn::L2Normalize>());

  text_proj_.Add(std::make_unique<nn::Linear>(store_, "text_proj.fc0", cfg_.text, cfg_.text_proj_hidden));
  text_proj_.Add(std::make_unique<nn::Relu>());
  text_proj_.Add(std::make_unique<nn::Dropout>(cfg_.dropout));
  text_proj_.Add(std::make_unique<nn::Linear>(store_, "text_proj.fc1", cfg_.text_proj_hidden, L));
}

void Model::Initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& p : store_.params()) {
    const std::string& n = p->name;
    auto ends_with = [&](const std::string& s) {
      return n.size() >= s.size() && n.compare(n.size() - s.size(), s.size(), s) == 0;
    };
    if (ends_with(".weight") || ends_with(".bias")) {
      const std::string base = n.substr(0, n.rfind('.'));
      const nn::Param* w = store_.Find(base + ".weight");
      const double bound = 1.0 / std::sqrt(static_cast<double>(w->rows));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : p->value) v = u(rng);
    } else if (ends_with(".gamma") || ends_with(".running_var")) {
      std::fill(p->value.begin(), p->value.end(), 1.0);
    } else {
      std::fill(p->value.begin(), p->value.end(), 0.0);
    }
  }
}

void Model::SetNormStats(NormStats stats) {
  if (stats.ar_mean.size() != cfg_.ar_size() || stats.ar_std.size() != cfg_.ar_size() ||
      stats.tap_mean.size() != cfg_.tap_size() || stats.tap_std.size() != cfg_.tap_size()) {
    throw Error(ErrorCode::kShapeError, "norm stats do not match the network's tensor sizes");
  }
  norm_ = std::move(stats);
  ar_mean_ = norm_.ar_mean;
  ar_std_ = norm_.ar_std;
}

void Model::CheckWidth(const Matrix& m, std::size_t cols, const char* what) const {
  if (m.cols != cols) {
    throw Error(ErrorCode::kShapeError, std::string(what) + ": expected width " + std::to_string(cols) +
                                            ", got " + std::to_string(m.cols));
  }
}

void Model::ArRawToNormalized(const Matrix& raw, Matrix& out) const {
  out.Resize(raw.rows, raw.cols);
  for (std::size_t r = 0; r < raw.rows; ++r)
    for (std::size_t c = 0; c < raw.cols; ++c) out(r, c) = (raw(r, c) - ar_mean_[c]) / ar_std_[c];
}

namespace {

// Decoder heads -> raw AR tensor rows (per condition: LSFs then variance).
void AssembleAr(const Matrix& lsf, const Matrix& var, std::size_t conditions, std::size_t order,
                Matrix& raw) {
  raw.Resize(lsf.rows, conditions * (order + 1));
  for (std::size_t r = 0; r < lsf.rows; ++r) {
    for (std::size_t c = 0; c < conditions; ++c) {
      std::copy(lsf.Row(r) + c * order, lsf.Row(r) + (c + 1) * order, raw.Row(r) + c * (order + 1));
      raw(r, c * (order + 1) + order) = var(r, c);
    }
  }
}

void SplitAr(const Matrix& raw, std::size_t conditions, std::size_t order, Matrix& lsf, Matrix& var) {
  lsf.Resize(raw.rows, conditions * order);
  var.Resize(raw.rows, conditions);
  for (std::size_t r = 0; r < raw.rows; ++r) {
    for (std::size_t c = 0; c < conditions; ++c) {
      std::copy(raw.Row(r) + c * (order + 1), raw.Row(r) + c * (order + 1) + order, lsf.Row(r) + c * order);
      var(r, c) = raw(r, c * (order + 1) + order);
    }
  }
}

void Accumulate(Matrix& acc, const Matrix& add) {
  for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += add.data[i];
}

void Scale(Matrix& m, double s) {
  for (double& v : m.data) v *= s;
}

}  // namespace

Posterior Model::Encode(const Matrix& ar, const Matrix& tap) {
  std::lock_guard lock(mu_);
  CheckWidth(ar, cfg_.ar_size(), "AR tensor");
  CheckWidth(tap, cfg_.tap_size(), "tap tensor");
  if (ar.rows != tap.rows) throw Error(ErrorCode::kShapeError, "AR and tap batches differ in size");
  nn::Context ctx;
  Matrix ha, ht, fused;
  ar_enc_.Forward(ar, ha, ctx);
  tap_enc_.Forward(tap, ht, ctx);
  const std::size_t B = ar.rows, L = cfg_.latent;
  Matrix cat(B, 2 * L);
  for (std::size_t r = 0; r < B; ++r) {
    std::copy(ha.Row(r), ha.Row(r) + L, cat.Row(r));
    std::copy(ht.Row(r), ht.Row(r) + L, cat.Row(r) + L);
  }
  fusion_->Forward(cat, fused, ctx);
  Posterior post{Matrix(B, L), Matrix(B, L)};
  for (std::size_t r = 0; r < B; ++r) {
    for (std::size_t j = 0; j < L; ++j) {
      post.mu(r, j) = fused(r, j);
      post.logvar(r, j) = std::clamp(fused(r, L + j), -kLogVarLimit, kLogVarLimit);
    }
  }
  return post;
}

Matrix Model::DecodeAr(const Matrix& z) {
  std::lock_guard lock(mu_);
  CheckWidth(z, cfg_.latent, "latent");
  nn::Context ctx;
  Matrix h, lsf, var, raw;
  ar_trunk_.Forward(z, h, ctx);
  lsf_head_.Forward(h, lsf, ctx);
  var_head_.Forward(h, var, ctx);
  AssembleAr(lsf, var, cfg_.conditions, cfg_.order, raw);
  return raw;
}

Matrix Model::DecodeTap(const Matrix& z) {
  std::lock_guard lock(mu_);
  CheckWidth(z, cfg_.latent, "latent");
  nn::Context ctx;
  Matrix out;
  tap_dec_.Forward(z, out, ctx);
  return out;
}

Matrix Model::TextToLatent(const Matrix& text) {
  if (!trained_) throw Error(ErrorCode::kModelNotReady, "text projection is not trained");
  std::lock_guard lock(mu_);
  CheckWidth(text, cfg_.text, "text embedding");
  nn::Context ctx;
  Matrix out;
  text_proj_.Forward(text, out, ctx);
  return out;
}

std::vector<double> Model::EncodeMean(const MaterialRecord& rec) {
  if (cfg_.ar_size() != static_cast<std::size_t>(kArTensorSize) ||
      cfg_.tap_size() != static_cast<std::size_t>(kTapTensorSize)) {
    throw Error(ErrorCode::kShapeError, "material encoding needs the full-size network");
  }
  const auto ar = ArTensor(rec.ar_grid);
  const auto tap = TapTensor(rec.tap_bank);
  Matrix a(1, kArTensorSize), t(1, kTapTensorSize);
  for (int i = 0; i < kArTensorSize; ++i) a.data[i] = (ar[i] - ar_mean_[i]) / ar_std_[i];
  for (int i = 0; i < kTapTensorSize; ++i) {
    t.data[i] = has_norm_stats() ? (tap[i] - norm_.tap_mean[i]) / norm_.tap_std[i] : tap[i];
  }
  Posterior post = Encode(a, t);
  return post.mu.data;
}

ArGrid Model::DecodeArGrid(std::span<const double> z) {
  if (cfg_.ar_size() != static_cast<std::size_t>(kArTensorSize)) {
    throw Error(ErrorCode::kShapeError, "AR grid decoding needs the full-size network");
  }
  for (double v : z)
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFiniteInput, "latent has a non-finite entry");
  Matrix m(1, z.size());
  std::copy(z.begin(), z.end(), m.data.begin());
  const Matrix raw = DecodeAr(m);
  return ArGridFromTensor(raw.data.data());
}

TapBank Model::DecodeTapBank(std::span<const double> z) {
  if (cfg_.tap_size() != static_cast<std::size_t>(kTapTensorSize)) {
    throw Error(ErrorCode::kShapeError, "tap bank decoding needs the full-size network");
  }
  for (double v : z)
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFiniteInput, "latent has a non-finite entry");
  Matrix m(1, z.size());
  std::copy(z.begin(), z.end(), m.data.begin());
  Matrix out = DecodeTap(m);
  if (has_norm_stats()) {
    for (int i = 0; i < kTapTensorSize; ++i) out.data[i] = out.data[i] * norm_.tap_std[i] + norm_.tap_mean[i];
  }
  std::array<double, kNumTapTraces> speeds = DefaultImpactSpeeds();
  if (tap_speeds_.size() == speeds.size()) std::copy(tap_speeds_.begin(), tap_speeds_.end(), speeds.begin());
  return TapBankFromTensor(out.data.data(), speeds);
}

std::vector<double> Model::TextToLatent(std::span<const double> embedding) {
  Matrix m(1, embedding.size());
  std::copy(embedding.begin(), embedding.end(), m.data.begin());
  return TextToLatent(m).data;
}

LossTerms Model::Loss(const Batch& batch, const TrainConfig& tc, const LossOptions& opt, bool backward) {
  std::lock_guard lock(mu_);
  const std::size_t B = batch.ar.rows, L = cfg_.latent;
  CheckWidth(batch.ar, cfg_.ar_size(), "AR tensor");
  CheckWidth(batch.tap, cfg_.tap_size(), "tap tensor");
  CheckWidth(batch.text, cfg_.text, "text embedding");
  if (batch.tap.rows != B || batch.text.rows != B) {
    throw Error(ErrorCode::kShapeError, "batch parts differ in row count");
  }
  if (B < 2) throw Error(ErrorCode::kBatchTooSmall, "loss needs at least 2 items per batch");
  if (opt.training && cfg_.dropout > 0 && opt.rng == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "training with dropout needs an RNG");
  }
  nn::Context ctx{opt.training, opt.rng};

  // Encoder and posterior.
  Matrix ha, ht, fused;
  ar_enc_.Forward(batch.ar, ha, ctx);
  tap_enc_.Forward(batch.tap, ht, ctx);
  Matrix cat(B, 2 * L);
  for (std::size_t r = 0; r < B; ++r) {
    std::copy(ha.Row(r), ha.Row(r) + L, cat.Row(r));
    std::copy(ht.Row(r), ht.Row(r) + L, cat.Row(r) + L);
  }
  fusion_->Forward(cat, fused, ctx);
  Matrix mu(B, L), lv(B, L), eps(B, L), z(B, L);
  std::vector<std::uint8_t> lv_active(B * L);
  if (opt.noise != nullptr && (opt.noise->rows != B || opt.noise->cols != L)) {
    throw Error(ErrorCode::kShapeError, "fixed noise has the wrong shape");
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t r = 0; r < B; ++r) {
    for (std::size_t j = 0; j < L; ++j) {
      mu(r, j) = fused(r, j);
      const double raw = fused(r, L + j);
      lv(r, j) = std::clamp(raw, -kLogVarLimit, kLogVarLimit);
      lv_active[r * L + j] = raw >= -kLogVarLimit && raw <= kLogVarLimit;
      if (opt.noise != nullptr) {
        eps(r, j) = (*opt.noise)(r, j);
      } else if (opt.zero_noise) {
        eps(r, j) = 0.0;
      } else {
        if (opt.rng == nullptr) throw Error(ErrorCode::kInvalidArgument, "sampling needs an RNG");
        eps(r, j) = gauss(*opt.rng);
      }
      z(r, j) = mu(r, j) + std::exp(0.5 * lv(r, j)) * eps(r, j);
    }
  }

  // Decoders.
  Matrix h, lsf, var, raw_ar, ar_hat, tap_hat;
  ar_trunk_.Forward(z, h, ctx);
  lsf_head_.Forward(h, lsf, ctx);
  var_head_.Forward(h, var, ctx);
  AssembleAr(lsf, var, cfg_.conditions, cfg_.order, raw_ar);
  ArRawToNormalized(raw_ar, ar_hat);
  tap_dec_.Forward(z, tap_hat, ctx);

  // Projections.
  Matrix ex, mu_hat, et;
  latent_proj_.Forward(z, ex, ctx);
  text_proj_.Forward(batch.text, mu_hat, ctx);
  text_norm_.Forward(mu_hat, et, ctx);

  Matrix g_ar, g_tap, g_mu_kl, g_lv_kl, g_ex, g_et, g_muhat, g_mu_align;
  LossTerms t;
  t.beta = tc.Beta(opt.epoch);
  t.raw_ar = nn::SmoothL1(ar_hat, batch.ar, &g_ar);
  t.raw_tap = nn::SmoothL1(tap_hat, batch.tap, &g_tap);
  t.raw_kl = nn::GaussianKl(mu, lv, &g_mu_kl, &g_lv_kl);
  t.raw_info_nce = nn::InfoNce(ex, et, tc.tau, &g_ex, &g_et);
  t.raw_align = nn::SquaredDistance(mu_hat, mu, &g_muhat, &g_mu_align);
  const double w_ar = tc.lambda_rec * tc.lambda_ar;
  const double w_tap = tc.lambda_rec * tc.lambda_tap;
  t.ar = w_ar * t.raw_ar;
  t.tap = w_tap * t.raw_tap;
  t.kl = t.beta * t.raw_kl;
  t.info_nce = tc.lambda_text * t.raw_info_nce;
  t.align = tc.lambda_align * t.raw_align;
  t.total = t.tap + t.ar + t.kl + t.info_nce + t.align;
  if (!backward) return t;

  // AR decoder: normalized-space gradient back to raw space, then the heads.
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t c = 0; c < g_ar.cols; ++c) g_ar(r, c) *= w_ar / ar_std_[c];
  Matrix g_lsf, g_var, dh, dh_var, dz, dz_part;
  SplitAr(g_ar, cfg_.conditions, cfg_.order, g_lsf, g_var);
  lsf_head_.Backward(g_lsf, dh);
  var_head_.Backward(g_var, dh_var);
  Accumulate(dh, dh_var);
  ar_trunk_.Backward(dh, dz);

  Scale(g_tap, w_tap);
  tap_dec_.Backward(g_tap, dz_part);
  Accumulate(dz, dz_part);

  Scale(g_ex, tc.lambda_text);
  latent_proj_.Backward(g_ex, dz_part);
  Accumulate(dz, dz_part);

  // Reparameterization, KL and alignment into the fused output.
  Matrix dfused(B, 2 * L);
  for (std::size_t r = 0; r < B; ++r) {
    for (std::size_t j = 0; j < L; ++j) {
      dfused(r, j) = dz(r, j) + t.beta * g_mu_kl(r, j) + tc.lambda_align * g_mu_align(r, j);
      const double dlv = dz(r, j) * eps(r, j) * 0.5 * std::exp(0.5 * lv(r, j)) + t.beta * g_lv_kl(r, j);
      dfused(r, L + j) = lv_active[r * L + j] ? dlv : 0.0;
    }
  }
  Matrix dcat, da(B, L), dt(B, L), dx;
  fusion_->Backward(dfused, dcat);
  for (std::size_t r = 0; r < B; ++r) {
    std::copy(dcat.Row(r), dcat.Row(r) + L, da.Row(r));
    std::copy(dcat.Row(r) + L, dcat.Row(r) + 2 * L, dt.Row(r));
  }
  ar_enc_.Backward(da, dx);
  tap_enc_.Backward(dt, dx);

  // Text side.
  Matrix dmu_hat;
  Scale(g_et, tc.lambda_text);
  text_norm_.Backward(g_et, dmu_hat);
  for (std::size_t i = 0; i < dmu_hat.data.size(); ++i) dmu_hat.data[i] += tc.lambda_align * g_muhat.data[i];
  text_proj_.Backward(dmu_hat, dx);
  return t;
}

namespace {

json NormStatsJson(const NormStats& s) {
  return json{{"ar_mean", s.ar_mean}, {"ar_std", s.ar_std}, {"ar_flag", s.ar_flag},
              {"tap_mean", s.tap_mean}, {"tap_std", s.tap_std}, {"tap_flag", s.tap_flag}};
}

NormStats NormStatsFromJson(const json& j) {
  NormStats s;
  s.ar_mean = j.at("ar_mean").get<std::vector<double>>();
  s.ar_std = j.at("ar_std").get<std::vector<double>>();
  s.ar_flag = j.at("ar_flag").get<std::vector<std::uint8_t>>();
  s.tap_mean = j.at("tap_mean").get<std::vector<double>>();
  s.tap_std = j.at("tap_std").get<std::vector<double>>();
  s.tap_flag = j.at("tap_flag").get<std::vector<std::uint8_t>>();
  return s;
}

}  // namespace

json Model::MetaJson() const {
  json anchors = json::array();
  for (const auto& a : anchors_) anchors.push_back({{"latent", a.latent}, {"mu", a.mu}});
  json meta{{"net", cfg_.ToJson()},
            {"trained", trained_},
            {"anchors", anchors},
            {"tap_speeds", tap_speeds_}};
  meta["norm_stats"] = norm_.empty() ? json(nullptr) : NormStatsJson(norm_);
  return meta;
}

// ---- Training -----------------------------------------------------------------

TrainingSet BuildTrainingSet(const Corpus& corpus, const EmbeddingMap& embeddings,
                             const NormStats& stats) {
  TrainingSet set;
  set.tensors = StackTensors(corpus);
  NormalizeInPlace(set.tensors, stats);
  for (const auto& rec : corpus.materials) {
    if (rec.captions.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "material " + rec.id + " has no captions");
    }
    std::vector<std::vector<double>> caps;
    for (const auto& c : rec.captions) {
      auto it = embeddings.find(c);
      if (it == embeddings.end()) {
        throw Error(ErrorCode::kEmbeddingNotFound, "embedding not found for caption \"" + c + "\"");
      }
      if (it->second.size() != static_cast<std::size_t>(kTextDim)) {
        throw Error(ErrorCode::kShapeError, "embedding for \"" + c + "\" is not 512-dimensional");
      }
      caps.push_back(it->second);
    }
    set.captions.push_back(std::move(caps));
    set.labels.push_back(rec.class_label);
    set.ids.push_back(rec.id);
  }
  return set;
}

namespace {

void AddTerms(LossTerms& acc, const LossTerms& t, double w) {
  acc.tap += w * t.tap;
  acc.ar += w * t.ar;
  acc.kl += w * t.kl;
  acc.info_nce += w * t.info_nce;
  acc.align += w * t.align;
  acc.total += w * t.total;
  acc.raw_tap += w * t.raw_tap;
  acc.raw_ar += w * t.raw_ar;
  acc.raw_kl += w * t.raw_kl;
  acc.raw_info_nce += w * t.raw_info_nce;
  acc.raw_align += w * t.raw_align;
  acc.beta = t.beta;
}

}  // namespace

std::vector<EpochMetrics> Train(Model& model, const TrainingSet& data, const TrainConfig& tc,
                                const EpochCallback& on_epoch) {
  tc.Validate();
  const NetConfig& cfg = model.config();
  const std::size_t n = data.size();
  if (data.captions.size() != n) throw Error(ErrorCode::kShapeError, "caption list size mismatch");
  std::mt19937_64 rng(tc.seed);
  nn::Adam adam(model.params(), nn::AdamConfig{tc.lr, 0.9, 0.999, 1e-8, tc.grad_clip});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochMetrics> log;
  Batch batch;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics m;
    m.epoch = epoch;
    std::vector<LossTerms> batch_terms;
    double norm_sum = 0.0;
    for (std::size_t start = 0; start < n; start += tc.batch) {
      const std::size_t b = std::min(tc.batch, n - start);
      if (b < 2) continue;
      batch.ar.Resize(b, cfg.ar_size());
      batch.tap.Resize(b, cfg.tap_size());
      batch.text.Resize(b, cfg.text);
      for (std::size_t r = 0; r < b; ++r) {
        const std::size_t i = order[start + r];
        std::copy_n(data.tensors.ar.data() + i * cfg.ar_size(), cfg.ar_size(), batch.ar.Row(r));
        std::copy_n(data.tensors.tap.data() + i * cfg.tap_size(), cfg.tap_size(), batch.tap.Row(r));
        std::uniform_int_distribution<std::size_t> pick(0, data.captions[i].size() - 1);
        const auto& cap = data.captions[i][pick(rng)];
        std::copy_n(cap.data(), cfg.text, batch.text.Row(r));
      }
      model.params().ZeroGrad();
      LossOptions opt;
      opt.epoch = epoch;
      opt.training = true;
      opt.rng = &rng;
      batch_terms.push_back(model.Loss(batch, tc, opt, true));
      norm_sum += adam.Step();
      ++m.steps;
    }
    if (m.steps > 0) {
      const double w = 1.0 / static_cast<double>(m.steps);
      for (const auto& t : batch_terms) AddTerms(m.terms, t, w);
      m.grad_norm = norm_sum * w;
    }
    m.param_hash = model.params().Hash();
    m.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  model.set_trained(true);
  return log;
}

void WriteMetricsCsv(const std::vector<EpochMetrics>& metrics, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << "epoch,steps,total,tap,ar,kl,info_nce,align,beta,raw_tap,raw_ar,raw_kl,raw_info_nce,"
         "raw_align,grad_norm,param_hash,wall_s\n";
  out.precision(10);
  for (const auto& m : metrics) {
    const auto& t = m.terms;
    out << m.epoch << ',' << m.steps << ',' << t.total << ',' << t.tap << ',' << t.ar << ',' << t.kl
        << ',' << t.info_nce << ',' << t.align << ',' << t.beta << ',' << t.raw_tap << ','
        << t.raw_ar << ',' << t.raw_kl << ',' << t.raw_info_nce << ',' << t.raw_align << ','
        << m.grad_norm << ',' << m.param_hash << ',' << m.wall_s << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

// ---- Checkpoint ---------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

constexpr char kMagic[8] = {'T', 'X', 'G', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void Put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T Get(std::ifstream& in, const fs::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorCode::kFormatError, "truncated checkpoint " + path.string());
  return v;
}

}  // namespace

void SaveCheckpoint(const Model& model, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  const std::string meta = model.MetaJson().dump();
  out.write(kMagic, sizeof(kMagic));
  Put<std::uint32_t>(out, kVersion);
  Put<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  const auto& params = model.params().params();
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  std::vector<float> buf;
  for (const auto& p : params) {
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(p->rows));
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(p->cols));
    buf.assign(p->value.begin(), p->value.end());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

std::unique_ptr<Model> LoadCheckpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "checkpoint not found: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw Error(ErrorCode::kFormatError, path.string() + " is not a checkpoint");
  }
  const auto version = Get<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw Error(ErrorCode::kFormatError, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto meta_len = Get<std::uint64_t>(in, path);
  if (meta_len > (1ull << 32)) throw Error(ErrorCode::kFormatError, "checkpoint meta block too large");
  std::string meta_text(meta_len, '\0');
  in.read(meta_text.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw Error(ErrorCode::kFormatError, "truncated checkpoint " + path.string());
  json meta;
  std::unique_ptr<Model> model;
  try {
    meta = json::parse(meta_text);
    model = std::make_unique<Model>(NetConfig::FromJson(meta.at("net")), 0);
    if (!meta.at("norm_stats").is_null()) model->SetNormStats(NormStatsFromJson(meta.at("norm_stats")));
    model->set_trained(meta.at("trained").get<bool>());
    model->tap_speeds() = meta.at("tap_speeds").get<std::vector<double>>();
    for (const auto& a : meta.at("anchors")) {
      model->anchors().push_back({a.at("latent").get<std::vector<double>>(), a.at("mu").get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormatError, std::string("checkpoint meta: ") + e.what());
  }
  const auto count = Get<std::uint32_t>(in, path);
  if (count != model->params().params().size()) {
    throw Error(ErrorCode::kFormatError, "checkpoint tensor count does not match the network");
  }
  std::vector<float> buf;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = Get<std::uint32_t>(in, path);
    if (name_len > 4096) throw Error(ErrorCode::kFormatError, "checkpoint tensor name too long");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = Get<std::uint32_t>(in, path);
    const auto cols = Get<std::uint32_t>(in, path);
    nn::Param* p = model->params().Find(name);
    if (p == nullptr || p->rows != rows || p->cols != cols) {
      throw Error(ErrorCode::kFormatError, "checkpoint tensor " + name + " does not match the network");
    }
    buf.resize(p->size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw Error(ErrorCode::kFormatError, "truncated checkpoint " + path.string());
    std::copy(buf.begin(), buf.end(), p->value.begin());
  }
  return model;
}

}  // namespace texgen::vae
