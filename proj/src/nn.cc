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

#include "texgen/nn.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "texgen/lpc.h"
#include "texgen/simd/kernels.h"

namespace texgen::nn {

Param& ParamStore::Add(const std::string& name, std::size_t rows, std::size_t cols, bool trainable) {
  if (Find(name) != nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate parameter name " + name);
  }
  auto p = std::make_unique<Param>();
  p->name = name;
  p->rows = rows;
  p->cols = cols;
  p->value.assign(rows * cols, 0.0);
  p->grad.assign(rows * cols, 0.0);
  p->trainable = trainable;
  params_.push_back(std::move(p));
  return *params_.back();
}

Param* ParamStore::Find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Param* ParamStore::Find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

void ParamStore::ZeroGrad() {
  for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

std::size_t ParamStore::TrainableCount() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p->trainable) n += p->size();
  return n;
}

double ParamStore::GradNorm() const {
  double s = 0.0;
  for (const auto& p : params_) {
    if (!p->trainable) continue;
    s += simd::Dot(p->grad.data(), p->grad.data(), p->grad.size());
  }
  return std::sqrt(s);
}

void ParamStore::CheckFiniteGrads() const {
  for (const auto& p : params_) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->grad.size(); ++i) {
      if (!std::isfinite(p->grad[i])) {
        throw Error(ErrorCode::kNonFiniteGradient,
                    "non-finite gradient in " + p->name + "[" + std::to_string(i) + "]");
      }
    }
  }
}

std::uint64_t ParamStore::Hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : params_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (std::size_t i = 0; i < p->value.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

// ---- Linear -------------------------------------------------------------------

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out)
    : w_(&store.Add(name + ".weight", in, out)),
      b_(&store.Add(name + ".bias", 1, out)),
      in_(in),
      out_(out) {}

void Linear::Forward(const Matrix& x, Matrix& y, Context&) {
  if (x.cols != in_) {
    throw Error(ErrorCode::kShapeError, w_->name + ": expected " + std::to_string(in_) +
                                            " inputs, got " + std::to_string(x.cols));
  }
  x_ = x;
  y.Resize(x.rows, out_);
  simd::Gemm(x.rows, out_, in_, x.data.data(), in_, w_->value.data(), out_, y.data.data(), out_,
             false);
  for (std::size_t r = 0; r < x.rows; ++r) simd::Axpy(1.0, b_->value.data(), y.Row(r), out_);
}

void Linear::Backward(const Matrix& dy, Matrix& dx) {
  const std::size_t batch = dy.rows;
  xt_.Resize(in_, batch);
  simd::Transpose(batch, in_, x_.data.data(), xt_.data.data());
  simd::Gemm(in_, out_, batch, xt_.data.data(), batch, dy.data.data(), out_, w_->grad.data(), out_,
             true);
  for (std::size_t r = 0; r < batch; ++r) simd::Axpy(1.0, dy.Row(r), b_->grad.data(), out_);
  wt_.Resize(out_, in_);
  simd::Transpose(in_, out_, w_->value.data(), wt_.data.data());
  dx.Resize(batch, in_);
  simd::Gemm(batch, in_, out_, dy.data.data(), out_, wt_.data.data(), in_, dx.data.data(), in_,
             false);
}

// ---- Elementwise --------------------------------------------------------------

void Relu::Forward(const Matrix& x, Matrix& y, Context&) {
  y.Resize(x.rows, x.cols);
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  y_ = y;
}

void Relu::Backward(const Matrix& dy, Matrix& dx) {
  dx.Resize(dy.rows, dy.cols);
  for (std::size_t i = 0; i < dy.data.size(); ++i) dx.data[i] = y_.data[i] > 0.0 ? dy.data[i] : 0.0;
}

void Dropout::Forward(const Matrix& x, Matrix& y, Context& ctx) {
  active_ = ctx.training && p_ > 0.0;
  y = x;
  if (!active_) return;
  if (ctx.rng == nullptr) throw Error(ErrorCode::kInvalidArgument, "dropout needs an RNG in training");
  mask_.Resize(x.rows, x.cols);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep = 1.0 / (1.0 - p_);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    mask_.data[i] = unit(*ctx.rng) >= p_ ? keep : 0.0;
    y.data[i] *= mask_.data[i];
  }
}

void Dropout::Backward(const Matrix& dy, Matrix& dx) {
  dx = dy;
  if (!active_) return;
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= mask_.data[i];
}

double SoftplusValue(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void Softplus::Forward(const Matrix& x, Matrix& y, Context&) {
  x_ = x;
  y.Resize(x.rows, x.cols);
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = SoftplusValue(x.data[i]);
}

void Softplus::Backward(const Matrix& dy, Matrix& dx) {
  dx.Resize(dy.rows, dy.cols);
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x_.data[i]));
    dx.data[i] = dy.data[i] * s;
  }
}

void L2Normalize::Forward(const Matrix& x, Matrix& y, Context&) {
  y.Resize(x.rows, x.cols);
  norm_.resize(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double n = std::max(std::sqrt(simd::Dot(x.Row(r), x.Row(r), x.cols)), 1e-12);
    norm_[r] = n;
    for (std::size_t c = 0; c < x.cols; ++c) y(r, c) = x(r, c) / n;
  }
  y_ = y;
}

void L2Normalize::Backward(const Matrix& dy, Matrix& dx) {
  dx.Resize(dy.rows, dy.cols);
  for (std::size_t r = 0; r < dy.rows; ++r) {
    const double proj = simd::Dot(y_.Row(r), dy.Row(r), dy.cols);
    for (std::size_t c = 0; c < dy.cols; ++c) dx(r, c) = (dy(r, c) - y_(r, c) * proj) / norm_[r];
  }
}

// ---- BatchNorm ----------------------------------------------------------------

BatchNorm::BatchNorm(ParamStore& store, const std::string& name, std::size_t features,
                     double momentum, double eps)
    : gamma_(&store.Add(name + ".gamma", 1, features)),
      beta_(&store.Add(name + ".beta", 1, features)),
      running_mean_(&store.Add(name + ".running_mean", 1, features, false)),
      running_var_(&store.Add(name + ".running_var", 1, features, false)),
      momentum_(momentum),
      eps_(eps) {
  std::fill(gamma_->value.begin(), gamma_->value.end(), 1.0);
  std::fill(running_var_->value.begin(), running_var_->value.end(), 1.0);
}

void BatchNorm::Forward(const Matrix& x, Matrix& y, Context& ctx) {
  const std::size_t n = x.rows, f = x.cols;
  if (f != gamma_->size()) throw Error(ErrorCode::kShapeError, gamma_->name + ": feature mismatch");
  batch_stats_ = ctx.training;
  xhat_.Resize(n, f);
  y.Resize(n, f);
  inv_std_.assign(f, 0.0);
  for (std::size_t c = 0; c < f; ++c) {
    double mean, var;
    if (batch_stats_) {
      if (n < 2) throw Error(ErrorCode::kBatchTooSmall, "batch norm needs at least 2 rows");
      mean = 0.0;
      for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
      mean /= static_cast<double>(n);
      var = 0.0;
      for (std::size_t r = 0; r < n; ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
      var /= static_cast<double>(n);
      running_mean_->value[c] = (1 - momentum_) * running_mean_->value[c] + momentum_ * mean;
      const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
      running_var_->value[c] = (1 - momentum_) * running_var_->value[c] + momentum_ * unbiased;
    } else {
      mean = running_mean_->value[c];
      var = running_var_->value[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    for (std::size_t r = 0; r < n; ++r) {
      xhat_(r, c) = (x(r, c) - mean) * inv;
      y(r, c) = gamma_->value[c] * xhat_(r, c) + beta_->value[c];
    }
  }
}

void BatchNorm::Backward(const Matrix& dy, Matrix& dx) {
  const std::size_t n = dy.rows, f = dy.cols;
  dx.Resize(n, f);
  for (std::size_t c = 0; c < f; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      sum_dy += dy(r, c);
      sum_dy_xhat += dy(r, c) * xhat_(r, c);
    }
    gamma_->grad[c] += sum_dy_xhat;
    beta_->grad[c] += sum_dy;
    const double g = gamma_->value[c] * inv_std_[c];
    if (batch_stats_) {
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) {
        dx(r, c) = g * (dy(r, c) - inv_n * sum_dy - xhat_(r, c) * inv_n * sum_dy_xhat);
      }
    } else {
      for (std::size_t r = 0; r < n; ++r) dx(r, c) = g * dy(r, c);
    }
  }
}

// ---- Containers ---------------------------------------------------------------

void Sequential::Forward(const Matrix& x, Matrix& y, Context& ctx) {
  acts_.resize(layers_.size());
  const Matrix* in = &x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->Forward(*in, acts_[i], ctx);
    in = &acts_[i];
  }
  y = *in;
}

void Sequential::Backward(const Matrix& dy, Matrix& dx) {
  const Matrix* g = &dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    Matrix& out = (i % 2 == 0) ? grad_a_ : grad_b_;
    layers_[i]->Backward(*g, out);
    g = &out;
  }
  dx = *g;
}

Residual::Residual(ParamStore& store, const std::string& name, std::size_t width, double dropout) {
  inner_.Add(std::make_unique<Linear>(store, name + ".fc", width, width));
  inner_.Add(std::make_unique<Relu>());
  inner_.Add(std::make_unique<Dropout>(dropout));
}

void Residual::Forward(const Matrix& x, Matrix& y, Context& ctx) {
  inner_.Forward(x, y, ctx);
  simd::Axpy(1.0, x.data.data(), y.data.data(), x.data.size());
}

void Residual::Backward(const Matrix& dy, Matrix& dx) {
  inner_.Backward(dy, dx);
  simd::Axpy(1.0, dy.data.data(), dx.data.data(), dy.data.size());
}

// ---- LSF head -----------------------------------------------------------------

void LsfHead::Forward(const Matrix& x, Matrix& y, Context&) {
  if (x.cols % order_ != 0) throw Error(ErrorCode::kShapeError, "LSF head width not a multiple of order");
  y.Resize(x.rows, x.cols);
  soft_.Resize(x.rows, x.cols);
  clamped_.Resize(x.rows, x.cols);
  const double scale = kPi * static_cast<double>(order_) / static_cast<double>(order_ + 1);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t g = 0; g < x.cols; g += order_) {
      const double* logits = x.Row(r) + g;
      lpc::ProjectToLsf(std::span<const double>(logits, order_), std::span<double>(y.Row(r) + g, order_));
      const double peak = *std::max_element(logits, logits + order_);
      double total = 0.0;
      for (std::size_t i = 0; i < order_; ++i) total += std::exp(logits[i] - peak);
      double cum = 0.0;
      for (std::size_t i = 0; i < order_; ++i) {
        const double s = std::exp(logits[i] - peak) / total;
        soft_(r, g + i) = s;
        cum += s;
        clamped_(r, g + i) = scale * cum >= kLsfUpper ? 1.0 : 0.0;
      }
    }
  }
}

void LsfHead::Backward(const Matrix& dy, Matrix& dx) {
  dx.Resize(dy.rows, dy.cols);
  const double scale = kPi * static_cast<double>(order_) / static_cast<double>(order_ + 1);
  std::vector<double> ds(order_);
  for (std::size_t r = 0; r < dy.rows; ++r) {
    for (std::size_t g = 0; g < dy.cols; g += order_) {
      // d lsf_k / d s_j = scale for j <= k, so ds_j is a suffix sum.
      double suffix = 0.0;
      for (std::size_t i = order_; i-- > 0;) {
        if (clamped_(r, g + i) == 0.0) suffix += dy(r, g + i);
        ds[i] = scale * suffix;
      }
      double dot = 0.0;
      for (std::size_t i = 0; i < order_; ++i) dot += soft_(r, g + i) * ds[i];
      for (std::size_t i = 0; i < order_; ++i) dx(r, g + i) = soft_(r, g + i) * (ds[i] - dot);
    }
  }
}

// ---- Losses -------------------------------------------------------------------

double SmoothL1(const Matrix& pred, const Matrix& target, Matrix* grad) {
  if (pred.rows != target.rows || pred.cols != target.cols) {
    throw Error(ErrorCode::kShapeError, "Smooth-L1 shape mismatch");
  }
  const double n = static_cast<double>(pred.data.size());
  if (grad != nullptr) grad->Resize(pred.rows, pred.cols);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    const double ad = std::abs(d);
    sum += ad < 1.0 ? 0.5 * d * d : ad - 0.5;
    if (grad != nullptr) grad->data[i] = std::clamp(d, -1.0, 1.0) / n;
  }
  return sum / n;
}

double GaussianKl(const Matrix& mu, const Matrix& logvar, Matrix* grad_mu, Matrix* grad_logvar) {
  const double inv_b = 1.0 / static_cast<double>(mu.rows);
  if (grad_mu != nullptr) grad_mu->Resize(mu.rows, mu.cols);
  if (grad_logvar != nullptr) grad_logvar->Resize(mu.rows, mu.cols);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu.data.size(); ++i) {
    const double m = mu.data[i], lv = logvar.data[i], e = std::exp(lv);
    sum += 0.5 * (m * m + e - 1.0 - lv);
    if (grad_mu != nullptr) grad_mu->data[i] = m * inv_b;
    if (grad_logvar != nullptr) grad_logvar->data[i] = 0.5 * (e - 1.0) * inv_b;
  }
  return sum * inv_b;
}

double InfoNce(const Matrix& a, const Matrix& b, double tau, Matrix* grad_a, Matrix* grad_b) {
  const std::size_t n = a.rows, d = a.cols;
  if (n < 2) throw Error(ErrorCode::kBatchTooSmall, "InfoNCE needs at least 2 items per batch");
  if (b.rows != n || b.cols != d) throw Error(ErrorCode::kShapeError, "InfoNCE shape mismatch");
  Matrix logits(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) logits(i, j) = simd::Dot(a.Row(i), b.Row(j), d) / tau;

  Matrix g(n, n);  // d loss / d logits
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  // a -> b: rows.
  for (std::size_t i = 0; i < n; ++i) {
    double peak = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) peak = std::max(peak, logits(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(logits(i, j) - peak);
    loss += 0.5 * inv_n * (std::log(z) + peak - logits(i, i));
    for (std::size_t j = 0; j < n; ++j) {
      g(i, j) += 0.5 * inv_n * (std::exp(logits(i, j) - peak) / z - (i == j ? 1.0 : 0.0));
    }
  }
  // b -> a: columns.
  for (std::size_t j = 0; j < n; ++j) {
    double peak = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, logits(i, j));
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(logits(i, j) - peak);
    loss += 0.5 * inv_n * (std::log(z) + peak - logits(j, j));
    for (std::size_t i = 0; i < n; ++i) {
      g(i, j) += 0.5 * inv_n * (std::exp(logits(i, j) - peak) / z - (i == j ? 1.0 : 0.0));
    }
  }
  if (grad_a != nullptr) {
    grad_a->Resize(n, d);
    grad_a->Fill(0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) simd::Axpy(g(i, j) / tau, b.Row(j), grad_a->Row(i), d);
  }
  if (grad_b != nullptr) {
    grad_b->Resize(n, d);
    grad_b->Fill(0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) simd::Axpy(g(i, j) / tau, a.Row(i), grad_b->Row(j), d);
  }
  return loss;
}

double SquaredDistance(const Matrix& a, const Matrix& b, Matrix* grad_a, Matrix* grad_b) {
  if (a.rows != b.rows || a.cols != b.cols) throw Error(ErrorCode::kShapeError, "distance shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(a.rows);
  if (grad_a != nullptr) grad_a->Resize(a.rows, a.cols);
  if (grad_b != nullptr) grad_b->Resize(a.rows, a.cols);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sum += d * d;
    if (grad_a != nullptr) grad_a->data[i] = 2.0 * d * inv_n;
    if (grad_b != nullptr) grad_b->data[i] = -2.0 * d * inv_n;
  }
  return sum * inv_n;
}

// ---- Optimizer ----------------------------------------------------------------

double ClipGradNorm(ParamStore& store, double max_norm) {
  const double norm = store.GradNorm();
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : store.params()) {
      if (!p->trainable) continue;
      for (double& g : p->grad) g *= s;
    }
  }
  return norm;
}

Adam::Adam(ParamStore& store, AdamConfig cfg) : store_(store), cfg_(cfg) {
  for (const auto& p : store_.params()) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

double Adam::Step() {
  store_.CheckFiniteGrads();
  const double norm = ClipGradNorm(store_, cfg_.clip_norm);
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto& params = store_.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    if (!p.trainable) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      p.value[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
  return norm;
}

}  // namespace texgen::nn
