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

#ifndef TEXGEN_NN_H_
#define TEXGEN_NN_H_

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "texgen/common.h"

// Small reverse-mode network toolkit: row-major batch matrices, layers with
// explicit Forward/Backward, loss terms with analytic gradients, and Adam.
namespace texgen::nn {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  void Resize(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    data.resize(r * c);
  }
  void Fill(double v) { std::fill(data.begin(), data.end(), v); }
  double* Row(std::size_t i) { return data.data() + i * cols; }
  const double* Row(std::size_t i) const { return data.data() + i * cols; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// A named trainable (or buffer) tensor with its gradient.
struct Param {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;

  std::size_t size() const { return value.size(); }
};

class ParamStore {
 public:
  Param& Add(const std::string& name, std::size_t rows, std::size_t cols, bool trainable = true);
  Param* Find(const std::string& name);
  const Param* Find(const std::string& name) const;

  void ZeroGrad();
  std::size_t TrainableCount() const;
  // Global L2 norm over trainable gradients.
  double GradNorm() const;
  // Throws Error(kNonFiniteGradient) naming the first offending parameter.
  void CheckFiniteGrads() const;
  // FNV-1a over the raw bytes of every value, in registration order.
  std::uint64_t Hash() const;

  std::vector<std::unique_ptr<Param>>& params() { return params_; }
  const std::vector<std::unique_ptr<Param>>& params() const { return params_; }

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

struct Context {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // dropout masks; required when training
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual void Forward(const Matrix& x, Matrix& y, Context& ctx) = 0;
  // Accumulates parameter gradients and writes the input gradient.
  virtual void Backward(const Matrix& dy, Matrix& dx) = 0;
};

// y = x W + b with W stored (in x out).
class Linear : public Layer {
 public:
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out);
  void Forward(const Matrix& x, Matrix& y, Context& ctx) override;
  void Backward(const Matrix& dy, Matrix& dx) override;
  Param& weight() { return *w_; }
  Param& bias() { return *b_; }

 private:
  Param* w_;
  Param* b_;
  std::size_t in_, out_;
  Matrix x_, xt_, wt_;
};

class Relu : public Layer {
 public:
  void Forward(const Matrix& x, Matrix& y, Context& ctx) override;
  void Backward(const Matrix& dy, Matrix& dx) override;

 private:
  Matrix y_;
};

// Inverted dropout; identity outside training.
class Dropout : public Layer {
 public:
  explicit Dropout(double p) : p_(p) {}
  void Forward(const Matrix& x, Matrix& y, Context& ctx) override;
  void Backward(const Matrix& dy, Matrix& dx) override;

 private:
  double p_;
  bool active_ = false;
  Matrix mask_;
};

// Per-feature batch normalization. Training uses batch statistics (biased
// variance) and updates running averages; evaluation uses the running ones.
class BatchNorm : public Layer {
 public:
  BatchNorm(ParamStore& store, const std::string& name, std::size_t features,
            double momentum = 0.1, double eps = 1e-5);
  void Forward(const Matrix& x, Matrix& y, Context& ctx) override;
  void Backward(const Matrix& dy, Matrix& dx) override;

 private:
  Param* gamma_;
  Param* beta_;
  Param* running_mean_;
  Param* running_var_;
  double momentum_, eps_;
  bool batch_stats_ = false;
  Matrix xhat_;
  std::vector<double> inv_std_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;
  void Add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  void Forward(const Matrix& x, Matrix& y, Context& ctx) override;
  void Backward(const Matrix& dy, Matrix& dx) override;
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<Matrix> acts_;
  Matrix grad_a_, grad_b_;
};

// y = x + Dropout(ReLU(Linear(x))).
class Residual : public Layer {
 public:
  Residual(ParamStore& store, const std::string& name, std::size_t width, double dropout);
  void Forward(const Matrix& x, Matrix& y, Context& ctx) override;
  void Backward(const Matrix& dy, Matrix& dx) override;

 private:
  Sequential inner_;
};

// Row-wise softmax -> cumulative sum -> scale by pi p/(p+1) -> clamp, over
// consecutive groups of `order` columns; matches lpc::ProjectToLsf.
class LsfHead : public Layer {
 public:
  explicit LsfHead(std::size_t order) : order_(order) {}
  void Forward(const Matrix& x, Matrix& y, Context& ctx) override;
  void Backward(const Matrix& dy, Matrix& dx) override;

 private:
  std::size_t order_;
  Matrix soft_;
  Matrix clamped_;
};

class Softplus : public Layer {
 public:
  void Forward(const Matrix& x, Matrix& y, Context& ctx) override;
  void Backward(const Matrix& dy, Matrix& dx) override;

 private:
  Matrix x_;
};

// Row-wise x / ||x||.
class L2Normalize : public Layer {
 public:
  void Forward(const Matrix& x, Matrix& y, Context& ctx) override;
  void Backward(const Matrix& dy, Matrix& dx) override;

 private:
  Matrix y_;
  std::vector<double> norm_;
};

double SoftplusValue(double x);

// ---- Loss terms: value plus gradient with respect to the first argument ----

// Smooth-L1 (transition 1.0), mean over all elements.
double SmoothL1(const Matrix& pred, const Matrix& target, Matrix* grad);

// Closed-form KL to N(0, I): sum over dims of 0.5 (mu^2 + e^lv - 1 - lv),
// mean over rows.
double GaussianKl(const Matrix& mu, const Matrix& logvar, Matrix* grad_mu, Matrix* grad_logvar);

// Symmetric InfoNCE over in-batch negatives with similarity a_i . b_j / tau:
// mean of the a->b and b->a cross entropies. Throws Error(kBatchTooSmall)
// below 2 rows.
double InfoNce(const Matrix& a, const Matrix& b, double tau, Matrix* grad_a, Matrix* grad_b);

// Squared L2 distance summed over dims, mean over rows.
double SquaredDistance(const Matrix& a, const Matrix& b, Matrix* grad_a, Matrix* grad_b);

// ---- Optimizer --------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

class Adam {
 public:
  Adam(ParamStore& store, AdamConfig cfg);
  // Clips the global gradient norm, then updates every trainable parameter.
  // Returns the norm before clipping.
  double Step();
  long steps() const { return t_; }

 private:
  ParamStore& store_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

// Global-norm clipping in place. Returns the norm before clipping.
double ClipGradNorm(ParamStore& store, double max_norm);

}  // namespace texgen::nn

#endif  // TEXGEN_NN_H_
