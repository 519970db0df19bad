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

#include "texgen/align.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "texgen/simd/kernels.h"

namespace texgen::align {

using nlohmann::json;
namespace fs = std::filesystem;

vae::EmbeddingMap LoadEmbeddings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "embedding file not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormatError, path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kFormatError, path.string() + ": expected an object");
  vae::EmbeddingMap out;
  for (const auto& [text, value] : j.items()) {
    std::vector<double> v;
    try {
      v = value.get<std::vector<double>>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::kFormatError, "embedding for \"" + text + "\" is not a number array");
    }
    if (v.size() != static_cast<std::size_t>(kTextDim)) {
      throw Error(ErrorCode::kFormatError, "embedding for \"" + text + "\" has " +
                                               std::to_string(v.size()) + " entries, expected 512");
    }
    const double norm = std::sqrt(simd::Dot(v.data(), v.data(), v.size()));
    if (std::abs(norm - 1.0) > 1e-6) {
      throw Error(ErrorCode::kFormatError, "embedding for \"" + text + "\" is not unit length");
    }
    out.emplace(text, std::move(v));
  }
  return out;
}

void SaveEmbeddings(const vae::EmbeddingMap& embeddings, const fs::path& path) {
  json j = json::object();
  for (const auto& [text, v] : embeddings) j[text] = v;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << j.dump() << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

const std::vector<double>& LookupEmbedding(const vae::EmbeddingMap& embeddings,
                                           const std::string& prompt) {
  auto it = embeddings.find(prompt);
  if (it == embeddings.end()) {
    throw Error(ErrorCode::kEmbeddingNotFound, "embedding not found for \"" + prompt + "\"");
  }
  return it->second;
}

std::vector<double> TextToLatent(vae::Model& model, std::span<const double> embedding) {
  return model.TextToLatent(embedding);
}

std::vector<double> AverageLatents(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kShapeError, "latents differ in size");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) {
      throw Error(ErrorCode::kNonFiniteInput, "latent has a non-finite entry");
    }
    out[i] = 0.5 * (a[i] + b[i]);
  }
  return out;
}

std::vector<double> Perturb(std::span<const double> z, double radius, std::uint64_t seed) {
  if (!(radius >= 0.0) || !std::isfinite(radius)) {
    throw Error(ErrorCode::kInvalidArgument, "perturbation radius must be finite and >= 0");
  }
  std::vector<double> out(z.begin(), z.end());
  if (radius == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, radius);
  for (double& v : out) v += gauss(rng);
  return out;
}

std::vector<MaterialLatent> EncodeCorpus(vae::Model& model, const Corpus& corpus) {
  std::vector<MaterialLatent> out;
  out.reserve(corpus.materials.size());
  for (const auto& rec : corpus.materials) {
    out.push_back({rec.id, rec.class_label, model.EncodeMean(rec), rec.friction});
  }
  return out;
}

std::vector<MaterialLatent> CollapseBySource(const Corpus& corpus,
                                             const std::vector<MaterialLatent>& per_record) {
  if (per_record.size() != corpus.materials.size()) {
    throw Error(ErrorCode::kShapeError, "one latent per corpus record expected");
  }
  std::vector<MaterialLatent> out;
  std::vector<std::size_t> counts;
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < per_record.size(); ++i) {
    const auto& rec = corpus.materials[i];
    const std::string& source = rec.SourceId();
    auto [it, fresh] = slot.emplace(source, out.size());
    if (fresh) {
      out.push_back({source, rec.class_label, std::vector<double>(per_record[i].mean.size(), 0.0),
                     rec.friction});
      counts.push_back(0);
    }
    auto& m = out[it->second];
    simd::Axpy(1.0, per_record[i].mean.data(), m.mean.data(), m.mean.size());
    ++counts[it->second];
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (double& v : out[k].mean) v /= static_cast<double>(counts[k]);
  }
  return out;
}

std::vector<RetrievalHit> RetrieveMaterials(std::span<const double> query,
                                            const std::vector<MaterialLatent>& index, std::size_t k) {
  if (index.empty()) throw Error(ErrorCode::kEmptyIndex, "material index is empty");
  const double qn = std::sqrt(simd::Dot(query.data(), query.data(), query.size()));
  if (qn == 0.0) throw Error(ErrorCode::kZeroVector, "query latent has zero norm");
  std::vector<RetrievalHit> hits;
  hits.reserve(index.size());
  for (const auto& m : index) {
    if (m.mean.size() != query.size()) {
      throw Error(ErrorCode::kShapeError, "latent size mismatch for material " + m.id);
    }
    const double mn = std::sqrt(simd::Dot(m.mean.data(), m.mean.data(), m.mean.size()));
    const double sim = mn == 0.0 ? 0.0 : simd::Dot(query.data(), m.mean.data(), query.size()) / (qn * mn);
    hits.push_back({m.id, sim});
  }
  std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
  });
  hits.resize(std::min(k, hits.size()));
  return hits;
}

render::FrictionAnchorSet BuildAnchorSet(vae::Model& model, const Corpus& corpus) {
  const auto collapsed = CollapseBySource(corpus, EncodeCorpus(model, corpus));
  render::FrictionAnchorSet anchors;
  for (const auto& m : collapsed) anchors.push_back({m.mean, m.friction});
  return anchors;
}

RetrievalScore CaptionRetrieval(vae::Model& model, const Corpus& corpus,
                                const vae::EmbeddingMap& embeddings,
                                const std::vector<MaterialLatent>& index) {
  RetrievalScore score;
  std::set<std::string> seen;
  for (const auto& rec : corpus.materials) {
    if (!seen.insert(rec.SourceId()).second) continue;
    for (const auto& caption : rec.captions) {
      const auto z = model.TextToLatent(LookupEmbedding(embeddings, caption));
      const auto hits = RetrieveMaterials(z, index, 1);
      score.correct += hits.front().id == rec.SourceId() ? 1 : 0;
      ++score.total;
    }
  }
  return score;
}

}  // namespace texgen::align
