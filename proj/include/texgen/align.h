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

#ifndef TEXGEN_ALIGN_H_
#define TEXGEN_ALIGN_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "texgen/corpus.h"
#include "texgen/render.h"
#include "texgen/vae.h"

// Language-side inference and latent-space operations.
namespace texgen::align {

// ---- Embedding file -------------------------------------------------------------

// embeddings.json: {"caption": [512 numbers], ...}. Throws Error(kNotFound)
// for a missing file and Error(kFormatError) for malformed content, wrong
// dimension or a vector whose norm is not 1 within 1e-6.
vae::EmbeddingMap LoadEmbeddings(const std::filesystem::path& path);
void SaveEmbeddings(const vae::EmbeddingMap& embeddings, const std::filesystem::path& path);

// Throws Error(kEmbeddingNotFound) for an unknown prompt.
const std::vector<double>& LookupEmbedding(const vae::EmbeddingMap& embeddings,
                                           const std::string& prompt);

// ---- Latent operations ------------------------------------------------------------

std::vector<double> TextToLatent(vae::Model& model, std::span<const double> embedding);

// 0.5 (a + b). Throws Error(kShapeError) on mismatched sizes and
// Error(kNonFiniteInput) on non-finite entries.
std::vector<double> AverageLatents(std::span<const double> a, std::span<const double> b);

// Adds N(0, radius^2) noise per coordinate. Throws Error(kInvalidArgument) for
// a negative or non-finite radius.
std::vector<double> Perturb(std::span<const double> z, double radius, std::uint64_t seed);

inline constexpr double kDefaultPerturbRadius = 0.1;

// ---- Material index ---------------------------------------------------------------

struct MaterialLatent {
  std::string id;
  int class_label = 0;
  std::vector<double> mean;
  double friction = 0.0;
};

// Posterior mean of every record, in corpus order.
std::vector<MaterialLatent> EncodeCorpus(vae::Model& model, const Corpus& corpus);

// One entry per source material (records grouped by SourceId, in order of
// first appearance); the mean is the average of the group's posterior means.
std::vector<MaterialLatent> CollapseBySource(const Corpus& corpus,
                                             const std::vector<MaterialLatent>& per_record);

struct RetrievalHit {
  std::string id;
  double similarity = 0.0;
};

// Top-k by cosine similarity, descending, ties broken by ascending id. k is
// clamped to the index size. A zero-norm stored mean scores 0. Throws
// Error(kEmptyIndex) for an empty index, Error(kZeroVector) for a zero query
// and Error(kShapeError) on dimension mismatch.
std::vector<RetrievalHit> RetrieveMaterials(std::span<const double> query,
                                            const std::vector<MaterialLatent>& index,
                                            std::size_t k);

// Collapsed posterior means paired with their friction coefficients.
render::FrictionAnchorSet BuildAnchorSet(vae::Model& model, const Corpus& corpus);

struct RetrievalScore {
  std::size_t correct = 0;
  std::size_t total = 0;
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

// Top-1 retrieval of each source material's captions: the text latent of a
// caption should rank its own material first in `index`.
RetrievalScore CaptionRetrieval(vae::Model& model, const Corpus& corpus,
                                const vae::EmbeddingMap& embeddings,
                                const std::vector<MaterialLatent>& index);

}  // namespace texgen::align

#endif  // TEXGEN_ALIGN_H_
