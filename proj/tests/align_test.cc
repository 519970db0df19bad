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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

namespace texgen::align {
namespace {

namespace fs = std::filesystem;

std::vector<double> Unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  double n = 0.0;
  for (double& x : v) {
    x = g(rng);
    n += x * x;
  }
  for (double& x : v) x /= std::sqrt(n);
  return v;
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST(Embeddings, RoundTripAndValidation) {
  TempDir dir("texgen_align_emb");
  std::mt19937_64 rng(1);
  vae::EmbeddingMap m{{"soft and spongy foam", Unit(kTextDim, rng)}, {"glossy tile", Unit(kTextDim, rng)}};
  SaveEmbeddings(m, dir.path() / "embeddings.json");
  const auto back = LoadEmbeddings(dir.path() / "embeddings.json");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.at("glossy tile"), m.at("glossy tile"));
  EXPECT_EQ(LookupEmbedding(back, "soft and spongy foam"), m.at("soft and spongy foam"));
  try {
    LookupEmbedding(back, "velvet");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmbeddingNotFound);
  }

  m["glossy tile"][0] += 0.01;
  SaveEmbeddings(m, dir.path() / "bad.json");
  EXPECT_THROW(LoadEmbeddings(dir.path() / "bad.json"), Error);
  {
    std::ofstream out(dir.path() / "short.json");
    out << R"({"x": [1.0, 0.0]})";
  }
  try {
    LoadEmbeddings(dir.path() / "short.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormatError);
  }
  try {
    LoadEmbeddings(dir.path() / "missing.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
  }
}

TEST(LatentOps, AverageProperties) {
  std::mt19937_64 rng(2);
  const auto a = Unit(64, rng), b = Unit(64, rng);
  EXPECT_EQ(AverageLatents(a, a), a);
  std::vector<double> neg(a);
  for (double& v : neg) v = -v;
  for (double v : AverageLatents(a, neg)) EXPECT_EQ(v, 0.0);
  // Commutes with a coordinate permutation applied to both inputs.
  std::vector<std::size_t> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> pa(64), pb(64);
  for (std::size_t i = 0; i < 64; ++i) {
    pa[i] = a[perm[i]];
    pb[i] = b[perm[i]];
  }
  const auto avg = AverageLatents(a, b), pavg = AverageLatents(pa, pb);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(pavg[i], avg[perm[i]]);
  std::vector<double> bad(a);
  bad[5] = INFINITY;
  EXPECT_THROW(AverageLatents(a, bad), Error);
  EXPECT_THROW(AverageLatents(a, std::vector<double>(3)), Error);
}

TEST(LatentOps, PerturbIsSeededAndScaled) {
  std::vector<double> z(20000, 0.5);
  EXPECT_EQ(Perturb(z, 0.0, 9), z);
  const auto p1 = Perturb(z, kDefaultPerturbRadius, 9);
  EXPECT_EQ(p1, Perturb(z, kDefaultPerturbRadius, 9));
  EXPECT_NE(p1, Perturb(z, kDefaultPerturbRadius, 10));
  double s = 0.0, s2 = 0.0;
  for (double v : p1) {
    s += v - 0.5;
    s2 += (v - 0.5) * (v - 0.5);
  }
  const double n = static_cast<double>(z.size());
  EXPECT_NEAR(s / n, 0.0, 0.005);
  EXPECT_NEAR(std::sqrt(s2 / n), kDefaultPerturbRadius, 0.005);
  EXPECT_THROW(Perturb(z, -0.1, 1), Error);
}

std::vector<MaterialLatent> Index(const std::vector<std::pair<std::string, std::vector<double>>>& items) {
  std::vector<MaterialLatent> out;
  for (const auto& [id, v] : items) out.push_back({id, 0, v, 0.0});
  return out;
}

TEST(Retrieval, SelfFirstClampAndTies) {
  const auto index = Index({{"m2", {1, 0, 0}}, {"m0", {0, 1, 0}}, {"m1", {0, 1, 0}}, {"m3", {1, 1, 0}}});
  const auto self = RetrieveMaterials(std::vector<double>{1, 1, 0}, index, 1);
  ASSERT_EQ(self.size(), 1u);
  EXPECT_EQ(self[0].id, "m3");
  EXPECT_NEAR(self[0].similarity, 1.0, 1e-15);
  const auto all = RetrieveMaterials(std::vector<double>{0, 3, 0}, index, 99);
  ASSERT_EQ(all.size(), 4u);
  EXPECT_EQ(all[0].id, "m0");  // tie with m1 broken by id
  EXPECT_EQ(all[1].id, "m1");
  const auto ortho = RetrieveMaterials(std::vector<double>{0, 0, 2}, index, 4);
  std::vector<std::string> ids;
  for (const auto& h : ortho) {
    EXPECT_EQ(h.similarity, 0.0);
    ids.push_back(h.id);
  }
  EXPECT_EQ(ids, (std::vector<std::string>{"m0", "m1", "m2", "m3"}));
}

TEST(Retrieval, ScaleInvariantAndErrors) {
  std::mt19937_64 rng(3);
  std::vector<MaterialLatent> index;
  for (int i = 0; i < 30; ++i) index.push_back({"m" + std::to_string(i), i, Unit(64, rng), 0.1});
  auto q = Unit(64, rng);
  const auto r1 = RetrieveMaterials(q, index, 30);
  for (double& v : q) v *= 37.5;
  const auto r2 = RetrieveMaterials(q, index, 30);
  for (std::size_t i = 0; i < r1.size(); ++i) {
    EXPECT_EQ(r1[i].id, r2[i].id);
    EXPECT_NEAR(r1[i].similarity, r2[i].similarity, 1e-12);
  }
  try {
    RetrieveMaterials(q, {}, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyIndex);
  }
  EXPECT_THROW(RetrieveMaterials(std::vector<double>(64, 0.0), index, 3), Error);
}

TEST(Anchors, CollapsedByMeanOfMeans) {
  const Corpus base = GenerateSyntheticCorpus(4, 4);
  const Corpus aug = AugmentArResample(base, 3, 5);
  ASSERT_EQ(aug.materials.size(), 12u);
  vae::Model model(vae::NetConfig{}, 6);
  model.SetNormStats(Normalize(aug).second);
  const auto anchors = BuildAnchorSet(model, aug);
  ASSERT_EQ(anchors.size(), 4u);
  for (std::size_t m = 0; m < 4; ++m) {
    std::vector<double> expect(kLatentDim, 0.0);
    int count = 0;
    for (const auto& rec : aug.materials) {
      if (rec.SourceId() != base.materials[m].id) continue;
      const auto mu = model.EncodeMean(rec);
      for (int j = 0; j < kLatentDim; ++j) expect[j] += mu[j];
      ++count;
    }
    ASSERT_EQ(count, 3);
    for (int j = 0; j < kLatentDim; ++j) {
      EXPECT_NEAR(anchors[m].latent[j], expect[j] / 3.0, 1e-12);
      EXPECT_TRUE(std::isfinite(anchors[m].latent[j]));
    }
    EXPECT_EQ(anchors[m].mu, base.materials[m].friction);
    EXPECT_GE(anchors[m].mu, 0.0);
  }
}

TEST(Anchors, SingleMaterialGivesItsFriction) {
  const Corpus one = GenerateSyntheticCorpus(7, 1);
  vae::Model model(vae::NetConfig{}, 1);
  const auto anchors = BuildAnchorSet(model, one);
  ASSERT_EQ(anchors.size(), 1u);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    const auto q = Unit(kLatentDim, rng);
    EXPECT_NEAR(render::EstimateFriction(q, anchors, 5, 0.1), one.materials[0].friction, 1e-15);
  }
}

TEST(TextLatent, ZeroWeightsAndDeterminism) {
  vae::Model model(vae::NetConfig{}, 2);
  model.set_trained(true);
  std::mt19937_64 rng(9);
  const auto e = Unit(kTextDim, rng);
  EXPECT_EQ(TextToLatent(model, e), TextToLatent(model, e));
  for (auto& p : model.params().params())
    if (p->name.rfind("text_proj", 0) == 0) std::fill(p->value.begin(), p->value.end(), 0.0);
  for (double v : TextToLatent(model, e)) EXPECT_EQ(v, 0.0);
}

}  // namespace
}  // namespace texgen::align
