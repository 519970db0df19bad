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

#ifndef TEXGEN_EVAL_H_
#define TEXGEN_EVAL_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "texgen/common.h"

// Clustering quality of latent means and anchor-referenced rating analysis.
namespace texgen::eval {

// ---- Anchor-axis projection ---------------------------------------------------

enum class Attribute { kRoughness = 0, kSlipperiness, kHardness };

const char* AttributeName(Attribute a);
// Accepts the names above; throws Error(kInvalidArgument) otherwise.
Attribute ParseAttribute(const std::string& name);

// t = (x - a)(b - a) / (b - a)^2. Throws Error(kDegenerateAxis) when a == b.
double AnchorProjection(double x, double a, double b);

struct ProjectionRecord {
  std::string participant;
  std::string pair;
  Attribute attribute = Attribute::kRoughness;
  double x = 0.0;
  double a = 0.0;
  double b = 0.0;
  double t = 0.0;
};

// Fills t from (x, a, b).
ProjectionRecord MakeProjectionRecord(std::string participant, std::string pair, Attribute attribute,
                                      double x, double a, double b);

// Fraction of records with t in [0, 1], per attribute present. Throws
// Error(kEmptyInput) for no records.
std::map<Attribute, double> InsideRate(const std::vector<ProjectionRecord>& records);

// Columns participant,pair,attribute,x,a,b,t. Loading recomputes t.
std::vector<ProjectionRecord> LoadRatingsCsv(const std::filesystem::path& path);
void WriteProjectionCsv(const std::vector<ProjectionRecord>& records,
                        const std::filesystem::path& path);

// ---- Clustering ---------------------------------------------------------------

// Row-major point set.
struct Points {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  const double* Row(std::size_t i) const { return data.data() + i * dim; }
};

Points MakePoints(const std::vector<std::vector<double>>& rows);

// Each throws Error(kDegenerateInput) naming the metric when it is undefined:
// fewer than 2 clusters, a cluster count equal to the point count, or (for
// Davies-Bouldin) coincident centroids. Silhouette scores singleton clusters 0.
double Silhouette(const Points& p, const std::vector<int>& labels);
double CalinskiHarabasz(const Points& p, const std::vector<int>& labels);
double DaviesBouldin(const Points& p, const std::vector<int>& labels);

// Agreement between two labelings of the same points. NMI uses the
// arithmetic mean of the entropies and is 1 when both labelings are trivial.
double AdjustedRand(const std::vector<int>& a, const std::vector<int>& b);
double NormalizedMutualInfo(const std::vector<int>& a, const std::vector<int>& b);

struct KMeansResult {
  std::vector<int> assignment;
  std::vector<double> centroids;  // k x dim
  double inertia = 0.0;
};

// Lloyd iterations from k-means++ seeds; the lowest-inertia restart wins.
// Throws Error(kDegenerateInput) when k < 1 or k > n.
KMeansResult KMeans(const Points& p, int k, std::uint64_t seed, int restarts = 20,
                    int max_iter = 300);

struct ClusteringReport {
  double silhouette = 0.0;
  double calinski_harabasz = 0.0;
  double davies_bouldin = 0.0;
  double adjusted_rand = 0.0;
  double nmi = 0.0;
  std::vector<int> kmeans_assignment;

  nlohmann::json ToJson() const;
};

// Silhouette, CH and DB against the labels; ARI and NMI compare a seeded
// k-means (k = number of distinct labels) with the labels. Requires at least
// two classes and two points per class.
ClusteringReport ClusteringMetrics(const Points& p, const std::vector<int>& labels,
                                   std::uint64_t seed = 0);

// ---- PCA ----------------------------------------------------------------------

// Projection of the centered points onto the leading two principal axes
// (n x 2, row-major). Axis signs are fixed so the largest-magnitude loading
// is positive.
std::vector<double> Pca2(const Points& p);

void WritePcaCsv(const std::vector<std::string>& ids, const std::vector<int>& labels,
                 const std::vector<double>& coords, const std::filesystem::path& path);

}  // namespace texgen::eval

#endif  // TEXGEN_EVAL_H_
