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

#include "texgen/eval.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

namespace texgen::eval {
namespace {

namespace fs = std::filesystem;

// ---- Anchor projection --------------------------------------------------------

TEST(AnchorProjectionTest, WorkedExamples) {
  EXPECT_EQ(AnchorProjection(20, 20, 80), 0.0);
  EXPECT_NEAR(AnchorProjection(50, 20, 80), 0.5, 1e-12);
  EXPECT_NEAR(AnchorProjection(90, 20, 80), 7.0 / 6.0, 1e-12);
  EXPECT_NEAR(AnchorProjection(80, 20, 80), 1.0, 1e-12);
  EXPECT_NEAR(AnchorProjection(50, 80, 20), 0.5, 1e-12);
}

TEST(AnchorProjectionTest, DegenerateAxis) {
  try {
    AnchorProjection(10, 40, 40);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateAxis);
  }
}

TEST(AnchorProjectionTest, AffineInvariance) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> rating(0.0, 100.0), scale(0.1, 10.0), shift(-50.0, 50.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = rating(rng), a = rating(rng);
    double b = rating(rng);
    if (std::abs(b - a) < 1.0) b = a + 1.0;
    const double s = scale(rng), c = shift(rng);
    const double t = AnchorProjection(x, a, b);
    const double u = AnchorProjection(s * x + c, s * a + c, s * b + c);
    EXPECT_NEAR(t, u, 1e-12 * std::max(1.0, std::abs(t))) << i;
  }
}

TEST(InsideRateTest, BoundaryInclusiveCounts) {
  std::vector<ProjectionRecord> recs;
  for (double t : {-0.1, 0.5, 1.2, 1.0}) {
    ProjectionRecord r;
    r.attribute = Attribute::kSlipperiness;
    r.t = t;
    recs.push_back(r);
  }
  ProjectionRecord h;
  h.attribute = Attribute::kHardness;
  h.t = 0.5;
  recs.push_back(h);
  const auto rates = InsideRate(recs);
  EXPECT_EQ(rates.at(Attribute::kSlipperiness), 0.5);
  EXPECT_EQ(rates.at(Attribute::kHardness), 1.0);
  EXPECT_EQ(rates.count(Attribute::kRoughness), 0u);
  try {
    InsideRate({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyInput);
  }
}

TEST(InsideRateTest, CsvRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "texgen_eval_csv";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "ratings.csv");
    out << "participant,pair,attribute,x,a,b\n"
        << "p1,towel-whiteboard,roughness,50,20,80\n"
        << "p1,towel-whiteboard,hardness,90,20,80\n";
  }
  const auto recs = LoadRatingsCsv(dir / "ratings.csv");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_NEAR(recs[0].t, 0.5, 1e-12);
  EXPECT_EQ(recs[1].attribute, Attribute::kHardness);
  WriteProjectionCsv(recs, dir / "out.csv");
  const auto back = LoadRatingsCsv(dir / "out.csv");
  EXPECT_EQ(back[1].t, recs[1].t);
  {
    std::ofstream out(dir / "bad.csv");
    out << "participant,pair,attribute,x,a,b\np1,q,softness,1,2,3\n";
  }
  EXPECT_THROW(LoadRatingsCsv(dir / "bad.csv"), Error);
  fs::remove_all(dir);
}

// ---- Clustering: independent brute-force references --------------------------

double RefDist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double RefSilhouette(const std::vector<std::vector<double>>& x, const std::vector<int>& lab) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < x.size(); ++i) groups[lab[i]].push_back(i);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& own = groups[lab[i]];
    if (own.size() == 1) continue;
    double a = 0.0;
    for (std::size_t j : own)
      if (j != i) a += RefDist(x[i], x[j]);
    a /= static_cast<double>(own.size() - 1);
    double b = 1e300;
    for (const auto& [l, members] : groups) {
      if (l == lab[i]) continue;
      double d = 0.0;
      for (std::size_t j : members) d += RefDist(x[i], x[j]);
      b = std::min(b, d / static_cast<double>(members.size()));
    }
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(x.size());
}

// Pair-counting definition of the adjusted Rand index.
double RefAri(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size();
  double both = 0, in_a = 0, in_b = 0, pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += sa && sb;
      in_a += sa;
      in_b += sb;
      pairs += 1;
    }
  }
  const double expected = in_a * in_b / pairs;
  return (both - expected) / (0.5 * (in_a + in_b) - expected);
}

double RefNmi(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = static_cast<double>(a.size());
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> pab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1 / n;
    pb[b[i]] += 1 / n;
    pab[{a[i], b[i]}] += 1 / n;
  }
  double ha = 0, hb = 0, mi = 0;
  for (auto [k, p] : pa) ha -= p * std::log(p);
  for (auto [k, p] : pb) hb -= p * std::log(p);
  for (auto [k, p] : pab) mi += p * std::log(p / (pa[k.first] * pb[k.second]));
  return mi / (0.5 * (ha + hb));
}

std::vector<std::vector<double>> FixturePoints() {
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 15; ++i) {
    pts.push_back({(i * 7 % 11) / 3.0 + (i / 5) * 2.0, ((i * 5) % 13) / 4.0 - (i / 5),
                   ((i * 3) % 7) / 5.0 + 0.5 * (i % 3)});
  }
  return pts;
}

TEST(ClusteringTest, MatchesFrozenReferenceValues) {
  // Reference values computed once with scikit-learn on the same fixture.
  const auto rows = FixturePoints();
  const Points p = MakePoints(rows);
  std::vector<int> lab(15);
  for (int i = 0; i < 15; ++i) lab[i] = i / 5;
  const std::vector<int> other{0, 0, 1, 0, 0, 1, 1, 2, 1, 1, 2, 2, 0, 2, 2};
  EXPECT_NEAR(Silhouette(p, lab), 0.056779447437175876, 1e-12);
  EXPECT_NEAR(CalinskiHarabasz(p, lab), 7.4723292568821851, 1e-10);
  EXPECT_NEAR(DaviesBouldin(p, lab), 1.3906884740337488, 1e-12);
  EXPECT_NEAR(AdjustedRand(lab, other), 0.44, 1e-12);
  EXPECT_NEAR(NormalizedMutualInfo(lab, other), 0.54451408499640486, 1e-12);
}

TEST(ClusteringTest, AgreesWithBruteForceOnRandomInstances) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 2 + trial % 4;
    const int n = 10 + trial % 41;
    std::vector<std::vector<double>> rows;
    std::vector<int> lab, other;
    for (int i = 0; i < n; ++i) {
      const int c = i % k;
      rows.push_back({g(rng) + 3.0 * c, g(rng), g(rng) - c});
      lab.push_back(c * 7);  // non-contiguous labels
      other.push_back(static_cast<int>(rng() % 3));
    }
    const Points p = MakePoints(rows);
    EXPECT_NEAR(Silhouette(p, lab), RefSilhouette(rows, lab), 1e-9);
    EXPECT_NEAR(AdjustedRand(lab, other), RefAri(lab, other), 1e-9);
    EXPECT_NEAR(NormalizedMutualInfo(lab, other), RefNmi(lab, other), 1e-9);
  }
}

TEST(ClusteringTest, TwoTightClustersAndPerfectAgreement) {
  const std::vector<std::vector<double>> rows{{0, 0}, {0, 1}, {10, 10}, {10, 11}};
  const std::vector<int> lab{0, 0, 1, 1};
  const Points p = MakePoints(rows);
  EXPECT_GT(Silhouette(p, lab), 0.9);
  const auto report = ClusteringMetrics(p, lab, 3);
  EXPECT_EQ(report.adjusted_rand, 1.0);
  EXPECT_NEAR(report.nmi, 1.0, 1e-12);
  EXPECT_GE(report.davies_bouldin, 0.0);
  // Relabeling the clusters does not change agreement.
  EXPECT_EQ(AdjustedRand({0, 0, 1, 1}, {5, 5, 2, 2}), 1.0);
}

TEST(ClusteringTest, ShuffledLabelsGiveNearZeroAri) {
  std::mt19937_64 rng(4);
  std::vector<int> truth(1000), shuffled;
  for (int i = 0; i < 1000; ++i) truth[i] = i % 10;
  shuffled = truth;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  EXPECT_LT(std::abs(AdjustedRand(truth, shuffled)), 0.05);
}

TEST(ClusteringTest, MetricRangesOnRandomInputs) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> rows;
    std::vector<int> lab;
    for (int i = 0; i < 40; ++i) {
      rows.push_back({g(rng), g(rng), g(rng), g(rng)});
      lab.push_back(i % 4);
    }
    const auto r = ClusteringMetrics(MakePoints(rows), lab, trial);
    EXPECT_GE(r.silhouette, -1.0);
    EXPECT_LE(r.silhouette, 1.0);
    EXPECT_GE(r.davies_bouldin, 0.0);
    EXPECT_LE(r.adjusted_rand, 1.0);
    EXPECT_GE(r.nmi, 0.0);
    EXPECT_LE(r.nmi, 1.0);
  }
}

TEST(ClusteringTest, DegenerateInputsNameTheMetric) {
  const Points p = MakePoints({{0, 0}, {1, 1}, {2, 2}});
  try {
    Silhouette(p, {0, 0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
    EXPECT_NE(std::string(e.what()).find("silhouette"), std::string::npos);
  }
  try {
    ClusteringMetrics(MakePoints({{0, 0}, {1, 1}, {2, 2}, {3, 3}}), {0, 0, 0, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
  }
  try {
    DaviesBouldin(MakePoints({{0, 0}, {1, 1}, {0, 1}, {1, 0}}), {0, 0, 1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("davies_bouldin"), std::string::npos);
  }
}

TEST(KMeansTest, RecoversSeparatedBlobsDeterministically) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<std::vector<double>> rows;
  std::vector<int> lab;
  for (int i = 0; i < 60; ++i) {
    const int c = i % 3;
    rows.push_back({g(rng) + 5.0 * c, g(rng) + (c == 1 ? 4.0 : 0.0)});
    lab.push_back(c);
  }
  const Points p = MakePoints(rows);
  const auto a = KMeans(p, 3, 11);
  const auto b = KMeans(p, 3, 11);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(AdjustedRand(lab, a.assignment), 1.0);
  EXPECT_THROW(KMeans(p, 61, 1), Error);
}

TEST(PcaTest, RecoversDominantAxis) {
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 20; ++i) {
    const double t = i - 9.5;
    rows.push_back({2.0 * t, -2.0 * t, 0.1 * ((i % 2) ? 1 : -1)});
  }
  const auto coords = Pca2(MakePoints(rows));
  // The points span a plane, so two components keep every pairwise distance.
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 20; ++j) {
      double d_in = 0.0;
      for (int c = 0; c < 3; ++c) d_in += (rows[i][c] - rows[j][c]) * (rows[i][c] - rows[j][c]);
      const double dx = coords[2 * i] - coords[2 * j], dy = coords[2 * i + 1] - coords[2 * j + 1];
      EXPECT_NEAR(std::sqrt(dx * dx + dy * dy), std::sqrt(d_in), 1e-9);
    }
  }
  double v0 = 0.0, v1 = 0.0, m0 = 0.0, m1 = 0.0;
  for (int i = 0; i < 20; ++i) {
    m0 += coords[2 * i];
    m1 += coords[2 * i + 1];
    v0 += coords[2 * i] * coords[2 * i];
    v1 += coords[2 * i + 1] * coords[2 * i + 1];
  }
  EXPECT_NEAR(m0, 0.0, 1e-9);
  EXPECT_NEAR(m1, 0.0, 1e-9);
  EXPECT_GT(v0, v1);
}

}  // namespace
}  // namespace texgen::eval
