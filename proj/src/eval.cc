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
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "texgen/simd/kernels.h"

namespace texgen::eval {

namespace fs = std::filesystem;

// ---- Anchor-axis projection ---------------------------------------------------

const char* AttributeName(Attribute a) {
  switch (a) {
    case Attribute::kRoughness: return "roughness";
    case Attribute::kSlipperiness: return "slipperiness";
    case Attribute::kHardness: return "hardness";
  }
  return "unknown";
}

Attribute ParseAttribute(const std::string& name) {
  for (Attribute a : {Attribute::kRoughness, Attribute::kSlipperiness, Attribute::kHardness}) {
    if (name == AttributeName(a)) return a;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown attribute " + name);
}

double AnchorProjection(double x, double a, double b) {
  if (a == b) throw Error(ErrorCode::kDegenerateAxis, "anchor ratings coincide");
  const double d = b - a;
  return (x - a) * d / (d * d);
}

ProjectionRecord MakeProjectionRecord(std::string participant, std::string pair, Attribute attribute,
                                      double x, double a, double b) {
  return {std::move(participant), std::move(pair), attribute, x, a, b, AnchorProjection(x, a, b)};
}

std::map<Attribute, double> InsideRate(const std::vector<ProjectionRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::kEmptyInput, "no projection records");
  std::map<Attribute, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& r : records) {
    auto& [inside, total] = counts[r.attribute];
    ++total;
    if (r.t >= 0.0 && r.t <= 1.0) ++inside;
  }
  std::map<Attribute, double> rates;
  for (const auto& [attr, c] : counts) {
    rates[attr] = static_cast<double>(c.first) / static_cast<double>(c.second);
  }
  return rates;
}

std::vector<ProjectionRecord> LoadRatingsCsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "ratings file not found: " + path.string());
  std::string line;
  if (!std::getline(in, line)) return {};
  std::vector<ProjectionRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 6) {
      throw Error(ErrorCode::kFormatError, path.string() + ":" + std::to_string(line_no) +
                                               ": expected participant,pair,attribute,x,a,b");
    }
    try {
      out.push_back(MakeProjectionRecord(cells[0], cells[1], ParseAttribute(cells[2]),
                                         std::stod(cells[3]), std::stod(cells[4]),
                                         std::stod(cells[5])));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kFormatError,
                  path.string() + ":" + std::to_string(line_no) + ": bad number");
    }
  }
  return out;
}

void WriteProjectionCsv(const std::vector<ProjectionRecord>& records, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.precision(17);
  out << "participant,pair,attribute,x,a,b,t\n";
  for (const auto& r : records) {
    out << r.participant << ',' << r.pair << ',' << AttributeName(r.attribute) << ',' << r.x << ','
        << r.a << ',' << r.b << ',' << r.t << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

// ---- Clustering ---------------------------------------------------------------

Points MakePoints(const std::vector<std::vector<double>>& rows) {
  Points p;
  p.n = rows.size();
  p.dim = rows.empty() ? 0 : rows[0].size();
  p.data.reserve(p.n * p.dim);
  for (const auto& r : rows) {
    if (r.size() != p.dim) throw Error(ErrorCode::kShapeError, "points differ in dimension");
    p.data.insert(p.data.end(), r.begin(), r.end());
  }
  return p;
}

namespace {

double Dist(const Points& p, std::size_t i, std::size_t j) {
  return std::sqrt(simd::SquaredDistance(p.Row(i), p.Row(j), p.dim));
}

// Labels remapped to 0..k-1 in order of first value.
std::vector<int> Compact(const std::vector<int>& labels, int* k) {
  std::vector<int> sorted(labels);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), labels[i]) - sorted.begin());
  }
  *k = static_cast<int>(sorted.size());
  return out;
}

void CheckLabels(const Points& p, const std::vector<int>& labels, const char* metric, int* k,
                 std::vector<int>* compact) {
  if (labels.size() != p.n) {
    throw Error(ErrorCode::kShapeError, std::string(metric) + ": one label per point expected");
  }
  *compact = Compact(labels, k);
  if (*k < 2) throw Error(ErrorCode::kDegenerateInput, std::string(metric) + ": needs at least 2 clusters");
  if (static_cast<std::size_t>(*k) >= p.n) {
    throw Error(ErrorCode::kDegenerateInput, std::string(metric) + ": needs fewer clusters than points");
  }
}

std::vector<double> Centroids(const Points& p, const std::vector<int>& lab, int k,
                              std::vector<std::size_t>* sizes) {
  std::vector<double> c(static_cast<std::size_t>(k) * p.dim, 0.0);
  sizes->assign(k, 0);
  for (std::size_t i = 0; i < p.n; ++i) {
    simd::Axpy(1.0, p.Row(i), c.data() + lab[i] * p.dim, p.dim);
    ++(*sizes)[lab[i]];
  }
  for (int j = 0; j < k; ++j)
    for (std::size_t d = 0; d < p.dim; ++d) c[j * p.dim + d] /= static_cast<double>((*sizes)[j]);
  return c;
}

}  // namespace

double Silhouette(const Points& p, const std::vector<int>& labels) {
  int k = 0;
  std::vector<int> lab;
  CheckLabels(p, labels, "silhouette", &k, &lab);
  std::vector<std::size_t> sizes(k, 0);
  for (int l : lab) ++sizes[l];
  std::vector<double> sum(k);
  double total = 0.0;
  for (std::size_t i = 0; i < p.n; ++i) {
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t j = 0; j < p.n; ++j)
      if (j != i) sum[lab[j]] += Dist(p, i, j);
    const int own = lab[i];
    if (sizes[own] == 1) continue;
    const double a = sum[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != own) b = std::min(b, sum[c] / static_cast<double>(sizes[c]));
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(p.n);
}

double CalinskiHarabasz(const Points& p, const std::vector<int>& labels) {
  int k = 0;
  std::vector<int> lab;
  CheckLabels(p, labels, "calinski_harabasz", &k, &lab);
  std::vector<std::size_t> sizes;
  const auto c = Centroids(p, lab, k, &sizes);
  std::vector<double> mean(p.dim, 0.0);
  for (std::size_t i = 0; i < p.n; ++i) simd::Axpy(1.0 / static_cast<double>(p.n), p.Row(i), mean.data(), p.dim);
  double between = 0.0, within = 0.0;
  for (int j = 0; j < k; ++j) {
    between += static_cast<double>(sizes[j]) * simd::SquaredDistance(c.data() + j * p.dim, mean.data(), p.dim);
  }
  for (std::size_t i = 0; i < p.n; ++i) within += simd::SquaredDistance(p.Row(i), c.data() + lab[i] * p.dim, p.dim);
  if (within == 0.0) return std::numeric_limits<double>::infinity();
  return (between / (k - 1)) / (within / static_cast<double>(p.n - k));
}

double DaviesBouldin(const Points& p, const std::vector<int>& labels) {
  int k = 0;
  std::vector<int> lab;
  CheckLabels(p, labels, "davies_bouldin", &k, &lab);
  std::vector<std::size_t> sizes;
  const auto c = Centroids(p, lab, k, &sizes);
  std::vector<double> scatter(k, 0.0);
  for (std::size_t i = 0; i < p.n; ++i) {
    scatter[lab[i]] += std::sqrt(simd::SquaredDistance(p.Row(i), c.data() + lab[i] * p.dim, p.dim));
  }
  for (int j = 0; j < k; ++j) scatter[j] /= static_cast<double>(sizes[j]);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    double worst = 0.0;
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      const double d = std::sqrt(simd::SquaredDistance(c.data() + i * p.dim, c.data() + j * p.dim, p.dim));
      if (d == 0.0) throw Error(ErrorCode::kDegenerateInput, "davies_bouldin: coincident centroids");
      worst = std::max(worst, (scatter[i] + scatter[j]) / d);
    }
    total += worst;
  }
  return total / k;
}

namespace {

struct Contingency {
  int ka = 0, kb = 0;
  std::vector<double> table;  // ka x kb
  std::vector<double> row, col;
  double n = 0.0;
};

Contingency Count(const std::vector<int>& a, const std::vector<int>& b, const char* metric) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(ErrorCode::kDegenerateInput, std::string(metric) + ": labelings must be equal-length and nonempty");
  }
  Contingency c;
  const auto ca = Compact(a, &c.ka);
  const auto cb = Compact(b, &c.kb);
  c.table.assign(static_cast<std::size_t>(c.ka) * c.kb, 0.0);
  c.row.assign(c.ka, 0.0);
  c.col.assign(c.kb, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    c.table[ca[i] * c.kb + cb[i]] += 1.0;
    c.row[ca[i]] += 1.0;
    c.col[cb[i]] += 1.0;
  }
  c.n = static_cast<double>(a.size());
  return c;
}

double Choose2(double x) { return 0.5 * x * (x - 1.0); }

}  // namespace

double AdjustedRand(const std::vector<int>& a, const std::vector<int>& b) {
  const Contingency c = Count(a, b, "adjusted_rand");
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (double v : c.table) index += Choose2(v);
  for (double v : c.row) sa += Choose2(v);
  for (double v : c.col) sb += Choose2(v);
  const double expected = sa * sb / Choose2(c.n);
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;  // both labelings trivial in the same way
  return (index - expected) / (max_index - expected);
}

double NormalizedMutualInfo(const std::vector<int>& a, const std::vector<int>& b) {
  const Contingency c = Count(a, b, "nmi");
  auto entropy = [&](const std::vector<double>& counts) {
    double h = 0.0;
    for (double v : counts)
      if (v > 0) h -= (v / c.n) * std::log(v / c.n);
    return h;
  };
  const double ha = entropy(c.row), hb = entropy(c.col);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  double mi = 0.0;
  for (int i = 0; i < c.ka; ++i) {
    for (int j = 0; j < c.kb; ++j) {
      const double v = c.table[i * c.kb + j];
      if (v > 0) mi += (v / c.n) * std::log(v * c.n / (c.row[i] * c.col[j]));
    }
  }
  return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

KMeansResult KMeans(const Points& p, int k, std::uint64_t seed, int restarts, int max_iter) {
  if (k < 1 || static_cast<std::size_t>(k) > p.n) {
    throw Error(ErrorCode::kDegenerateInput, "kmeans: k must be between 1 and the point count");
  }
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  const std::size_t dim = p.dim;
  std::vector<double> d2(p.n);
  for (int run = 0; run < std::max(restarts, 1); ++run) {
    // k-means++ seeding.
    std::vector<double> cent(static_cast<std::size_t>(k) * dim);
    std::uniform_int_distribution<std::size_t> first(0, p.n - 1);
    std::copy_n(p.Row(first(rng)), dim, cent.begin());
    for (std::size_t i = 0; i < p.n; ++i) d2[i] = simd::SquaredDistance(p.Row(i), cent.data(), dim);
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      for (double v : d2) total += v;
      std::size_t pick = 0;
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double r = u(rng);
        for (pick = 0; pick + 1 < p.n; ++pick) {
          r -= d2[pick];
          if (r < 0.0) break;
        }
      } else {
        pick = first(rng);
      }
      std::copy_n(p.Row(pick), dim, cent.begin() + c * dim);
      for (std::size_t i = 0; i < p.n; ++i) {
        d2[i] = std::min(d2[i], simd::SquaredDistance(p.Row(i), cent.data() + c * dim, dim));
      }
    }
    // Lloyd.
    std::vector<int> assign(p.n, -1);
    std::vector<std::size_t> sizes(k);
    double inertia = 0.0;
    for (int it = 0; it < max_iter; ++it) {
      bool changed = false;
      inertia = 0.0;
      for (std::size_t i = 0; i < p.n; ++i) {
        int arg = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          const double d = simd::SquaredDistance(p.Row(i), cent.data() + c * dim, dim);
          if (d < bd) {
            bd = d;
            arg = c;
          }
        }
        if (assign[i] != arg) changed = true;
        assign[i] = arg;
        inertia += bd;
      }
      if (!changed && it > 0) break;
      std::vector<double> next(cent.size(), 0.0);
      std::fill(sizes.begin(), sizes.end(), 0);
      for (std::size_t i = 0; i < p.n; ++i) {
        simd::Axpy(1.0, p.Row(i), next.data() + assign[i] * dim, dim);
        ++sizes[assign[i]];
      }
      for (int c = 0; c < k; ++c) {
        if (sizes[c] == 0) {
          std::copy_n(cent.begin() + c * dim, dim, next.begin() + c * dim);  // keep an empty cluster in place
          continue;
        }
        for (std::size_t d = 0; d < dim; ++d) next[c * dim + d] /= static_cast<double>(sizes[c]);
      }
      cent.swap(next);
    }
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.assignment = assign;
      best.centroids = cent;
    }
  }
  return best;
}

nlohmann::json ClusteringReport::ToJson() const {
  return nlohmann::json{{"silhouette", silhouette},
                        {"calinski_harabasz", calinski_harabasz},
                        {"davies_bouldin", davies_bouldin},
                        {"adjusted_rand", adjusted_rand},
                        {"nmi", nmi}};
}

ClusteringReport ClusteringMetrics(const Points& p, const std::vector<int>& labels, std::uint64_t seed) {
  int k = 0;
  std::vector<int> lab;
  CheckLabels(p, labels, "clustering_metrics", &k, &lab);
  std::vector<std::size_t> sizes(k, 0);
  for (int l : lab) ++sizes[l];
  for (std::size_t s : sizes) {
    if (s < 2) throw Error(ErrorCode::kDegenerateInput, "silhouette: every class needs at least 2 points");
  }
  ClusteringReport r;
  r.silhouette = Silhouette(p, labels);
  r.calinski_harabasz = CalinskiHarabasz(p, labels);
  r.davies_bouldin = DaviesBouldin(p, labels);
  r.kmeans_assignment = KMeans(p, k, seed).assignment;
  r.adjusted_rand = AdjustedRand(labels, r.kmeans_assignment);
  r.nmi = NormalizedMutualInfo(labels, r.kmeans_assignment);
  return r;
}

// ---- PCA ----------------------------------------------------------------------

std::vector<double> Pca2(const Points& p) {
  if (p.n < 2 || p.dim < 2) throw Error(ErrorCode::kDegenerateInput, "pca: needs at least 2 points in 2+ dimensions");
  Eigen::MatrixXd x(p.n, p.dim);
  for (std::size_t i = 0; i < p.n; ++i)
    for (std::size_t d = 0; d < p.dim; ++d) x(i, d) = p.Row(i)[d];
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(p.n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::MatrixXd axes(p.dim, 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(p.dim - 1 - c);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.col(c) = v;
  }
  const Eigen::MatrixXd proj = x * axes;
  std::vector<double> out(p.n * 2);
  for (std::size_t i = 0; i < p.n; ++i) {
    out[2 * i] = proj(i, 0);
    out[2 * i + 1] = proj(i, 1);
  }
  return out;
}

void WritePcaCsv(const std::vector<std::string>& ids, const std::vector<int>& labels,
                 const std::vector<double>& coords, const fs::path& path) {
  if (coords.size() != 2 * ids.size() || labels.size() != ids.size()) {
    throw Error(ErrorCode::kShapeError, "pca csv: ids, labels and coordinates disagree in count");
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.precision(17);
  out << "id,label,pc1,pc2\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << ',' << labels[i] << ',' << coords[2 * i] << ',' << coords[2 * i + 1] << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

}  // namespace texgen::eval
