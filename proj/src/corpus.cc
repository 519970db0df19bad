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

#include "texgen/corpus.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace texgen {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

[[noreturn]] void FormatFail(const std::string& record, const std::string& what) {
  throw Error(ErrorCode::kFormatError, "record " + record + ": " + what);
}

bool ValidId(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

json EntryToJson(const ArGridEntry& e) {
  return json{{"force", e.force}, {"speed", e.speed}, {"lsf", e.lsf}, {"variance", e.variance}};
}

ArGridEntry EntryFromJson(const json& j, const std::string& record, const std::string& where) {
  ArGridEntry e;
  try {
    e.force = j.at("force").get<double>();
    e.speed = j.at("speed").get<double>();
    e.variance = j.at("variance").get<double>();
    const auto& lsf = j.at("lsf");
    if (!lsf.is_array() || lsf.size() != static_cast<std::size_t>(kArOrder)) {
      FormatFail(record, where + ".lsf must hold 21 values");
    }
    for (int i = 0; i < kArOrder; ++i) e.lsf[i] = lsf[i].get<double>();
  } catch (const json::exception& ex) {
    FormatFail(record, where + ": " + ex.what());
  }
  return e;
}

void ValidateEntry(const ArGridEntry& e, const std::string& record, const std::string& where) {
  if (!std::isfinite(e.force) || e.force < 0.0) FormatFail(record, where + ".force invalid");
  if (!std::isfinite(e.speed) || e.speed < 0.0) FormatFail(record, where + ".speed invalid");
  if (!std::isfinite(e.variance) || e.variance < 0.0) {
    FormatFail(record, where + ".variance must be finite and >= 0");
  }
  for (int i = 0; i < kArOrder; ++i) {
    const double w = e.lsf[i];
    if (!std::isfinite(w) || w <= 0.0 || w > kLsfUpper) {
      FormatFail(record, where + ".lsf[" + std::to_string(i + 1) + "] outside (0, pi - 1e-4]");
    }
    if (i > 0 && !(w - e.lsf[i - 1] >= kLsfMinGap)) {
      FormatFail(record, where + ".lsf[" + std::to_string(i) + "] >= lsf[" +
                             std::to_string(i + 1) + "] (LSFs must ascend)");
    }
  }
}

std::vector<char> ReadBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

json ReadJson(const fs::path& path, const std::string& record) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "missing file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    FormatFail(record, path.filename().string() + " is not valid JSON: " + ex.what());
  }
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

json NormStatsToJson(const NormStats& s) {
  return json{{"ar_mean", s.ar_mean}, {"ar_std", s.ar_std}, {"ar_flag", s.ar_flag},
              {"tap_mean", s.tap_mean}, {"tap_std", s.tap_std}, {"tap_flag", s.tap_flag}};
}

NormStats NormStatsFromJson(const json& j) {
  NormStats s;
  j.at("ar_mean").get_to(s.ar_mean);
  j.at("ar_std").get_to(s.ar_std);
  j.at("ar_flag").get_to(s.ar_flag);
  j.at("tap_mean").get_to(s.tap_mean);
  j.at("tap_std").get_to(s.tap_std);
  j.at("tap_flag").get_to(s.tap_flag);
  if (s.ar_mean.size() != kArTensorSize || s.ar_std.size() != kArTensorSize ||
      s.ar_flag.size() != kArTensorSize || s.tap_mean.size() != kTapTensorSize ||
      s.tap_std.size() != kTapTensorSize || s.tap_flag.size() != kTapTensorSize) {
    throw Error(ErrorCode::kFormatError, "manifest norm_stats has wrong channel counts");
  }
  return s;
}

void ApplyStats(std::vector<double>& data, std::size_t count, const std::vector<double>& mean,
                const std::vector<double>& std_dev, bool forward) {
  const std::size_t width = mean.size();
  for (std::size_t r = 0; r < count; ++r) {
    double* row = data.data() + r * width;
    for (std::size_t c = 0; c < width; ++c) {
      row[c] = forward ? (row[c] - mean[c]) / std_dev[c] : row[c] * std_dev[c] + mean[c];
    }
  }
}

void FitChannels(const std::vector<double>& data, std::size_t count, std::size_t width,
                 std::vector<double>& mean, std::vector<double>& std_dev,
                 std::vector<std::uint8_t>& flag) {
  mean.assign(width, 0.0);
  std_dev.assign(width, 1.0);
  flag.assign(width, 0);
  if (count == 0) return;
  for (std::size_t c = 0; c < width; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < count; ++r) sum += data[r * width + c];
    const double m = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t r = 0; r < count; ++r) {
      const double d = data[r * width + c] - m;
      sq += d * d;
    }
    const double s = std::sqrt(sq / static_cast<double>(count));
    mean[c] = m;
    if (s < NormStats::kMinChannelStd) {
      std_dev[c] = 1.0;
      flag[c] = 1;
    } else {
      std_dev[c] = s;
    }
  }
}

}  // namespace

const std::array<GridCentroid, kNumConditions>& UnifiedGridCentroids() {
  static const std::array<GridCentroid, kNumConditions> kCentroids = [] {
    std::array<GridCentroid, kNumConditions> c{};
    constexpr std::array<double, 6> kForces{0.2, 0.56, 0.92, 1.28, 1.64, 2.0};
    constexpr std::array<double, 3> kSpeeds{20.0, 160.0, 300.0};
    for (int i = 0; i < kNumConditions; ++i) c[i] = {kForces[i / 3], kSpeeds[i % 3]};
    return c;
  }();
  return kCentroids;
}

const std::array<double, kNumTapTraces>& DefaultImpactSpeeds() {
  static const std::array<double, kNumTapTraces> kSpeeds = [] {
    std::array<double, kNumTapTraces> s{};
    for (int i = 0; i < kNumTapTraces; ++i) s[i] = 20.0 * (i + 1);
    return s;
  }();
  return kSpeeds;
}

void ValidateRecord(const MaterialRecord& record) {
  const std::string& id = record.id;
  if (!ValidId(id)) FormatFail(id, "id must be nonempty [A-Za-z0-9._-]");
  std::set<std::pair<double, double>> conditions;
  for (int i = 0; i < kNumConditions; ++i) {
    const auto& e = record.ar_grid.entries[i];
    ValidateEntry(e, id, "ar_grid.entries[" + std::to_string(i) + "]");
    if (!conditions.emplace(e.force, e.speed).second) {
      FormatFail(id, "ar_grid.entries[" + std::to_string(i) + "] duplicates a (force, speed) pair");
    }
  }
  for (std::size_t i = 0; i < record.raw_samples.size(); ++i) {
    ValidateEntry(record.raw_samples[i], id, "raw_samples[" + std::to_string(i) + "]");
  }
  for (int t = 0; t < kNumTapTraces; ++t) {
    const auto& trace = record.tap_bank.traces[t];
    const std::string where = "tap_bank.traces[" + std::to_string(t) + "]";
    if (!std::isfinite(trace.impact_speed) || trace.impact_speed < 0.0) {
      FormatFail(id, where + ".impact_speed invalid");
    }
    if (t > 0 && !(trace.impact_speed > record.tap_bank.traces[t - 1].impact_speed)) {
      FormatFail(id, where + ".impact_speed not strictly ascending");
    }
    for (double v : trace.samples) {
      if (!std::isfinite(v)) FormatFail(id, where + ".samples has a non-finite value");
    }
  }
  if (!std::isfinite(record.friction) || record.friction < 0.0) {
    FormatFail(id, "friction must be finite and >= 0");
  }
}

std::array<double, kArTensorSize> ArTensor(const ArGrid& grid) {
  std::array<double, kArTensorSize> t{};
  for (int c = 0; c < kNumConditions; ++c) {
    const auto& e = grid.entries[c];
    std::copy(e.lsf.begin(), e.lsf.end(), t.begin() + c * kArChannels);
    t[c * kArChannels + kArOrder] = e.variance;
  }
  return t;
}

std::array<double, kTapTensorSize> TapTensor(const TapBank& bank) {
  std::array<double, kTapTensorSize> t{};
  for (int i = 0; i < kNumTapTraces; ++i) {
    std::copy(bank.traces[i].samples.begin(), bank.traces[i].samples.end(),
              t.begin() + i * kTapSamples);
  }
  return t;
}

ArGrid ArGridFromTensor(const double* tensor) {
  ArGrid grid;
  const auto& centroids = UnifiedGridCentroids();
  for (int c = 0; c < kNumConditions; ++c) {
    auto& e = grid.entries[c];
    e.force = centroids[c].force;
    e.speed = centroids[c].speed;
    std::copy(tensor + c * kArChannels, tensor + c * kArChannels + kArOrder, e.lsf.begin());
    e.variance = tensor[c * kArChannels + kArOrder];
  }
  return grid;
}

TapBank TapBankFromTensor(const double* tensor, const std::array<double, kNumTapTraces>& speeds) {
  TapBank bank;
  for (int i = 0; i < kNumTapTraces; ++i) {
    bank.traces[i].impact_speed = speeds[i];
    std::copy(tensor + i * kTapSamples, tensor + (i + 1) * kTapSamples,
              bank.traces[i].samples.begin());
  }
  return bank;
}

TensorSet StackTensors(const Corpus& corpus) {
  TensorSet set;
  set.count = corpus.materials.size();
  set.ar.resize(set.count * kArTensorSize);
  set.tap.resize(set.count * kTapTensorSize);
  for (std::size_t i = 0; i < set.count; ++i) {
    const auto ar = ArTensor(corpus.materials[i].ar_grid);
    const auto tap = TapTensor(corpus.materials[i].tap_bank);
    std::copy(ar.begin(), ar.end(), set.ar.begin() + i * kArTensorSize);
    std::copy(tap.begin(), tap.end(), set.tap.begin() + i * kTapTensorSize);
  }
  return set;
}

Corpus LoadCorpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw Error(ErrorCode::kNotFound, "corpus directory not found: " + dir.string());
  }
  Corpus corpus;
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) return corpus;
  const json manifest = ReadJson(manifest_path, "manifest");
  try {
    if (manifest.at("format_version").get<int>() != kFormatVersion) {
      throw Error(ErrorCode::kFormatError, "unsupported corpus format_version");
    }
    if (manifest.contains("generator")) corpus.generator = manifest.at("generator");
    if (manifest.contains("norm_stats") && !manifest.at("norm_stats").is_null()) {
      corpus.norm_stats = NormStatsFromJson(manifest.at("norm_stats"));
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kFormatError, std::string("manifest: ") + ex.what());
  }

  std::set<std::string> seen;
  for (const auto& m : manifest.at("materials")) {
    MaterialRecord rec;
    try {
      rec.id = m.at("id").get<std::string>();
      rec.source_id = m.value("source_id", std::string());
      rec.class_label = m.at("class_label").get<int>();
      rec.family = m.value("family", std::string());
      rec.friction = m.at("friction").get<double>();
      rec.captions = m.value("captions", std::vector<std::string>{});
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::kFormatError, std::string("manifest material entry: ") + ex.what());
    }
    if (!ValidId(rec.id)) FormatFail(rec.id, "id must be nonempty [A-Za-z0-9._-]");
    if (!seen.insert(rec.id).second) FormatFail(rec.id, "duplicate id");

    const json ar = ReadJson(dir / rec.id / "ar.json", rec.id);
    const auto& entries = ar.at("entries");
    if (!entries.is_array() || entries.size() != static_cast<std::size_t>(kNumConditions)) {
      FormatFail(rec.id, "ar.json must hold exactly 18 entries");
    }
    for (int i = 0; i < kNumConditions; ++i) {
      rec.ar_grid.entries[i] =
          EntryFromJson(entries[i], rec.id, "ar_grid.entries[" + std::to_string(i) + "]");
    }
    if (ar.contains("raw_samples")) {
      const auto& raw = ar.at("raw_samples");
      for (std::size_t i = 0; i < raw.size(); ++i) {
        rec.raw_samples.push_back(
            EntryFromJson(raw[i], rec.id, "raw_samples[" + std::to_string(i) + "]"));
      }
    }

    const auto bytes = ReadBytes(dir / rec.id / "tap.f32");
    constexpr std::size_t kExpected = (kNumTapTraces + kTapTensorSize) * sizeof(float);
    if (bytes.size() != kExpected) {
      FormatFail(rec.id, "tap.f32 has " + std::to_string(bytes.size()) + " bytes, expected " +
                             std::to_string(kExpected));
    }
    static_assert(std::endian::native == std::endian::little, "tap.f32 is little-endian");
    std::vector<float> values(kNumTapTraces + kTapTensorSize);
    std::memcpy(values.data(), bytes.data(), kExpected);
    for (int t = 0; t < kNumTapTraces; ++t) {
      rec.tap_bank.traces[t].impact_speed = values[t];
      for (int s = 0; s < kTapSamples; ++s) {
        rec.tap_bank.traces[t].samples[s] = values[kNumTapTraces + t * kTapSamples + s];
      }
    }
    ValidateRecord(rec);
    corpus.materials.push_back(std::move(rec));
  }
  return corpus;
}

void SaveCorpus(const Corpus& corpus, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());

  json materials = json::array();
  std::set<std::string> seen;
  for (const auto& rec : corpus.materials) {
    ValidateRecord(rec);
    if (!seen.insert(rec.id).second) FormatFail(rec.id, "duplicate id");
    json m{{"id", rec.id}, {"class_label", rec.class_label}, {"friction", rec.friction},
           {"captions", rec.captions}, {"family", rec.family}};
    if (!rec.source_id.empty()) m["source_id"] = rec.source_id;
    materials.push_back(std::move(m));

    const fs::path mdir = dir / rec.id;
    fs::create_directories(mdir, ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create " + mdir.string());
    json entries = json::array();
    for (const auto& e : rec.ar_grid.entries) entries.push_back(EntryToJson(e));
    json ar{{"id", rec.id}, {"entries", std::move(entries)}};
    if (!rec.raw_samples.empty()) {
      json raw = json::array();
      for (const auto& e : rec.raw_samples) raw.push_back(EntryToJson(e));
      ar["raw_samples"] = std::move(raw);
    }
    WriteText(mdir / "ar.json", ar.dump(1) + "\n");

    std::vector<float> values(kNumTapTraces + kTapTensorSize);
    for (int t = 0; t < kNumTapTraces; ++t) {
      values[t] = static_cast<float>(rec.tap_bank.traces[t].impact_speed);
      for (int s = 0; s < kTapSamples; ++s) {
        values[kNumTapTraces + t * kTapSamples + s] =
            static_cast<float>(rec.tap_bank.traces[t].samples[s]);
      }
    }
    std::ofstream out(mdir / "tap.f32", std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!out) throw Error(ErrorCode::kIoError, "write failed for " + (mdir / "tap.f32").string());
  }

  json bins = json::array();
  for (const auto& c : UnifiedGridCentroids()) bins.push_back({{"force", c.force}, {"speed", c.speed}});
  json manifest{{"format_version", kFormatVersion},
                {"grid_centroids", std::move(bins)},
                {"generator", corpus.generator},
                {"norm_stats", corpus.norm_stats.empty() ? json(nullptr)
                                                         : NormStatsToJson(corpus.norm_stats)},
                {"materials", std::move(materials)}};
  WriteText(dir / "manifest.json", manifest.dump(1) + "\n");
}

NormStats FitNormStats(const TensorSet& tensors) {
  if (tensors.count == 0) throw Error(ErrorCode::kEmptyInput, "cannot fit NormStats on an empty corpus");
  NormStats stats;
  FitChannels(tensors.ar, tensors.count, kArTensorSize, stats.ar_mean, stats.ar_std, stats.ar_flag);
  FitChannels(tensors.tap, tensors.count, kTapTensorSize, stats.tap_mean, stats.tap_std,
              stats.tap_flag);
  return stats;
}

void NormalizeInPlace(TensorSet& tensors, const NormStats& stats) {
  ApplyStats(tensors.ar, tensors.count, stats.ar_mean, stats.ar_std, true);
  ApplyStats(tensors.tap, tensors.count, stats.tap_mean, stats.tap_std, true);
}

void DenormalizeInPlace(TensorSet& tensors, const NormStats& stats) {
  ApplyStats(tensors.ar, tensors.count, stats.ar_mean, stats.ar_std, false);
  ApplyStats(tensors.tap, tensors.count, stats.tap_mean, stats.tap_std, false);
}

std::pair<TensorSet, NormStats> Normalize(const Corpus& corpus) {
  TensorSet tensors = StackTensors(corpus);
  NormStats stats = FitNormStats(tensors);
  NormalizeInPlace(tensors, stats);
  return {std::move(tensors), std::move(stats)};
}

}  // namespace texgen
