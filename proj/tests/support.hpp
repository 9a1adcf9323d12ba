#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "labelreach/prep.hpp"
#include "labelreach/raster.hpp"

namespace labelreach::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("labelreach_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline EmbeddingRaster random_embedding(std::uint32_t w, std::uint32_t h, std::uint32_t bands, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> dist(0.0f, 3.0f);
  EmbeddingRaster r(w, h, bands);
  for (auto& v : r.values) v = dist(gen);
  return r;
}

inline LabelRaster random_labels(std::uint32_t w, std::uint32_t h, std::uint16_t classes, double nodata_rate,
                                 std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LabelRaster r(w, h, 0);
  for (auto& id : r.ids) id = u(gen) < nodata_rate ? kNodata : static_cast<std::uint16_t>(gen() % classes);
  return r;
}

/// Dataset with sequential provenance (tile 0, offset = row index).
inline PixelDataset make_dataset(std::size_t d, std::size_t c, std::vector<double> features,
                                 std::vector<std::uint16_t> targets) {
  PixelDataset ds;
  ds.n_features = d;
  ds.n_classes = c;
  ds.features = std::move(features);
  ds.targets = std::move(targets);
  for (std::size_t i = 0; i < ds.targets.size(); ++i) ds.provenance.push_back({0, static_cast<std::uint32_t>(i)});
  return ds;
}

/// Gaussian blobs centred at sep * e_(class mod d).
inline PixelDataset blobs(std::size_t n, std::size_t d, std::size_t c, double sep, double sigma, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<double> f;
  std::vector<std::uint16_t> y;
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::uint16_t>(i % c);
    for (std::size_t j = 0; j < d; ++j) f.push_back((j == k % d ? sep : 0.0) + noise(gen));
    y.push_back(k);
  }
  return make_dataset(d, c, std::move(f), std::move(y));
}

template <typename Model>
double accuracy(const Model& m, const PixelDataset& ds) {
  std::vector<double> p(ds.n_classes);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    m.predict_proba(ds.row(i), p);
    std::size_t best = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
      if (p[k] > p[best]) best = k;
    hit += best == ds.targets[i];
  }
  return static_cast<double>(hit) / static_cast<double>(ds.size());
}

/// Row-shuffled copy (provenance travels with each row).
inline PixelDataset shuffled(const PixelDataset& ds, std::uint64_t seed) {
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), std::mt19937_64(seed));
  PixelDataset out;
  out.n_features = ds.n_features;
  out.n_classes = ds.n_classes;
  for (auto i : order) {
    auto r = ds.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.targets.push_back(ds.targets[i]);
    out.provenance.push_back(ds.provenance[i]);
  }
  return out;
}

}  // namespace labelreach::testing
