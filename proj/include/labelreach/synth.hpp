#pragma once

// Synthetic embedding/label worlds with a closed-form Bayes oracle.
//
// Labels come from the argmax of C box-smoothed white-noise fields, which
// yields contiguous patches. Each pixel's embedding is its class mean plus a
// row-proportional drift along a fixed unit direction plus isotropic Gaussian
// noise, so the optimal classifier is nearest-shifted-mean.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "labelreach/error.hpp"
#include "labelreach/json_util.hpp"
#include "labelreach/raster.hpp"
#include "labelreach/rng.hpp"

namespace labelreach {

struct SynthConfig {
  std::uint32_t width = 128;
  std::uint32_t height = 128;
  std::uint32_t dims = 8;
  std::uint32_t classes = 5;
  std::uint64_t seed = 42;
  std::uint32_t smooth_radius = 6;
  double sep = 4.0;
  double noise_sigma = 0.5;
  double drift = 0.0;
  std::vector<std::pair<std::uint16_t, double>> rare_boost;
};

inline void validate(const SynthConfig& c) {
  if (c.width == 0 || c.height == 0) throw ConfigError("width and height must be ≥ 1");
  if (c.dims < 1) throw ConfigError("dims must be ≥ 1");
  if (c.classes < 2) throw ConfigError("classes must be ≥ 2");
  if (c.classes >= kNodata) throw ConfigError("classes must be < 65535");
  if (!(c.noise_sigma >= 0.0) || !std::isfinite(c.noise_sigma)) throw ConfigError("noise_sigma must be ≥ 0");
  if (!std::isfinite(c.sep)) throw ConfigError("sep must be finite");
  if (!std::isfinite(c.drift)) throw ConfigError("drift must be finite");
  for (const auto& [id, w] : c.rare_boost) {
    if (id >= c.classes) throw ConfigError("rare_boost class " + std::to_string(id) + " out of range");
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("rare_boost weights must be > 0");
  }
}

/// rare_boost serializes as [[class_id, weight], ...].
inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"width", c.width},   {"height", c.height},         {"dims", c.dims},
       {"classes", c.classes}, {"seed", c.seed},           {"smooth_radius", c.smooth_radius},
       {"sep", c.sep},       {"noise_sigma", c.noise_sigma}, {"drift", c.drift},
       {"rare_boost", c.rare_boost}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  detail::check_keys(j, "synth", {"width", "height", "dims", "classes", "seed", "smooth_radius", "sep",
                                  "noise_sigma", "drift", "rare_boost"});
  detail::read_key(j, "synth", "width", c.width);
  detail::read_key(j, "synth", "height", c.height);
  detail::read_key(j, "synth", "dims", c.dims);
  detail::read_key(j, "synth", "classes", c.classes);
  detail::read_key(j, "synth", "seed", c.seed);
  detail::read_key(j, "synth", "smooth_radius", c.smooth_radius);
  detail::read_key(j, "synth", "sep", c.sep);
  detail::read_key(j, "synth", "noise_sigma", c.noise_sigma);
  detail::read_key(j, "synth", "drift", c.drift);
  detail::read_key(j, "synth", "rare_boost", c.rare_boost);
}

struct SynthWorld {
  EmbeddingRaster embeddings;
  LabelRaster labels;
  std::vector<double> means;      // classes x dims, row-major
  std::vector<double> drift_dir;  // unit length, dims entries
  std::uint32_t classes = 0;
  std::uint32_t dims = 0;

  std::span<const double> mean(std::uint32_t c) const {
    return std::span<const double>(means).subspan(std::size_t{c} * dims, dims);
  }
};

namespace detail {

/// Box filter of the given radius along rows then columns; each output is the
/// mean over the in-bounds part of the window.
inline std::vector<double> box_smooth(const std::vector<double>& field, std::uint32_t w, std::uint32_t h,
                                      std::uint32_t radius) {
  if (radius == 0) return field;
  std::vector<double> tmp(field.size());
  std::vector<double> out(field.size());
  const auto r = static_cast<std::int64_t>(radius);
  for (std::uint32_t y = 0; y < h; ++y) {
    const double* row = field.data() + std::size_t{y} * w;
    for (std::int64_t x = 0; x < w; ++x) {
      const std::int64_t lo = std::max<std::int64_t>(0, x - r);
      const std::int64_t hi = std::min<std::int64_t>(w - 1, x + r);
      double s = 0.0;
      for (std::int64_t k = lo; k <= hi; ++k) s += row[k];
      tmp[std::size_t{y} * w + x] = s / static_cast<double>(hi - lo + 1);
    }
  }
  for (std::int64_t y = 0; y < h; ++y) {
    const std::int64_t lo = std::max<std::int64_t>(0, y - r);
    const std::int64_t hi = std::min<std::int64_t>(h - 1, y + r);
    for (std::uint32_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::int64_t k = lo; k <= hi; ++k) s += tmp[std::size_t(k) * w + x];
      out[std::size_t(y) * w + x] = s / static_cast<double>(hi - lo + 1);
    }
  }
  return out;
}

/// Random orthogonal matrix (row-major n x n) by Gram-Schmidt on Gaussian rows.
inline std::vector<double> random_orthogonal(std::uint32_t n, Rng& rng) {
  std::vector<double> q(std::size_t{n} * n);
  for (std::uint32_t i = 0; i < n; ++i) {
    double norm = 0.0;
    do {
      for (std::uint32_t j = 0; j < n; ++j) q[std::size_t{i} * n + j] = rng.normal();
      for (std::uint32_t k = 0; k < i; ++k) {
        double dot = 0.0;
        for (std::uint32_t j = 0; j < n; ++j) dot += q[std::size_t{i} * n + j] * q[std::size_t{k} * n + j];
        for (std::uint32_t j = 0; j < n; ++j) q[std::size_t{i} * n + j] -= dot * q[std::size_t{k} * n + j];
      }
      norm = 0.0;
      for (std::uint32_t j = 0; j < n; ++j) norm += q[std::size_t{i} * n + j] * q[std::size_t{i} * n + j];
      norm = std::sqrt(norm);
    } while (norm < 1e-8);
    for (std::uint32_t j = 0; j < n; ++j) q[std::size_t{i} * n + j] /= norm;
  }
  return q;
}

}  // namespace detail

/// Deterministic in config.seed. RNG stream order: label fields, mean
/// mixing matrices (only when classes > dims), drift direction, pixel noise.
inline SynthWorld generate_world(const SynthConfig& config) {
  validate(config);
  const std::uint32_t w = config.width, h = config.height, d = config.dims, c = config.classes;
  const std::size_t n = std::size_t{w} * h;
  Rng rng(config.seed);

  std::vector<double> boost(c, 0.0);
  for (const auto& [id, weight] : config.rare_boost) boost[id] += std::log(weight);

  std::vector<std::vector<double>> fields(c);
  for (std::uint32_t k = 0; k < c; ++k) {
    std::vector<double> noise(n);
    for (auto& v : noise) v = rng.normal();
    fields[k] = detail::box_smooth(noise, w, h, config.smooth_radius);
    if (boost[k] != 0.0)
      for (auto& v : fields[k]) v += boost[k];
  }

  SynthWorld world;
  world.classes = c;
  world.dims = d;
  world.labels = LabelRaster(w, h, 0);
  for (std::size_t p = 0; p < n; ++p) {
    std::uint16_t best = 0;
    for (std::uint32_t k = 1; k < c; ++k)
      if (fields[k][p] > fields[best][p]) best = static_cast<std::uint16_t>(k);
    world.labels.ids[p] = best;
  }

  // Class k uses axis (k mod d); wrap group g = k / d > 0 is rotated by its
  // own random orthogonal matrix so that means stay distinct.
  world.means.assign(std::size_t{c} * d, 0.0);
  const std::uint32_t groups = (c + d - 1) / d;
  std::vector<std::vector<double>> mixing(groups);
  for (std::uint32_t g = 1; g < groups; ++g) mixing[g] = detail::random_orthogonal(d, rng);
  for (std::uint32_t k = 0; k < c; ++k) {
    const std::uint32_t axis = k % d, g = k / d;
    for (std::uint32_t j = 0; j < d; ++j) {
      const double e = g == 0 ? (j == axis ? 1.0 : 0.0) : mixing[g][std::size_t{j} * d + axis];
      world.means[std::size_t{k} * d + j] = config.sep * e;
    }
  }

  world.drift_dir.resize(d);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& v : world.drift_dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
  } while (norm < 1e-8);
  for (auto& v : world.drift_dir) v /= norm;

  world.embeddings = EmbeddingRaster(w, h, d);
  for (std::uint32_t y = 0; y < h; ++y) {
    const double shift = config.drift * (static_cast<double>(y) / h);
    for (std::uint32_t x = 0; x < w; ++x) {
      const std::size_t p = std::size_t{y} * w + x;
      const auto mu = world.mean(world.labels.ids[p]);
      for (std::uint32_t j = 0; j < d; ++j) {
        double v = mu[j] + shift * world.drift_dir[j];
        if (config.noise_sigma > 0.0) v += config.noise_sigma * rng.normal();
        world.embeddings.values[std::size_t{j} * n + p] = static_cast<float>(v);
      }
    }
  }
  return world;
}

/// Nearest drift-shifted class mean; ties go to the lowest class id.
inline std::uint16_t bayes_predict(const SynthWorld& world, const SynthConfig& config, std::span<const double> x,
                                   std::uint32_t row) {
  if (x.size() != world.dims)
    throw DataError("bayes_predict: pixel has " + std::to_string(x.size()) + " bands, world has " +
                    std::to_string(world.dims));
  const double shift = config.drift * (static_cast<double>(row) / config.height);
  std::uint16_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::uint32_t k = 0; k < world.classes; ++k) {
    const auto mu = world.mean(k);
    double dist = 0.0;
    for (std::uint32_t j = 0; j < world.dims; ++j) {
      const double diff = x[j] - mu[j] - shift * world.drift_dir[j];
      dist += diff * diff;
    }
    if (dist < best_d) {
      best_d = dist;
      best = static_cast<std::uint16_t>(k);
    }
  }
  return best;
}

/// Embedding vector of pixel (row, col) widened to double.
inline std::vector<double> pixel_vector(const EmbeddingRaster& emb, std::uint32_t row, std::uint32_t col) {
  std::vector<double> x(emb.bands);
  for (std::uint32_t j = 0; j < emb.bands; ++j) x[j] = emb.at(j, row, col);
  return x;
}

/// Class table for a synthetic world: names "class_<id>", counts filled.
inline ClassTable synth_class_table(const SynthWorld& world) {
  ClassTable t;
  std::vector<std::uint64_t> counts(world.classes, 0);
  for (auto id : world.labels.ids) ++counts[id];
  const double total = static_cast<double>(world.labels.pixels());
  for (std::uint32_t k = 0; k < world.classes; ++k)
    t.entries.push_back({static_cast<std::uint16_t>(k), "class_" + std::to_string(k), counts[k],
                         static_cast<double>(counts[k]) / total});
  return t;
}

}  // namespace labelreach
