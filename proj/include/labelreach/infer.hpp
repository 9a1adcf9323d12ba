#pragma once

// Probability rasters from pixel models, overlap-averaged tiled inference
// for tile models, and argmax class maps.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "labelreach/error.hpp"
#include "labelreach/models/classifier.hpp"
#include "labelreach/models/softmax.hpp"
#include "labelreach/models/tile.hpp"
#include "labelreach/parallel.hpp"
#include "labelreach/raster.hpp"

namespace labelreach {

/// Class-planar f32 probabilities plus a validity flag per pixel. Invalid
/// pixels carry all-zero vectors.
struct ProbabilityRaster {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t classes = 0;
  std::vector<float> probs;
  std::vector<std::uint8_t> valid;

  ProbabilityRaster() = default;
  ProbabilityRaster(std::uint32_t w, std::uint32_t h, std::uint32_t c)
      : width(w), height(h), classes(c), probs(std::size_t{w} * h * c, 0.0f), valid(std::size_t{w} * h, 0) {}

  std::size_t pixels() const { return std::size_t{width} * height; }
  float at(std::uint32_t c, std::size_t pixel) const { return probs[c * pixels() + pixel]; }
  float& at(std::uint32_t c, std::size_t pixel) { return probs[c * pixels() + pixel]; }

  bool operator==(const ProbabilityRaster&) const = default;
};

namespace detail {

/// Writes a normalized double vector into the class planes of one pixel.
inline void store_pixel(ProbabilityRaster& out, std::size_t pixel, std::span<const double> p) {
  double s = 0.0;
  for (double v : p) s += v;
  for (std::uint32_t c = 0; c < out.classes; ++c) out.at(c, pixel) = static_cast<float>(p[c] / s);
  out.valid[pixel] = 1;
}

}  // namespace detail

/// Per-pixel predict_proba. Pixels whose mask label is nodata are invalid.
template <PixelClassifier M>
ProbabilityRaster predict_raster_pixelwise(const M& model, const EmbeddingRaster& emb,
                                           const LabelRaster* mask = nullptr) {
  if (emb.bands != model.n_features)
    throw DataError("predict: raster has " + std::to_string(emb.bands) + " bands, model expects " +
                    std::to_string(model.n_features));
  if (mask) validate_pair(emb, *mask);
  ProbabilityRaster out(emb.width, emb.height, static_cast<std::uint32_t>(model.n_classes));
  parallel_for(emb.height, [&](std::size_t row) {
    std::vector<double> x(emb.bands), p(model.n_classes);
    for (std::uint32_t col = 0; col < emb.width; ++col) {
      const std::size_t pixel = row * emb.width + col;
      if (mask && mask->ids[pixel] == kNodata) continue;
      for (std::uint32_t b = 0; b < emb.bands; ++b) x[b] = emb.values[b * emb.pixels() + pixel];
      model.predict_proba(x, p);
      detail::store_pixel(out, pixel, p);
    }
  });
  return out;
}

/// Tile origins along one axis: multiples of stride while the tile fits,
/// then one final origin clamped to extent - tile.
inline std::vector<std::uint32_t> tile_origins(std::uint32_t extent, std::uint32_t tile, std::uint32_t stride) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t o = 0; o + tile <= extent; o += stride) out.push_back(o);
  if (out.empty() || out.back() + tile < extent) out.push_back(extent - tile);
  return out;
}

/// Overlap-averaged tiled inference. Each pixel's output is the arithmetic
/// mean of the vectors from every covering tile, summed in row-major tile
/// order, then renormalized.
template <TileClassifier M>
ProbabilityRaster predict_raster_tiled(const M& model, const EmbeddingRaster& emb, std::uint32_t tile,
                                       std::uint32_t stride) {
  if (stride < 1 || stride > tile) throw ConfigError("stride must satisfy 1 ≤ stride ≤ tile");
  if (tile > emb.width || tile > emb.height)
    throw DataError("tiled predict: tile " + std::to_string(tile) + " exceeds raster " + std::to_string(emb.width) +
                    "x" + std::to_string(emb.height));
  const std::size_t c_count = model.n_classes();
  const auto xs = tile_origins(emb.width, tile, stride);
  const auto ys = tile_origins(emb.height, tile, stride);
  const std::size_t n_tiles = xs.size() * ys.size();

  std::vector<double> sum(emb.pixels() * c_count, 0.0);
  std::vector<std::uint32_t> cover(emb.pixels(), 0);
  const std::size_t batch = std::max<std::size_t>(1, 2 * thread_count());
  std::vector<std::vector<double>> preds(batch);
  for (std::size_t first = 0; first < n_tiles; first += batch) {
    const std::size_t count = std::min(batch, n_tiles - first);
    parallel_for(count, [&](std::size_t k) {
      const std::size_t t = first + k;
      preds[k] = model.predict_tile(cut_tile(emb, xs[t % xs.size()], ys[t / xs.size()], tile));
    });
    // Commit in tile order so the floating-point sums are reproducible.
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t t = first + k;
      const std::uint32_t x0 = xs[t % xs.size()], y0 = ys[t / xs.size()];
      for (std::uint32_t r = 0; r < tile; ++r)
        for (std::uint32_t c = 0; c < tile; ++c) {
          const std::size_t pixel = std::size_t{y0 + r} * emb.width + x0 + c;
          const double* src = preds[k].data() + (std::size_t{r} * tile + c) * c_count;
          double* dst = sum.data() + pixel * c_count;
          for (std::size_t j = 0; j < c_count; ++j) dst[j] += src[j];
          ++cover[pixel];
        }
    }
  }

  ProbabilityRaster out(emb.width, emb.height, static_cast<std::uint32_t>(c_count));
  std::vector<double> p(c_count);
  for (std::size_t pixel = 0; pixel < emb.pixels(); ++pixel) {
    for (std::size_t j = 0; j < c_count; ++j) p[j] = sum[pixel * c_count + j] / cover[pixel];
    detail::store_pixel(out, pixel, p);
  }
  return out;
}

/// Marks pixels with nodata in `mask` invalid and zeroes their vectors.
inline void apply_mask(ProbabilityRaster& probs, const LabelRaster& mask) {
  if (mask.width != probs.width || mask.height != probs.height) throw DataError("mask dimensions differ");
  for (std::size_t p = 0; p < probs.pixels(); ++p) {
    if (mask.ids[p] != kNodata) continue;
    probs.valid[p] = 0;
    for (std::uint32_t c = 0; c < probs.classes; ++c) probs.at(c, p) = 0.0f;
  }
}

/// Dispatches on family: pixel models run pixel-wise (stride is irrelevant),
/// context models run tiled with their training tile size, clamped to the
/// raster, and the given stride (0 = half the tile).
inline ProbabilityRaster predict_raster(const AnyModel& model, const EmbeddingRaster& emb, std::uint32_t stride = 0,
                                        const LabelRaster* mask = nullptr) {
  return std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ContextModel>) {
          if (emb.bands != m.n_bands)
            throw DataError("predict: raster has " + std::to_string(emb.bands) + " bands, model expects " +
                            std::to_string(m.n_bands));
          const std::uint32_t tile = std::min({m.tile, emb.width, emb.height});
          auto out = predict_raster_tiled(m, emb, tile, stride == 0 ? std::max(1u, tile / 2) : std::min(stride, tile));
          if (mask) apply_mask(out, *mask);
          return out;
        } else {
          return predict_raster_pixelwise(m, emb, mask);
        }
      },
      model);
}

/// Highest-probability class per valid pixel (ties to the lowest id);
/// invalid pixels become nodata.
inline LabelRaster argmax_map(const ProbabilityRaster& probs) {
  LabelRaster out(probs.width, probs.height, kNodata);
  for (std::size_t p = 0; p < probs.pixels(); ++p) {
    if (!probs.valid[p]) continue;
    std::uint16_t best = 0;
    for (std::uint32_t c = 1; c < probs.classes; ++c)
      if (probs.at(c, p) > probs.at(best, p)) best = static_cast<std::uint16_t>(c);
    out.ids[p] = best;
  }
  return out;
}

/// GRD1 view: f32 grid with one band per class.
inline EmbeddingRaster to_grid(const ProbabilityRaster& probs) {
  EmbeddingRaster g;
  g.width = probs.width;
  g.height = probs.height;
  g.bands = probs.classes;
  g.values = probs.probs;
  return g;
}

/// Validity sidecar: row-major pixels, bit-packed LSB first, pixel p in bit
/// (p % 8) of byte p / 8.
inline std::vector<unsigned char> encode_validity(const ProbabilityRaster& probs) {
  std::vector<unsigned char> out((probs.pixels() + 7) / 8, 0);
  for (std::size_t p = 0; p < probs.pixels(); ++p)
    if (probs.valid[p]) out[p / 8] |= static_cast<unsigned char>(1u << (p % 8));
  return out;
}

inline ProbabilityRaster from_grid(const EmbeddingRaster& g, std::span<const unsigned char> validity) {
  ProbabilityRaster out;
  out.width = g.width;
  out.height = g.height;
  out.classes = g.bands;
  out.probs = g.values;
  if (validity.size() != (out.pixels() + 7) / 8) throw DataError("validity bitmap size does not match raster");
  out.valid.resize(out.pixels());
  for (std::size_t p = 0; p < out.pixels(); ++p) out.valid[p] = (validity[p / 8] >> (p % 8)) & 1u;
  return out;
}

}  // namespace labelreach
