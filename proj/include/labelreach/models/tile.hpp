#pragma once

// Materialized tiles and the flip/rotate/transpose augmentation.

#include <cstdint>
#include <string>
#include <vector>

#include "labelreach/error.hpp"
#include "labelreach/prep.hpp"
#include "labelreach/raster.hpp"
#include "labelreach/rng.hpp"

namespace labelreach {

/// Embedding patch, band-planar. `valid` marks pixels that came from inside
/// the source raster; padding pixels are zero and invalid.
struct EmbTile {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t bands = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> valid;

  std::size_t pixels() const { return std::size_t{width} * height; }
  float at(std::uint32_t band, std::uint32_t row, std::uint32_t col) const {
    return values[band * pixels() + std::size_t{row} * width + col];
  }
  bool operator==(const EmbTile&) const = default;
};

struct LabelTile {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint16_t> ids;

  std::uint16_t at(std::uint32_t row, std::uint32_t col) const { return ids[std::size_t{row} * width + col]; }
  bool operator==(const LabelTile&) const = default;
};

/// Copies the size x size window at (x0, y0); pixels past the raster edge
/// become invalid padding.
inline EmbTile cut_tile(const EmbeddingRaster& emb, std::uint32_t x0, std::uint32_t y0, std::uint32_t size) {
  EmbTile t;
  t.width = t.height = size;
  t.bands = emb.bands;
  t.values.assign(std::size_t{size} * size * emb.bands, 0.0f);
  t.valid.assign(std::size_t{size} * size, 0);
  for (std::uint32_t r = 0; r < size && y0 + r < emb.height; ++r)
    for (std::uint32_t c = 0; c < size && x0 + c < emb.width; ++c) {
      t.valid[std::size_t{r} * size + c] = 1;
      for (std::uint32_t b = 0; b < emb.bands; ++b)
        t.values[b * t.pixels() + std::size_t{r} * size + c] = emb.at(b, y0 + r, x0 + c);
    }
  return t;
}

inline LabelTile cut_label_tile(const LabelRaster& labels, std::uint32_t x0, std::uint32_t y0, std::uint32_t size) {
  LabelTile t;
  t.width = t.height = size;
  t.ids.assign(std::size_t{size} * size, kNodata);
  for (std::uint32_t r = 0; r < size && y0 + r < labels.height; ++r)
    for (std::uint32_t c = 0; c < size && x0 + c < labels.width; ++c)
      t.ids[std::size_t{r} * size + c] = labels.at(y0 + r, x0 + c);
  return t;
}

struct Augmentation {
  bool hflip = false;
  bool vflip = false;
  bool rot90 = false;
  bool transpose = false;

  bool changes_shape() const { return rot90 || transpose; }
};

/// Four independent fair coins, drawn in the order they are applied.
inline Augmentation draw_augmentation(Rng& rng) {
  Augmentation a;
  a.hflip = rng.coin();
  a.vflip = rng.coin();
  a.rot90 = rng.coin();
  a.transpose = rng.coin();
  return a;
}

namespace detail {

/// Rebuilds a w x h plane-stack by sampling src(row, col) = pick(r, c).
template <typename T, typename Pick>
std::vector<T> remap_planes(const std::vector<T>& src, std::size_t planes, std::uint32_t w, std::uint32_t h,
                            Pick pick) {
  std::vector<T> out(src.size());
  const std::size_t n = std::size_t{w} * h;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::uint32_t r = 0; r < h; ++r)
      for (std::uint32_t c = 0; c < w; ++c) {
        const auto [sr, sc] = pick(r, c);
        out[p * n + std::size_t{r} * w + c] = src[p * n + std::size_t{sr} * w + sc];
      }
  return out;
}

template <typename Fn>
void for_each_step(const Augmentation& a, Fn fn) {
  if (a.hflip) fn(0);
  if (a.vflip) fn(1);
  if (a.rot90) fn(2);
  if (a.transpose) fn(3);
}

}  // namespace detail

/// Applies the selected steps in the order h-flip, v-flip, rot90 (clockwise),
/// transpose to both tiles.
inline void apply_augmentation(const Augmentation& a, EmbTile& emb, LabelTile& labels) {
  if (emb.width != labels.width || emb.height != labels.height)
    throw DataError("augment: embedding and label tiles differ in shape");
  if (a.changes_shape() && emb.width != emb.height)
    throw DataError("augment: rotation/transpose needs a square tile, got " + std::to_string(emb.width) + "x" +
                    std::to_string(emb.height));
  const std::uint32_t w = emb.width, h = emb.height;
  detail::for_each_step(a, [&](int step) {
    auto pick = [w, h, step](std::uint32_t r, std::uint32_t c) -> std::pair<std::uint32_t, std::uint32_t> {
      switch (step) {
        case 0: return {r, w - 1 - c};
        case 1: return {h - 1 - r, c};
        case 2: return {h - 1 - c, r};
        default: return {c, r};
      }
    };
    emb.values = detail::remap_planes(emb.values, emb.bands, w, h, pick);
    emb.valid = detail::remap_planes(emb.valid, 1, w, h, pick);
    labels.ids = detail::remap_planes(labels.ids, 1, w, h, pick);
  });
}

inline Augmentation augment_tile(EmbTile& emb, LabelTile& labels, Rng& rng) {
  const Augmentation a = draw_augmentation(rng);
  apply_augmentation(a, emb, labels);
  return a;
}

}  // namespace labelreach
