#pragma once

// Tile-context classifier: logistic regression over each pixel's bands plus
// the mean of every band over its k x k neighbourhood inside the tile.
// Trained tile by tile with augmentation and validation early stopping.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "labelreach/error.hpp"
#include "labelreach/models/config.hpp"
#include "labelreach/models/logreg.hpp"
#include "labelreach/models/tile.hpp"
#include "labelreach/prep.hpp"
#include "labelreach/rng.hpp"

namespace labelreach {

/// Per-pixel features [bands, window means] for every pixel of the tile,
/// pixel-major (pixels x 2*bands). Means cover valid in-tile neighbours
/// only; invalid pixels get zero rows.
inline std::vector<double> context_features(const EmbTile& tile, std::uint32_t window) {
  const std::uint32_t w = tile.width, h = tile.height, d = tile.bands;
  const auto r = static_cast<std::int64_t>(window / 2);
  std::vector<double> out(tile.pixels() * 2 * d, 0.0);
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      const std::size_t p = std::size_t{y} * w + x;
      if (!tile.valid[p]) continue;
      double* row = out.data() + p * 2 * d;
      for (std::uint32_t b = 0; b < d; ++b) row[b] = tile.at(b, y, x);
      std::size_t count = 0;
      for (std::int64_t dy = -r; dy <= r; ++dy) {
        const std::int64_t yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (std::int64_t dx = -r; dx <= r; ++dx) {
          const std::int64_t xx = x + dx;
          if (xx < 0 || xx >= w || !tile.valid[std::size_t(yy) * w + std::size_t(xx)]) continue;
          ++count;
          for (std::uint32_t b = 0; b < d; ++b)
            row[d + b] += tile.at(b, static_cast<std::uint32_t>(yy), static_cast<std::uint32_t>(xx));
        }
      }
      for (std::uint32_t b = 0; b < d; ++b) row[d + b] /= static_cast<double>(count);
    }
  }
  return out;
}

struct ContextModel {
  LogRegModel core;  // over 2 * n_bands features
  std::uint32_t window = 3;
  std::uint32_t n_bands = 0;
  std::uint32_t tile = 64;
  std::vector<double> training_history;
  std::vector<double> validation_history;
  std::uint32_t best_epoch = 0;

  std::size_t n_classes() const { return core.n_classes; }

  /// Probabilities for every pixel, pixel-major (pixels x classes). Invalid
  /// pixels get zero vectors.
  std::vector<double> predict_tile(const EmbTile& t) const {
    if (t.bands != n_bands)
      throw DataError("context: tile has " + std::to_string(t.bands) + " bands, model expects " +
                      std::to_string(n_bands));
    const auto feats = context_features(t, window);
    const std::size_t c_count = core.n_classes, f = 2 * std::size_t{n_bands};
    std::vector<double> out(t.pixels() * c_count, 0.0);
    for (std::size_t p = 0; p < t.pixels(); ++p) {
      if (!t.valid[p]) continue;
      core.predict_proba(std::span<const double>(feats).subspan(p * f, f),
                         std::span<double>(out).subspan(p * c_count, c_count));
    }
    return out;
  }
};

namespace detail {

/// Appends labeled valid pixels of a tile to `ds`, row-major.
inline void append_tile_pixels(PixelDataset& ds, const EmbTile& emb, const LabelTile& labels, std::uint32_t window,
                               std::uint32_t tile_index) {
  const auto feats = context_features(emb, window);
  const std::size_t f = 2 * std::size_t{emb.bands};
  for (std::size_t p = 0; p < emb.pixels(); ++p) {
    const auto id = labels.ids[p];
    if (!emb.valid[p] || id == kNodata) continue;
    if (id >= ds.n_classes) throw DataError("context: class id " + std::to_string(id) + " ≥ class count");
    ds.features.insert(ds.features.end(), feats.begin() + static_cast<std::ptrdiff_t>(p * f),
                       feats.begin() + static_cast<std::ptrdiff_t>((p + 1) * f));
    ds.targets.push_back(id);
    ds.provenance.push_back({tile_index, static_cast<std::uint32_t>(p)});
  }
}

inline double mean_cross_entropy(const LogRegModel& m, const PixelDataset& ds) {
  std::vector<double> z(m.n_classes);
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    m.logits(ds.row(i), z);
    total += log_sum_exp(z) - z[ds.targets[i]];
  }
  return total / static_cast<double>(ds.size());
}

}  // namespace detail

/// Context features of every labeled pixel in tiles of kind `which`, in the
/// same order extract_pixels uses.
inline PixelDataset context_dataset(const EmbeddingRaster& emb, const LabelRaster& labels,
                                    const SplitAssignment& split, SplitKind which, std::uint32_t window,
                                    std::size_t n_classes) {
  PixelDataset ds;
  ds.n_features = 2 * std::size_t{emb.bands};
  ds.n_classes = n_classes;
  const TileGrid& g = split.grid;
  for (std::size_t t = 0; t < g.count(); ++t) {
    if (split.kinds[t] != which) continue;
    detail::append_tile_pixels(ds, cut_tile(emb, g.x0(t), g.y0(t), g.tile),
                               cut_label_tile(labels, g.x0(t), g.y0(t), g.tile), window,
                               static_cast<std::uint32_t>(t));
  }
  return ds;
}

/// One full-batch descent step per epoch over all training tiles (each
/// re-augmented when cfg.augment). Stops after cfg.epochs epochs, or once the
/// validation cross-entropy has not improved for cfg.early_stop_patience
/// epochs; the best-validation parameters are kept. Without validation tiles
/// the last iterate is kept.
inline ContextModel fit_context(const EmbeddingRaster& emb, const LabelRaster& labels, const SplitAssignment& split,
                                const ContextConfig& cfg, std::optional<std::size_t> n_classes = std::nullopt) {
  validate_pair(emb, labels);
  if (cfg.window < 1 || cfg.window % 2 == 0) throw ConfigError("context window must be odd and ≥ 1");
  if (split.count(SplitKind::Train) == 0) throw DataError("context: no train tiles");
  const std::size_t c_count = n_classes.value_or(class_count(labels));
  const TileGrid& g = split.grid;

  struct TrainTile {
    std::uint32_t index;
    EmbTile emb;
    LabelTile labels;
  };
  std::vector<TrainTile> tiles;
  for (std::size_t t = 0; t < g.count(); ++t)
    if (split.kinds[t] == SplitKind::Train)
      tiles.push_back({static_cast<std::uint32_t>(t), cut_tile(emb, g.x0(t), g.y0(t), g.tile),
                       cut_label_tile(labels, g.x0(t), g.y0(t), g.tile)});

  Rng rng(cfg.seed);
  auto make_batch = [&] {
    PixelDataset batch;
    batch.n_features = 2 * std::size_t{emb.bands};
    batch.n_classes = c_count;
    for (const auto& t : tiles) {
      if (cfg.augment) {
        EmbTile e = t.emb;
        LabelTile l = t.labels;
        augment_tile(e, l, rng);
        detail::append_tile_pixels(batch, e, l, cfg.window, t.index);
      } else {
        detail::append_tile_pixels(batch, t.emb, t.labels, cfg.window, t.index);
      }
    }
    if (batch.size() == 0) throw DataError("context: train tiles hold no labeled pixels");
    return batch;
  };

  const PixelDataset val = context_dataset(emb, labels, split, SplitKind::Val, cfg.window, c_count);
  PixelDataset batch = make_batch();

  ContextModel model;
  model.window = cfg.window;
  model.n_bands = emb.bands;
  model.tile = g.tile;
  HalvingDescent gd(LogRegModel(c_count, batch.n_features), cfg.l2, initial_step(batch, cfg.l2));
  gd.evaluate(batch);

  LogRegModel best = gd.model();
  double best_val = val.size() > 0 ? detail::mean_cross_entropy(best, val) : 0.0;
  std::uint32_t since_best = 0;
  for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.augment && epoch > 1) {
      batch = make_batch();
      gd.evaluate(batch);
    }
    if (!gd.step(batch)) break;
    model.training_history.push_back(gd.loss());
    if (val.size() == 0) {
      best = gd.model();
      model.best_epoch = epoch;
      continue;
    }
    const double v = detail::mean_cross_entropy(gd.model(), val);
    model.validation_history.push_back(v);
    if (v < best_val) {
      best_val = v;
      best = gd.model();
      model.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  model.core = std::move(best);
  model.core.training_history = model.training_history;
  return model;
}

}  // namespace labelreach
