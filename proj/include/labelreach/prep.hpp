#pragma once

// Preprocessing: class histograms, rare-class filtering, class remapping,
// tiling, seeded tile splits, row bands and pixel extraction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "labelreach/csv.hpp"
#include "labelreach/error.hpp"
#include "labelreach/raster.hpp"
#include "labelreach/rng.hpp"

namespace labelreach {

/// Source id -> target id. A target of kNodata masks the source class.
struct RemapTable {
  std::map<std::uint16_t, std::uint16_t> pairs;
  std::map<std::uint16_t, std::string> target_names;

  std::size_t target_count() const {
    std::size_t n = 0;
    for (const auto& [src, dst] : pairs)
      if (dst != kNodata) n = std::max<std::size_t>(n, std::size_t{dst} + 1);
    return n;
  }
  bool operator==(const RemapTable&) const = default;
};

struct TileGrid {
  std::uint32_t tile = 64;
  std::uint32_t cols = 0;
  std::uint32_t rows = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  bool includes_partial = true;

  std::size_t count() const { return std::size_t{cols} * rows; }
  std::uint32_t col_of(std::size_t t) const { return static_cast<std::uint32_t>(t % cols); }
  std::uint32_t row_of(std::size_t t) const { return static_cast<std::uint32_t>(t / cols); }
  std::uint32_t x0(std::size_t t) const { return col_of(t) * tile; }
  std::uint32_t y0(std::size_t t) const { return row_of(t) * tile; }
  std::uint32_t x1(std::size_t t) const { return std::min(width, x0(t) + tile); }
  std::uint32_t y1(std::size_t t) const { return std::min(height, y0(t) + tile); }

  bool operator==(const TileGrid&) const = default;
};

enum class SplitKind : std::uint8_t { Train, Val, Test, Excluded };

inline const char* to_string(SplitKind k) {
  switch (k) {
    case SplitKind::Train: return "train";
    case SplitKind::Val: return "val";
    case SplitKind::Test: return "test";
    case SplitKind::Excluded: return "excluded";
  }
  return "excluded";
}

inline SplitKind parse_split_kind(const std::string& s) {
  if (s == "train") return SplitKind::Train;
  if (s == "val") return SplitKind::Val;
  if (s == "test") return SplitKind::Test;
  if (s == "excluded") return SplitKind::Excluded;
  throw DataError("unknown split kind '" + s + "'");
}

struct SplitAssignment {
  TileGrid grid;
  std::vector<SplitKind> kinds;  // one per tile, row-major
  std::uint64_t seed = 0;
  double train_fraction = 0.9;
  double val_fraction = 0.1;

  std::size_t count(SplitKind k) const { return static_cast<std::size_t>(std::ranges::count(kinds, k)); }
  bool operator==(const SplitAssignment&) const = default;
};

struct PixelProvenance {
  std::uint32_t tile = 0;
  std::uint32_t offset = 0;  // local_row * tile + local_col

  auto operator<=>(const PixelProvenance&) const = default;
};

struct PixelDataset {
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::vector<double> features;  // rows x n_features, row-major
  std::vector<std::uint16_t> targets;
  std::vector<PixelProvenance> provenance;

  std::size_t size() const { return targets.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * n_features, n_features);
  }
};

struct BandSpec {
  std::vector<std::uint32_t> edges;
};

inline constexpr int kExcludedBand = -1;

/// Class counts over non-nodata pixels, fractions normalized by that total.
inline ClassTable histogram_classes(const LabelRaster& labels) {
  std::map<std::uint16_t, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (auto id : labels.ids) {
    if (id == kNodata) continue;
    ++counts[id];
    ++total;
  }
  if (total == 0) throw DataError("histogram: raster has no labeled pixels (empty class table)");
  ClassTable t;
  for (const auto& [id, n] : counts)
    t.entries.push_back({id, "class_" + std::to_string(id), n, static_cast<double>(n) / static_cast<double>(total)});
  return t;
}

/// Copies names from `named` onto entries of `table` with matching ids.
inline ClassTable with_names(ClassTable table, const ClassTable& named) {
  for (auto& e : table.entries)
    for (const auto& src : named.entries)
      if (src.class_id == e.class_id) e.name = src.name;
  return table;
}

/// Substitutes ids through the remap; nodata passes through.
inline LabelRaster remap_classes(const LabelRaster& labels, const RemapTable& remap) {
  LabelRaster out = labels;
  for (auto& id : out.ids) {
    if (id == kNodata) continue;
    auto it = remap.pairs.find(id);
    if (it == remap.pairs.end()) throw DataError("remap: unmapped class id " + std::to_string(id));
    id = it->second;
  }
  return out;
}

struct FilterResult {
  LabelRaster labels;
  ClassTable table;
  RemapTable remap;
  std::uint64_t masked_pixels = 0;
};

/// Masks classes whose fraction is below `threshold` and re-indexes the
/// survivors densely in ascending original-id order.
inline FilterResult filter_rare_classes(const LabelRaster& labels, const ClassTable& table, double threshold) {
  if (!(threshold >= 0.0 && threshold < 1.0)) throw ConfigError("filter threshold must lie in [0, 1)");
  FilterResult r;
  std::uint16_t next = 0;
  for (const auto& e : table.entries) {
    if (e.fraction < threshold) {
      r.remap.pairs[e.class_id] = kNodata;
    } else {
      r.remap.pairs[e.class_id] = next;
      r.remap.target_names[next] = e.name;
      ++next;
    }
  }
  if (next == 0) throw DataError("filter: no classes survive threshold " + csv::format_double(threshold, 6));
  r.labels = remap_classes(labels, r.remap);
  for (std::size_t i = 0; i < labels.ids.size(); ++i)
    if (labels.ids[i] != kNodata && r.labels.ids[i] == kNodata) ++r.masked_pixels;
  r.table = histogram_classes(r.labels);
  for (auto& e : r.table.entries) e.name = r.remap.target_names.at(e.class_id);
  return r;
}

inline constexpr std::string_view kRemapHeader = "src_id,dst_id,dst_name";

inline std::string remap_csv(const RemapTable& remap) {
  std::string out(kRemapHeader);
  out += '\n';
  for (const auto& [src, dst] : remap.pairs) {
    std::string name = "nodata";
    if (dst != kNodata) {
      auto it = remap.target_names.find(dst);
      name = it == remap.target_names.end() ? "class_" + std::to_string(dst) : it->second;
    }
    out += std::to_string(src) + ',' + std::to_string(dst) + ',' + csv::quote(name) + '\n';
  }
  return out;
}

inline RemapTable read_remap(const std::string& path) {
  RemapTable r;
  for (const auto& row : csv::read(path, kRemapHeader)) {
    if (row.size() != 3) throw DataError(path + ": remap rows need 3 fields");
    const auto src = static_cast<std::uint16_t>(std::stoul(row[0]));
    const auto dst = static_cast<std::uint16_t>(std::stoul(row[1]));
    if (!r.pairs.emplace(src, dst).second) throw DataError(path + ": duplicate source id " + row[0]);
    if (dst != kNodata) r.target_names[dst] = row[2];
  }
  const std::size_t n = r.target_count();
  for (std::size_t k = 0; k < n; ++k)
    if (!r.target_names.contains(static_cast<std::uint16_t>(k)))
      throw DataError(path + ": target ids are not dense (missing " + std::to_string(k) + ")");
  return r;
}

/// Composes a then b: ids go through a, then surviving ids through b.
inline RemapTable compose(const RemapTable& a, const RemapTable& b) {
  RemapTable out;
  for (const auto& [src, mid] : a.pairs) {
    if (mid == kNodata) {
      out.pairs[src] = kNodata;
      continue;
    }
    auto it = b.pairs.find(mid);
    if (it == b.pairs.end()) throw DataError("remap: unmapped class id " + std::to_string(mid));
    out.pairs[src] = it->second;
  }
  out.target_names = b.target_names;
  return out;
}

/// Renumbers the targets in use to 0..k-1, ascending, keeping their names.
inline RemapTable densify(const RemapTable& remap) {
  std::map<std::uint16_t, std::uint16_t> renumber;
  for (const auto& [src, dst] : remap.pairs)
    if (dst != kNodata) renumber.emplace(dst, 0);
  std::uint16_t next = 0;
  for (auto& [old_id, new_id] : renumber) new_id = next++;
  RemapTable out;
  for (const auto& [src, dst] : remap.pairs) out.pairs[src] = dst == kNodata ? kNodata : renumber.at(dst);
  for (const auto& [old_id, new_id] : renumber) {
    auto it = remap.target_names.find(old_id);
    out.target_names[new_id] = it == remap.target_names.end() ? "class_" + std::to_string(old_id) : it->second;
  }
  return out;
}

/// Follows the rare-class filter with a user remap keyed by original ids.
/// Every surviving class must be listed; the result maps original ids to
/// dense final ids.
inline RemapTable chain_user_remap(const RemapTable& filtered, const RemapTable& user) {
  RemapTable on_dense;
  for (const auto& [src, mid] : filtered.pairs) {
    if (mid == kNodata) continue;
    auto it = user.pairs.find(src);
    if (it == user.pairs.end()) throw DataError("remap: class " + std::to_string(src) + " is not listed");
    on_dense.pairs[mid] = it->second;
  }
  on_dense.target_names = user.target_names;
  return densify(compose(filtered, on_dense));
}

/// Partial edge tiles are kept (ceil division).
inline TileGrid make_tile_grid(std::uint32_t width, std::uint32_t height, std::uint32_t tile) {
  if (tile < 1) throw ConfigError("tile size must be ≥ 1");
  if (width == 0 || height == 0) throw DataError("cannot tile a raster with a zero dimension");
  TileGrid g;
  g.tile = tile;
  g.width = width;
  g.height = height;
  g.cols = (width + tile - 1) / tile;
  g.rows = (height + tile - 1) / tile;
  g.includes_partial = true;
  return g;
}

using TilePredicate = std::function<bool(std::size_t)>;

/// Seeded Fisher-Yates over eligible tile indices (row-major), then the first
/// floor(train*n) go to Train and the next floor(val*n) to Val. When the two
/// fractions sum to 1 the remainder joins Val, otherwise it becomes Test.
inline SplitAssignment assign_splits(const TileGrid& grid, std::pair<double, double> fractions, std::uint64_t seed,
                                     const TilePredicate& eligible = {}) {
  const auto [ft, fv] = fractions;
  if (!(ft >= 0.0 && fv >= 0.0 && ft + fv <= 1.0 + 1e-12))
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  SplitAssignment s;
  s.grid = grid;
  s.seed = seed;
  s.train_fraction = ft;
  s.val_fraction = fv;
  s.kinds.assign(grid.count(), SplitKind::Excluded);

  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < grid.count(); ++t)
    if (!eligible || eligible(t)) idx.push_back(t);
  if (idx.empty()) throw DataError("split: no eligible tiles");

  Rng rng(seed);
  for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_int(i + 1)]);

  const std::size_t n = idx.size();
  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  const auto floor_count = [n](double f) {
    return std::min(n, static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)));
  };
  const std::size_t n_train = floor_count(ft);
  const bool two_way = std::abs(ft + fv - 1.0) <= 1e-12;
  const std::size_t n_val = two_way ? n - n_train : std::min(n - n_train, floor_count(fv));
  for (std::size_t i = 0; i < n; ++i) {
    SplitKind k = SplitKind::Test;
    if (i < n_train)
      k = SplitKind::Train;
    else if (i < n_train + n_val)
      k = SplitKind::Val;
    s.kinds[idx[i]] = k;
  }
  return s;
}

/// Tiles holding at least one labeled pixel.
inline TilePredicate has_labels(const TileGrid& grid, const LabelRaster& labels) {
  return [&grid, &labels](std::size_t t) {
    for (std::uint32_t y = grid.y0(t); y < grid.y1(t); ++y)
      for (std::uint32_t x = grid.x0(t); x < grid.x1(t); ++x)
        if (labels.at(y, x) != kNodata) return true;
    return false;
  };
}

/// Tiles lying entirely inside rows [row_begin, row_end).
inline TilePredicate within_rows(const TileGrid& grid, std::uint32_t row_begin, std::uint32_t row_end) {
  return [&grid, row_begin, row_end](std::size_t t) { return grid.y0(t) >= row_begin && grid.y1(t) <= row_end; };
}

inline constexpr std::string_view kSplitHeader = "tile_col,tile_row,kind";

inline std::string split_csv(const SplitAssignment& s) {
  std::string out(kSplitHeader);
  out += '\n';
  for (std::size_t t = 0; t < s.kinds.size(); ++t)
    out += std::to_string(s.grid.col_of(t)) + ',' + std::to_string(s.grid.row_of(t)) + ',' + to_string(s.kinds[t]) +
           '\n';
  return out;
}

/// Reads split_csv output back onto `grid`; every tile must appear once.
inline SplitAssignment read_splits(const std::string& path, const TileGrid& grid) {
  SplitAssignment s;
  s.grid = grid;
  s.kinds.assign(grid.count(), SplitKind::Excluded);
  std::vector<bool> seen(grid.count(), false);
  for (const auto& row : csv::read(path, kSplitHeader)) {
    if (row.size() != 3) throw DataError(path + ": split rows need 3 fields");
    const auto col = std::stoul(row[0]), r = std::stoul(row[1]);
    if (col >= grid.cols || r >= grid.rows) throw DataError(path + ": tile (" + row[0] + "," + row[1] + ") outside grid");
    const std::size_t t = r * grid.cols + col;
    if (seen[t]) throw DataError(path + ": tile listed twice");
    seen[t] = true;
    s.kinds[t] = parse_split_kind(row[2]);
  }
  if (std::ranges::count(seen, false) > 0) throw DataError(path + ": split table does not cover the grid");
  return s;
}

/// Largest class id present plus one (0 when the raster is all nodata).
inline std::size_t class_count(const LabelRaster& labels) {
  std::size_t c = 0;
  for (auto id : labels.ids)
    if (id != kNodata) c = std::max<std::size_t>(c, std::size_t{id} + 1);
  return c;
}

/// Non-nodata pixels of tiles of kind `which`, tile-major then row-major
/// within the tile. n_classes defaults to class_count(labels).
inline PixelDataset extract_pixels(const EmbeddingRaster& emb, const LabelRaster& labels,
                                   const SplitAssignment& split, SplitKind which,
                                   std::optional<std::size_t> n_classes = std::nullopt) {
  validate_pair(emb, labels);
  const TileGrid& g = split.grid;
  if (g.width != labels.width || g.height != labels.height)
    throw DataError("extract: tile grid does not match raster dimensions");
  PixelDataset ds;
  ds.n_features = emb.bands;
  ds.n_classes = n_classes.value_or(class_count(labels));
  for (std::size_t t = 0; t < g.count(); ++t) {
    if (split.kinds[t] != which) continue;
    for (std::uint32_t y = g.y0(t); y < g.y1(t); ++y) {
      for (std::uint32_t x = g.x0(t); x < g.x1(t); ++x) {
        const auto id = labels.at(y, x);
        if (id == kNodata) continue;
        if (id >= ds.n_classes) throw DataError("extract: class id " + std::to_string(id) + " ≥ class count");
        for (std::uint32_t j = 0; j < emb.bands; ++j) ds.features.push_back(emb.at(j, y, x));
        ds.targets.push_back(id);
        ds.provenance.push_back({static_cast<std::uint32_t>(t), (y - g.y0(t)) * g.tile + (x - g.x0(t))});
      }
    }
  }
  if (ds.targets.empty()) throw DataError(std::string("extract: no labeled pixels in ") + to_string(which) + " tiles");
  return ds;
}

inline void validate(const BandSpec& spec, std::uint32_t height) {
  if (spec.edges.size() < 2) throw ConfigError("band spec needs at least two edges");
  for (std::size_t i = 1; i < spec.edges.size(); ++i)
    if (spec.edges[i] <= spec.edges[i - 1]) throw ConfigError("band edges must be strictly ascending");
  if (spec.edges.back() > height) throw ConfigError("band edges exceed raster height");
}

/// Band index per row; rows outside every band get kExcludedBand.
inline std::vector<int> assign_bands(std::uint32_t height, const BandSpec& spec) {
  validate(spec, height);
  std::vector<int> band(height, kExcludedBand);
  for (std::size_t i = 0; i + 1 < spec.edges.size(); ++i)
    for (std::uint32_t r = spec.edges[i]; r < spec.edges[i + 1]; ++r) band[r] = static_cast<int>(i);
  return band;
}

}  // namespace labelreach
