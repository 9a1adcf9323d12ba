#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "labelreach/error.hpp"
#include "labelreach/models/config.hpp"
#include "labelreach/models/tree.hpp"
#include "labelreach/parallel.hpp"
#include "labelreach/prep.hpp"
#include "labelreach/rng.hpp"

namespace labelreach {

/// Rows sorted by provenance, so fits keyed on row position do not depend
/// on the caller's row order. Returns `ds` unchanged when provenance is
/// missing or not unique.
inline PixelDataset canonical_order(const PixelDataset& ds) {
  if (ds.provenance.size() != ds.size()) return ds;
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::ranges::stable_sort(order, {}, [&](std::size_t i) { return ds.provenance[i]; });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (ds.provenance[order[i]] == ds.provenance[order[i - 1]]) return ds;
  PixelDataset out;
  out.n_features = ds.n_features;
  out.n_classes = ds.n_classes;
  out.features.reserve(ds.features.size());
  out.targets.reserve(ds.size());
  out.provenance.reserve(ds.size());
  for (std::size_t i : order) {
    const auto r = ds.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.targets.push_back(ds.targets[i]);
    out.provenance.push_back(ds.provenance[i]);
  }
  return out;
}

struct RandomForestModel {
  std::size_t n_classes = 0;
  std::size_t n_features = 0;
  std::uint32_t mtry = 0;
  std::uint64_t seed = 0;
  bool bootstrap = true;
  std::vector<DecisionTree> trees;

  /// Soft vote: mean of the trees' normalized leaf histograms.
  void predict_proba(std::span<const double> x, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> p(n_classes);
    for (const auto& t : trees) {
      t.predict_proba(x, p);
      for (std::size_t c = 0; c < n_classes; ++c) out[c] += p[c];
    }
    for (double& v : out) v /= static_cast<double>(trees.size());
  }
};

/// Tree i trains on a size-N bootstrap drawn with Rng(seed + i) over rows in
/// provenance order. Trees are independent, so the result does not depend on
/// the worker count.
inline RandomForestModel fit_random_forest(const PixelDataset& input, const ForestConfig& cfg) {
  if (input.size() == 0) throw DataError("forest: empty dataset");
  if (cfg.n_trees < 1) throw ConfigError("n_trees must be ≥ 1");
  const PixelDataset ds = canonical_order(input);
  RandomForestModel model;
  model.n_classes = ds.n_classes;
  model.n_features = ds.n_features;
  model.mtry = cfg.mtry == 0 ? static_cast<std::uint32_t>(std::sqrt(static_cast<double>(ds.n_features))) : cfg.mtry;
  model.seed = cfg.seed;
  model.bootstrap = cfg.bootstrap;
  model.trees.resize(cfg.n_trees);
  const std::size_t n = ds.size();
  parallel_for(cfg.n_trees, [&](std::size_t t) {
    const std::uint64_t tree_seed = cfg.seed + t;
    std::vector<detail::WeightedSample> samples;
    if (cfg.bootstrap) {
      Rng rng(tree_seed);
      std::vector<std::uint32_t> counts(n, 0);
      for (std::size_t k = 0; k < n; ++k) ++counts[rng.uniform_int(n)];
      for (std::size_t i = 0; i < n; ++i)
        if (counts[i] > 0) samples.push_back({static_cast<std::uint32_t>(i), counts[i]});
      // Feature sampling continues on a stream distinct from the bootstrap.
      model.trees[t] = detail::CartBuilder(ds, cfg, rng.next_u64()).build(std::move(samples));
    } else {
      samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) samples[i] = {static_cast<std::uint32_t>(i), 1};
      model.trees[t] = detail::CartBuilder(ds, cfg, tree_seed).build(std::move(samples));
    }
  });
  return model;
}

}  // namespace labelreach
