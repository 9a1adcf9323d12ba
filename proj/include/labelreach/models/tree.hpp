#pragma once

// CART classification trees with Gini impurity.

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "labelreach/error.hpp"
#include "labelreach/models/config.hpp"
#include "labelreach/prep.hpp"
#include "labelreach/rng.hpp"

namespace labelreach {

/// Flat node array; node 0 is the root. Internal nodes route x[feature] <=
/// threshold to `left`. Leaves (feature == -1) carry class-count histograms.
struct DecisionTree {
  struct Node {
    std::int32_t feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::vector<double> histogram;

    bool is_leaf() const { return feature < 0; }
  };

  std::size_t n_classes = 0;
  std::size_t n_features = 0;
  std::vector<Node> nodes;

  const Node& leaf_for(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const Node& n = nodes[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i];
  }

  void predict_proba(std::span<const double> x, std::span<double> out) const {
    const auto& h = leaf_for(x).histogram;
    double total = 0.0;
    for (double v : h) total += v;
    for (std::size_t c = 0; c < n_classes; ++c) out[c] = h[c] / total;
  }

  std::size_t depth() const {
    std::vector<std::size_t> d(nodes.size(), 0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      best = std::max(best, d[i]);
      if (!nodes[i].is_leaf()) {
        d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
        d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
      }
    }
    return best;
  }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::ranges::count_if(nodes, [](const Node& n) { return n.is_leaf(); }));
  }
};

namespace detail {

struct WeightedSample {
  std::uint32_t row;
  std::uint32_t weight;
};

/// Grows one tree over weighted rows of `ds`. Rows with weight 0 are absent.
class CartBuilder {
 public:
  CartBuilder(const PixelDataset& ds, const ForestConfig& cfg, std::uint64_t seed)
      : ds_(ds), cfg_(cfg), rng_(seed) {
    const std::size_t d = ds.n_features;
    mtry_ = cfg.mtry == 0 ? static_cast<std::size_t>(std::sqrt(static_cast<double>(d))) : cfg.mtry;
    mtry_ = std::clamp<std::size_t>(mtry_, 1, d);
  }

  DecisionTree build(std::vector<WeightedSample> samples) {
    tree_ = DecisionTree{};
    tree_.n_classes = ds_.n_classes;
    tree_.n_features = ds_.n_features;
    tree_.nodes.emplace_back();
    struct Pending {
      std::size_t node;
      std::vector<WeightedSample> samples;
      std::size_t depth;
    };
    std::vector<Pending> stack;
    stack.push_back({0, std::move(samples), 0});
    while (!stack.empty()) {
      Pending p = std::move(stack.back());
      stack.pop_back();
      auto split = find_split(p.samples, p.depth);
      if (!split) {
        tree_.nodes[p.node].histogram = histogram(p.samples);
        continue;
      }
      std::vector<WeightedSample> left, right;
      for (const auto& s : p.samples)
        (ds_.row(s.row)[split->feature] <= split->threshold ? left : right).push_back(s);
      const auto li = static_cast<std::int32_t>(tree_.nodes.size());
      tree_.nodes.emplace_back();
      tree_.nodes.emplace_back();
      auto& node = tree_.nodes[p.node];
      node.feature = static_cast<std::int32_t>(split->feature);
      node.threshold = split->threshold;
      node.left = li;
      node.right = li + 1;
      // Right first on the stack so the left subtree is expanded first.
      stack.push_back({static_cast<std::size_t>(li + 1), std::move(right), p.depth + 1});
      stack.push_back({static_cast<std::size_t>(li), std::move(left), p.depth + 1});
    }
    return std::move(tree_);
  }

 private:
  struct Split {
    std::size_t feature;
    double threshold;
  };

  std::vector<double> histogram(const std::vector<WeightedSample>& samples) const {
    std::vector<double> h(ds_.n_classes, 0.0);
    for (const auto& s : samples) h[ds_.targets[s.row]] += s.weight;
    return h;
  }

  std::optional<Split> find_split(const std::vector<WeightedSample>& samples, std::size_t depth) {
    const std::size_t c_count = ds_.n_classes;
    const auto parent = histogram(samples);
    double total = 0.0;
    std::size_t nonzero = 0;
    for (double v : parent) {
      total += v;
      if (v > 0) ++nonzero;
    }
    if (nonzero <= 1) return std::nullopt;
    if (cfg_.max_depth != 0 && depth >= cfg_.max_depth) return std::nullopt;
    if (total < 2.0 * cfg_.min_samples_leaf) return std::nullopt;

    // Visit features in random order; constant features do not count
    // toward mtry.
    std::vector<std::size_t> order(ds_.n_features);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng_.uniform_int(i + 1)]);

    std::vector<std::pair<double, std::uint32_t>> sorted(samples.size());
    std::vector<double> left(c_count);
    std::optional<Split> best;
    double best_score = -1.0;
    std::size_t evaluated = 0;
    for (std::size_t f : order) {
      if (evaluated >= mtry_) break;
      for (std::size_t i = 0; i < samples.size(); ++i) sorted[i] = {ds_.row(samples[i].row)[f], static_cast<std::uint32_t>(i)};
      std::sort(sorted.begin(), sorted.end());
      if (sorted.front().first == sorted.back().first) continue;
      ++evaluated;

      // Maximizing sum_c nL_c^2 / nL + sum_c nR_c^2 / nR is equivalent to
      // maximizing the Gini decrease.
      std::fill(left.begin(), left.end(), 0.0);
      double wl = 0.0, sq_l = 0.0;
      double sq_total = 0.0;
      for (double v : parent) sq_total += v * v;
      double sq_r = sq_total;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        const auto& s = samples[sorted[i].second];
        const std::size_t y = ds_.targets[s.row];
        const double w = s.weight;
        const double right_y = parent[y] - left[y];
        sq_l += 2.0 * w * left[y] + w * w;
        sq_r += -2.0 * w * right_y + w * w;
        left[y] += w;
        wl += w;
        if (sorted[i].first == sorted[i + 1].first) continue;
        const double wr = total - wl;
        if (wl < cfg_.min_samples_leaf || wr < cfg_.min_samples_leaf) continue;
        const double score = sq_l / wl + sq_r / wr;
        const double threshold = 0.5 * (sorted[i].first + sorted[i + 1].first);
        if (score > best_score || (score == best_score && best && (f < best->feature ||
                                                                    (f == best->feature && threshold < best->threshold)))) {
          best_score = score;
          best = Split{f, threshold};
        }
      }
    }
    return best;
  }

  const PixelDataset& ds_;
  ForestConfig cfg_;
  Rng rng_;
  std::size_t mtry_ = 1;
  DecisionTree tree_;
};

}  // namespace detail

/// Single CART over every row of `ds`, unweighted.
inline DecisionTree fit_tree(const PixelDataset& ds, const ForestConfig& cfg, std::uint64_t seed) {
  if (ds.size() == 0) throw DataError("tree: empty dataset");
  std::vector<detail::WeightedSample> samples(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) samples[i] = {static_cast<std::uint32_t>(i), 1};
  return detail::CartBuilder(ds, cfg, seed).build(std::move(samples));
}

}  // namespace labelreach
