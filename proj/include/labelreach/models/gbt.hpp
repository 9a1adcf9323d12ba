#pragma once

// Multiclass gradient-boosted trees over quantile-binned features.
//
// Each round fits one regression tree per class to the softmax gradient
// g = p - 1[y = c] and hessian h = p(1 - p). Trees grow leaf-wise by best
// gain G_L^2/(H_L+l2) + G_R^2/(H_R+l2) - G^2/(H+l2) and leaves output
// -G/(H+l2).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "labelreach/error.hpp"
#include "labelreach/models/config.hpp"
#include "labelreach/models/forest.hpp"
#include "labelreach/models/softmax.hpp"
#include "labelreach/parallel.hpp"
#include "labelreach/prep.hpp"

namespace labelreach {

/// Per-feature ascending bin edges. bin(x) = number of edges strictly below
/// x, so "bin <= b" is equivalent to "x <= edges[b]".
struct FeatureBins {
  std::vector<std::vector<double>> edges;

  std::uint8_t bin(std::size_t feature, double x) const {
    const auto& e = edges[feature];
    return static_cast<std::uint8_t>(std::lower_bound(e.begin(), e.end(), x) - e.begin());
  }
  std::size_t bin_count(std::size_t feature) const { return edges[feature].size() + 1; }
};

/// At most `max_bins` bins per feature. With few distinct values the edges
/// are midpoints between them; otherwise they sit at sample quantiles.
inline FeatureBins make_bins(const PixelDataset& ds, std::uint32_t max_bins) {
  FeatureBins bins;
  bins.edges.resize(ds.n_features);
  const std::size_t n = ds.size();
  std::vector<double> col(n);
  for (std::size_t f = 0; f < ds.n_features; ++f) {
    for (std::size_t i = 0; i < n; ++i) col[i] = ds.features[i * ds.n_features + f];
    std::sort(col.begin(), col.end());
    std::vector<double> distinct;
    for (double v : col)
      if (distinct.empty() || v != distinct.back()) distinct.push_back(v);
    auto& e = bins.edges[f];
    if (distinct.size() <= max_bins) {
      for (std::size_t k = 0; k + 1 < distinct.size(); ++k) e.push_back(0.5 * (distinct[k] + distinct[k + 1]));
      continue;
    }
    for (std::size_t k = 1; k < max_bins; ++k) {
      const double below = col[k * n / max_bins - 1];
      const auto next = std::upper_bound(distinct.begin(), distinct.end(), below);
      if (next == distinct.end()) break;
      const double edge = 0.5 * (below + *next);
      if (e.empty() || edge > e.back()) e.push_back(edge);
    }
  }
  return bins;
}

struct RegressionTree {
  struct Node {
    std::int32_t feature = -1;
    std::uint8_t bin = 0;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
  };
  std::vector<Node> nodes;

  double predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const Node& n = nodes[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].value;
  }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::ranges::count_if(nodes, [](const Node& n) { return n.is_leaf(); }));
  }
};

struct GbtModel {
  std::size_t n_classes = 0;
  std::size_t n_features = 0;
  double learning_rate = 0.1;
  std::vector<double> base_score;
  FeatureBins bins;
  std::vector<std::vector<RegressionTree>> rounds;  // rounds x n_classes
  std::vector<double> training_history;             // loss before round 1, then after each round

  void raw_scores(std::span<const double> x, std::span<double> out) const {
    for (std::size_t c = 0; c < n_classes; ++c) {
      double s = 0.0;
      for (const auto& round : rounds) s += round[c].predict(x);
      out[c] = base_score[c] + learning_rate * s;
    }
  }

  void predict_proba(std::span<const double> x, std::span<double> out) const {
    raw_scores(x, out);
    softmax_inplace(out);
  }
};

namespace detail {

class HistTreeBuilder {
 public:
  HistTreeBuilder(const std::vector<std::uint8_t>& binned, std::size_t n, const FeatureBins& bins,
                  const GbtConfig& cfg)
      : binned_(binned), n_(n), bins_(bins), cfg_(cfg) {}

  /// `binned` is feature-major: binned[f * n + i].
  RegressionTree build(std::span<const double> g, std::span<const double> h) const {
    struct Leaf {
      std::size_t node;
      std::vector<std::uint32_t> rows;
      double sum_g = 0.0, sum_h = 0.0;
      std::optional<Candidate> best;
    };
    RegressionTree tree;
    tree.nodes.emplace_back();
    std::vector<Leaf> leaves;
    {
      Leaf root{0, {}, 0.0, 0.0, std::nullopt};
      root.rows.resize(n_);
      for (std::size_t i = 0; i < n_; ++i) {
        root.rows[i] = static_cast<std::uint32_t>(i);
        root.sum_g += g[i];
        root.sum_h += h[i];
      }
      root.best = best_split(root.rows, g, h, root.sum_g, root.sum_h);
      leaves.push_back(std::move(root));
    }
    while (leaves.size() < cfg_.max_leaves) {
      std::optional<std::size_t> pick;
      for (std::size_t k = 0; k < leaves.size(); ++k)
        if (leaves[k].best && (!pick || leaves[k].best->gain > leaves[*pick].best->gain)) pick = k;
      if (!pick) break;
      Leaf parent = std::move(leaves[*pick]);
      const Candidate split = *parent.best;
      Leaf left{0, {}, 0.0, 0.0, std::nullopt}, right{0, {}, 0.0, 0.0, std::nullopt};
      const std::uint8_t* col = binned_.data() + split.feature * n_;
      for (auto i : parent.rows) {
        Leaf& dst = col[i] <= split.bin ? left : right;
        dst.rows.push_back(i);
        dst.sum_g += g[i];
        dst.sum_h += h[i];
      }
      const auto li = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[parent.node];
      node.feature = static_cast<std::int32_t>(split.feature);
      node.bin = split.bin;
      node.threshold = bins_.edges[split.feature][split.bin];
      node.left = li;
      node.right = li + 1;
      left.node = static_cast<std::size_t>(li);
      right.node = static_cast<std::size_t>(li + 1);
      left.best = best_split(left.rows, g, h, left.sum_g, left.sum_h);
      right.best = best_split(right.rows, g, h, right.sum_g, right.sum_h);
      leaves[*pick] = std::move(left);
      leaves.insert(leaves.begin() + static_cast<std::ptrdiff_t>(*pick) + 1, std::move(right));
    }
    for (const auto& leaf : leaves) tree.nodes[leaf.node].value = -leaf.sum_g / (leaf.sum_h + cfg_.l2);
    return tree;
  }

 private:
  struct Candidate {
    std::size_t feature;
    std::uint8_t bin;
    double gain;
  };

  std::optional<Candidate> best_split(const std::vector<std::uint32_t>& rows, std::span<const double> g,
                                      std::span<const double> h, double sum_g, double sum_h) const {
    if (rows.size() < 2) return std::nullopt;
    const double parent = sum_g * sum_g / (sum_h + cfg_.l2);
    std::optional<Candidate> best;
    std::vector<double> hg, hh;
    std::vector<std::uint32_t> hc;
    for (std::size_t f = 0; f < bins_.edges.size(); ++f) {
      const std::size_t nb = bins_.bin_count(f);
      if (nb < 2) continue;
      hg.assign(nb, 0.0);
      hh.assign(nb, 0.0);
      hc.assign(nb, 0);
      const std::uint8_t* col = binned_.data() + f * n_;
      for (auto i : rows) {
        hg[col[i]] += g[i];
        hh[col[i]] += h[i];
        ++hc[col[i]];
      }
      double gl = 0.0, hl = 0.0;
      std::size_t cl = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        gl += hg[b];
        hl += hh[b];
        cl += hc[b];
        if (cl == 0) continue;
        if (cl == rows.size()) break;
        const double gr = sum_g - gl, hr = sum_h - hl;
        if (hl < cfg_.min_hessian || hr < cfg_.min_hessian) continue;
        const double gain = gl * gl / (hl + cfg_.l2) + gr * gr / (hr + cfg_.l2) - parent;
        if (gain > 0.0 && (!best || gain > best->gain)) best = Candidate{f, static_cast<std::uint8_t>(b), gain};
      }
    }
    return best;
  }

  const std::vector<std::uint8_t>& binned_;
  std::size_t n_;
  const FeatureBins& bins_;
  GbtConfig cfg_;
};

inline double mean_log_loss(std::span<const double> scores, std::span<const std::uint16_t> targets, std::size_t c_count) {
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto z = scores.subspan(i * c_count, c_count);
    total += log_sum_exp(z) - z[targets[i]];
  }
  return total / static_cast<double>(targets.size());
}

}  // namespace detail

/// Boosting from log class priors. A round whose trees would raise the
/// training loss by more than 1e-9 has its leaf outputs halved until it does
/// not (at most 30 times); if that fails the round is dropped and boosting
/// stops.
inline GbtModel fit_gbt(const PixelDataset& input, const GbtConfig& cfg) {
  if (input.size() == 0) throw DataError("gbt: empty dataset");
  const PixelDataset ds = canonical_order(input);
  const std::size_t n = ds.size(), c_count = ds.n_classes, d = ds.n_features;

  std::vector<std::size_t> counts(c_count, 0);
  for (auto y : ds.targets) {
    if (y >= c_count) throw DataError("gbt: target " + std::to_string(y) + " ≥ class count");
    ++counts[y];
  }
  if (std::ranges::count_if(counts, [](std::size_t k) { return k > 0; }) < 2)
    throw DataError("gbt: dataset holds a single class");

  GbtModel model;
  model.n_classes = c_count;
  model.n_features = d;
  model.learning_rate = cfg.learning_rate;
  model.base_score.resize(c_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    // Absent classes get a tiny prior so scores stay finite.
    const double prior = counts[c] > 0 ? static_cast<double>(counts[c]) / static_cast<double>(n) : 1e-12;
    model.base_score[c] = std::log(prior);
  }
  model.bins = make_bins(ds, cfg.bins);

  std::vector<std::uint8_t> binned(d * n);
  for (std::size_t f = 0; f < d; ++f)
    for (std::size_t i = 0; i < n; ++i) binned[f * n + i] = model.bins.bin(f, ds.features[i * d + f]);

  std::vector<double> scores(n * c_count);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(model.base_score.begin(), model.base_score.end(), scores.begin() + static_cast<std::ptrdiff_t>(i * c_count));
  double loss = detail::mean_log_loss(scores, ds.targets, c_count);
  model.training_history.push_back(loss);

  const detail::HistTreeBuilder builder(binned, n, model.bins, cfg);
  std::vector<double> prob(n * c_count);
  for (std::uint32_t round = 0; round < cfg.n_rounds; ++round) {
    prob = scores;
    for (std::size_t i = 0; i < n; ++i) softmax_inplace(std::span<double>(prob).subspan(i * c_count, c_count));

    std::vector<RegressionTree> trees(c_count);
    parallel_for(c_count, [&](std::size_t c) {
      std::vector<double> g(n), h(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double p = prob[i * c_count + c];
        g[i] = p - (ds.targets[i] == c ? 1.0 : 0.0);
        h[i] = p * (1.0 - p);
      }
      trees[c] = builder.build(g, h);
    });

    // Leaf each row lands in, per class, so rescaling needs no re-traversal.
    std::vector<double> step(n * c_count);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < c_count; ++c)
        step[i * c_count + c] = cfg.learning_rate * trees[c].predict(ds.row(i));

    bool accepted = false;
    std::vector<double> trial(n * c_count);
    double scale = 1.0;
    for (int attempt = 0; attempt <= 30; ++attempt) {
      for (std::size_t k = 0; k < trial.size(); ++k) trial[k] = scores[k] + scale * step[k];
      const double next = detail::mean_log_loss(trial, ds.targets, c_count);
      if (next <= loss + 1e-9) {
        loss = next;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;
    if (scale != 1.0)
      for (auto& t : trees)
        for (auto& node : t.nodes) node.value *= scale;
    scores.swap(trial);
    model.rounds.push_back(std::move(trees));
    model.training_history.push_back(loss);
  }
  return model;
}

}  // namespace labelreach
