#include <gtest/gtest.h>

#include <cstdlib>

#include "labelreach/models/forest.hpp"
#include "labelreach/models/tree.hpp"
#include "support.hpp"

namespace lr = labelreach;
using lr::testing::make_dataset;

namespace {

lr::PixelDataset xor_dataset() {
  return make_dataset(2, 2, {0, 0, 0, 1, 1, 0, 1, 1}, {0, 1, 1, 0});
}

/// Scoped LABELREACH_THREADS override.
class ThreadsEnv {
 public:
  explicit ThreadsEnv(const char* value) {
    if (const char* old = std::getenv("LABELREACH_THREADS")) old_ = old;
    ::setenv("LABELREACH_THREADS", value, 1);
  }
  ~ThreadsEnv() {
    if (old_.empty())
      ::unsetenv("LABELREACH_THREADS");
    else
      ::setenv("LABELREACH_THREADS", old_.c_str(), 1);
  }

 private:
  std::string old_;
};

}  // namespace

TEST(Tree, PureDatasetIsOneLeaf) {
  const auto ds = make_dataset(2, 3, {1, 2, 3, 4, 5, 6}, {2, 2, 2});
  const auto t = lr::fit_tree(ds, {}, 0);
  ASSERT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(t.nodes[0].histogram, (std::vector<double>{0, 0, 3}));
}

TEST(Tree, XorNeedsDepthTwo) {
  lr::ForestConfig cfg;
  cfg.mtry = 2;
  const auto t = lr::fit_tree(xor_dataset(), cfg, 0);
  EXPECT_EQ(t.depth(), 2u);
  EXPECT_EQ(t.leaf_count(), 4u);
  EXPECT_EQ(lr::testing::accuracy(t, xor_dataset()), 1.0);
  // Every root split has zero gain, so the tie rule picks feature 0 at 0.5.
  EXPECT_EQ(t.nodes[0].feature, 0);
  EXPECT_EQ(t.nodes[0].threshold, 0.5);
}

TEST(Tree, XorWithDefaultMtry) {
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    EXPECT_EQ(lr::testing::accuracy(lr::fit_tree(xor_dataset(), {}, seed), xor_dataset()), 1.0);
}

TEST(Tree, ConstantFeaturesGiveMajorityLeaf) {
  const auto ds = make_dataset(2, 3, {1, 1, 1, 1, 1, 1, 1, 1}, {0, 2, 2, 1});
  const auto t = lr::fit_tree(ds, {}, 0);
  ASSERT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(t.nodes[0].histogram, (std::vector<double>{1, 1, 2}));
  std::vector<double> p(3);
  t.predict_proba(ds.row(0), p);
  EXPECT_EQ(p[2], 0.5);
}

TEST(Tree, MidpointThresholdAndTieToLowestThreshold) {
  // Two equally good thresholds on feature 0 (1.5 and 3.5); the lower wins.
  const auto ds = make_dataset(1, 2, {1, 2, 3, 4}, {0, 1, 1, 0});
  lr::ForestConfig cfg;
  cfg.max_depth = 1;
  const auto t = lr::fit_tree(ds, cfg, 0);
  EXPECT_EQ(t.nodes[0].threshold, 1.5);
}

TEST(Tree, DepthAndLeafSizeLimits) {
  const auto ds = lr::testing::blobs(400, 3, 4, 1.0, 1.0, 1);
  lr::ForestConfig cfg;
  cfg.max_depth = 3;
  EXPECT_LE(lr::fit_tree(ds, cfg, 1).depth(), 3u);
  cfg.max_depth = 0;
  cfg.min_samples_leaf = 25;
  const auto t = lr::fit_tree(ds, cfg, 1);
  for (const auto& n : t.nodes) {
    if (!n.is_leaf()) continue;
    double s = 0;
    for (double v : n.histogram) s += v;
    EXPECT_GE(s, 25.0);
  }
}

TEST(Tree, GiniChoiceMatchesBruteForce) {
  // Exhaustive search over every feature and midpoint for the best root split.
  const auto ds = lr::testing::blobs(60, 3, 3, 1.0, 1.0, 21);
  lr::ForestConfig cfg;
  cfg.mtry = 3;
  cfg.max_depth = 1;
  const auto t = lr::fit_tree(ds, cfg, 0);
  double best = -1;
  std::size_t bf = 0;
  double bt = 0;
  for (std::size_t f = 0; f < 3; ++f) {
    std::vector<double> vals;
    for (std::size_t i = 0; i < ds.size(); ++i) vals.push_back(ds.row(i)[f]);
    std::sort(vals.begin(), vals.end());
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      if (vals[k] == vals[k + 1]) continue;
      const double thr = 0.5 * (vals[k] + vals[k + 1]);
      std::vector<double> l(3, 0), r(3, 0);
      for (std::size_t i = 0; i < ds.size(); ++i) (ds.row(i)[f] <= thr ? l : r)[ds.targets[i]] += 1;
      auto gini = [](const std::vector<double>& h) {
        double n = 0, s = 0;
        for (double v : h) n += v;
        for (double v : h) s += (v / n) * (v / n);
        return std::pair{n, 1.0 - s};
      };
      const auto [nl, gl] = gini(l);
      const auto [nr, gr] = gini(r);
      const double decrease = -(nl * gl + nr * gr) / static_cast<double>(ds.size());
      if (decrease > best + 1e-12) {
        best = decrease;
        bf = f;
        bt = thr;
      }
    }
  }
  EXPECT_EQ(static_cast<std::size_t>(t.nodes[0].feature), bf);
  EXPECT_DOUBLE_EQ(t.nodes[0].threshold, bt);
}

TEST(Forest, SingleTreeMemorizes) {
  const auto ds = lr::testing::blobs(300, 4, 5, 0.5, 2.0, 8);
  lr::ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.bootstrap = false;
  const auto m = lr::fit_random_forest(ds, cfg);
  EXPECT_EQ(lr::testing::accuracy(m, ds), 1.0);
}

TEST(Forest, TreeCountSeedsAndSimplex) {
  const auto ds = lr::testing::blobs(200, 4, 3, 2.0, 1.0, 2);
  lr::ForestConfig cfg;
  cfg.n_trees = 7;
  cfg.seed = 100;
  const auto m = lr::fit_random_forest(ds, cfg);
  EXPECT_EQ(m.trees.size(), 7u);
  EXPECT_EQ(m.mtry, 2u);
  std::vector<double> p(3);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    m.predict_proba(ds.row(i), p);
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
  }
  // Tree t depends only on seed + t: a forest seeded one higher shifts by one.
  cfg.seed = 101;
  cfg.n_trees = 6;
  const auto shifted = lr::fit_random_forest(ds, cfg);
  for (std::size_t t = 0; t < 6; ++t) {
    ASSERT_EQ(shifted.trees[t].nodes.size(), m.trees[t + 1].nodes.size());
    for (std::size_t k = 0; k < shifted.trees[t].nodes.size(); ++k)
      EXPECT_EQ(shifted.trees[t].nodes[k].threshold, m.trees[t + 1].nodes[k].threshold);
  }
}

TEST(Forest, ThreadCountDoesNotMatter) {
  const auto ds = lr::testing::blobs(300, 6, 4, 1.0, 1.5, 4);
  lr::ForestConfig cfg;
  cfg.n_trees = 12;
  lr::RandomForestModel one, many;
  {
    ThreadsEnv env("1");
    one = lr::fit_random_forest(ds, cfg);
  }
  {
    ThreadsEnv env("4");
    many = lr::fit_random_forest(ds, cfg);
  }
  std::vector<double> a(4), b(4);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    one.predict_proba(ds.row(i), a);
    many.predict_proba(ds.row(i), b);
    ASSERT_EQ(a, b);
  }
}

TEST(Forest, RowOrderDoesNotMatter) {
  const auto ds = lr::testing::blobs(250, 4, 3, 1.0, 1.5, 12);
  lr::ForestConfig cfg;
  cfg.n_trees = 5;
  const auto a = lr::fit_random_forest(ds, cfg);
  const auto b = lr::fit_random_forest(lr::testing::shuffled(ds, 3), cfg);
  std::vector<double> pa(3), pb(3);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    a.predict_proba(ds.row(i), pa);
    b.predict_proba(ds.row(i), pb);
    ASSERT_EQ(pa, pb);
  }
}

TEST(Forest, NoisyDataOverfits) {
  const auto train = lr::testing::blobs(600, 4, 4, 2.0, 1.0, 30);
  const auto val = lr::testing::blobs(600, 4, 4, 2.0, 1.0, 31);
  lr::ForestConfig cfg;
  cfg.n_trees = 30;
  const auto m = lr::fit_random_forest(train, cfg);
  EXPECT_GE(lr::testing::accuracy(m, train) - lr::testing::accuracy(m, val), 0.05);
}

TEST(Forest, EmptyAndBadConfig) {
  lr::PixelDataset empty;
  empty.n_features = 2;
  empty.n_classes = 2;
  EXPECT_THROW(lr::fit_random_forest(empty, {}), lr::DataError);
  lr::ForestConfig cfg;
  cfg.n_trees = 0;
  EXPECT_THROW(lr::fit_random_forest(xor_dataset(), cfg), lr::ConfigError);
}
