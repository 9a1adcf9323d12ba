#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "labelreach/models/logreg.hpp"
#include "support.hpp"

namespace lr = labelreach;
using lr::testing::make_dataset;

namespace {

double loss_at(const lr::LogRegModel& m, const lr::PixelDataset& ds, double l2) {
  return lr::logreg_loss_and_grad(m, ds, l2).loss;
}

}  // namespace

TEST(LogRegLoss, ZeroWeightsBalancedIsLn2) {
  const auto ds = make_dataset(3, 2, {1, 2, 3, -1, 0, 4, 5, 5, 5, 0, 0, 1}, {0, 1, 0, 1});
  const lr::LogRegModel m(2, 3);
  EXPECT_NEAR(loss_at(m, ds, 0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(loss_at(m, ds, 0.5), std::log(2.0), 1e-15);
}

TEST(LogRegLoss, ConfidentModelLossVanishes) {
  const auto ds = make_dataset(1, 2, {1.0}, {1});
  lr::LogRegModel m(2, 1);
  double prev = INFINITY;
  for (double margin : {1.0, 5.0, 20.0, 40.0}) {
    m.weights = {0.0, margin};
    const double l = loss_at(m, ds, 0.0);
    EXPECT_LT(l, prev);
    prev = l;
  }
  EXPECT_LT(prev, 1e-15);
}

TEST(LogRegLoss, GradientMatchesCentralDifferences) {
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t d = 2 + trial % 5, c = 2 + trial % 4;
    std::vector<double> f(5 * d);
    std::vector<std::uint16_t> y(5);
    for (auto& v : f) v = 2.0 * n01(gen);
    for (auto& v : y) v = static_cast<std::uint16_t>(gen() % c);
    const auto ds = make_dataset(d, c, f, y);
    lr::LogRegModel m(c, d);
    for (auto& w : m.weights) w = n01(gen);
    for (auto& b : m.bias) b = n01(gen);
    const double l2 = trial % 2 ? 0.3 : 0.0;
    const auto g = lr::logreg_loss_and_grad(m, ds, l2);
    const double h = 1e-5;
    double worst = 0.0;
    auto check = [&](double& param, double analytic) {
      const double keep = param;
      param = keep + h;
      const double up = loss_at(m, ds, l2);
      param = keep - h;
      const double down = loss_at(m, ds, l2);
      param = keep;
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-8}));
    };
    for (std::size_t k = 0; k < m.weights.size(); ++k) check(m.weights[k], g.grad_weights[k]);
    for (std::size_t k = 0; k < m.bias.size(); ++k) check(m.bias[k], g.grad_bias[k]);
    EXPECT_LT(worst, 1e-4) << "trial " << trial;
  }
}

TEST(LogRegLoss, DimensionMismatch) {
  const auto ds = make_dataset(2, 2, {1, 2}, {0});
  EXPECT_THROW(loss_at(lr::LogRegModel(2, 3), ds, 0.0), lr::DataError);
}

TEST(FitLogReg, SeparableOneDimension) {
  std::vector<double> f;
  std::vector<std::uint16_t> y;
  for (int i = 0; i < 50; ++i) {
    f.push_back(-1.0);
    y.push_back(0);
    f.push_back(1.0);
    y.push_back(1);
  }
  const auto ds = make_dataset(1, 2, f, y);
  const auto m = lr::fit_logreg(ds, {});
  EXPECT_EQ(lr::testing::accuracy(m, ds), 1.0);
}

TEST(FitLogReg, ZeroIterationsGivesUniform) {
  const auto ds = lr::testing::blobs(30, 3, 3, 4.0, 0.5, 1);
  lr::LogRegConfig cfg;
  cfg.max_iters = 0;
  const auto m = lr::fit_logreg(ds, cfg);
  std::vector<double> p(3);
  m.predict_proba(ds.row(0), p);
  for (double v : p) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  EXPECT_EQ(m.training_history.size(), 1u);
}

TEST(FitLogReg, HistoryNonIncreasing) {
  const auto ds = lr::testing::blobs(300, 4, 5, 1.5, 1.0, 7);
  const auto m = lr::fit_logreg(ds, {});
  ASSERT_GT(m.training_history.size(), 10u);
  for (std::size_t i = 1; i < m.training_history.size(); ++i)
    EXPECT_LE(m.training_history[i], m.training_history[i - 1] + 1e-12);
  for (double w : m.weights) EXPECT_TRUE(std::isfinite(w));
}

TEST(FitLogReg, BlobsRecovered) {
  const auto train = lr::testing::blobs(500, 8, 5, 4.0, 0.5, 3);
  const auto val = lr::testing::blobs(500, 8, 5, 4.0, 0.5, 4);
  EXPECT_GE(lr::testing::accuracy(lr::fit_logreg(train, {}), val), 0.95);
}

TEST(FitLogReg, SingleClassRejected) {
  EXPECT_THROW(lr::fit_logreg(make_dataset(1, 2, {1, 2}, {1, 1}), {}), lr::DataError);
}

TEST(FitLogReg, RowOrderChangesLittle) {
  const auto ds = lr::testing::blobs(200, 3, 3, 2.0, 1.0, 5);
  const auto a = lr::fit_logreg(ds, {});
  const auto b = lr::fit_logreg(lr::testing::shuffled(ds, 9), {});
  ASSERT_EQ(a.weights.size(), b.weights.size());
  for (std::size_t k = 0; k < a.weights.size(); ++k) EXPECT_NEAR(a.weights[k], b.weights[k], 1e-9);
}

TEST(FitLogReg, ProbabilitiesAreSimplex) {
  const auto ds = lr::testing::blobs(100, 4, 4, 3.0, 1.0, 6);
  const auto m = lr::fit_logreg(ds, {});
  std::vector<double> p(4);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    m.predict_proba(ds.row(i), p);
    double s = 0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}
