#pragma once

// Multinomial logistic regression trained by full-batch gradient descent
// with step halving.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "labelreach/error.hpp"
#include "labelreach/models/config.hpp"
#include "labelreach/models/softmax.hpp"
#include "labelreach/prep.hpp"

namespace labelreach {

struct LogRegModel {
  std::size_t n_classes = 0;
  std::size_t n_features = 0;
  std::vector<double> weights;  // n_classes x n_features, row-major
  std::vector<double> bias;     // n_classes
  std::vector<double> training_history;

  LogRegModel() = default;
  LogRegModel(std::size_t c, std::size_t d) : n_classes(c), n_features(d), weights(c * d, 0.0), bias(c, 0.0) {}

  void logits(std::span<const double> x, std::span<double> z) const {
    for (std::size_t c = 0; c < n_classes; ++c) {
      const double* w = weights.data() + c * n_features;
      double s = bias[c];
      for (std::size_t j = 0; j < n_features; ++j) s += w[j] * x[j];
      z[c] = s;
    }
  }

  void predict_proba(std::span<const double> x, std::span<double> out) const {
    logits(x, out);
    softmax_inplace(out);
  }
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad_weights;
  std::vector<double> grad_bias;
};

/// Mean softmax cross-entropy plus (l2/2)||W||^2 (bias unpenalized), with its
/// exact gradient.
inline LossAndGrad logreg_loss_and_grad(const LogRegModel& model, const PixelDataset& ds, double l2) {
  if (ds.size() == 0) throw DataError("logreg: empty dataset");
  if (ds.n_features != model.n_features)
    throw DataError("logreg: dataset has " + std::to_string(ds.n_features) + " features, model expects " +
                    std::to_string(model.n_features));
  const std::size_t c_count = model.n_classes, d = model.n_features;
  LossAndGrad out;
  out.grad_weights.assign(c_count * d, 0.0);
  out.grad_bias.assign(c_count, 0.0);
  std::vector<double> z(c_count);
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto x = ds.row(i);
    const std::size_t y = ds.targets[i];
    if (y >= c_count) throw DataError("logreg: target " + std::to_string(y) + " ≥ class count");
    model.logits(x, z);
    const double lse = log_sum_exp(z);
    total += lse - z[y];
    for (std::size_t c = 0; c < c_count; ++c) {
      const double r = std::exp(z[c] - lse) - (c == y ? 1.0 : 0.0);
      double* g = out.grad_weights.data() + c * d;
      for (std::size_t j = 0; j < d; ++j) g[j] += r * x[j];
      out.grad_bias[c] += r;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(ds.size());
  double sq = 0.0;
  for (double w : model.weights) sq += w * w;
  out.loss = total * inv_n + 0.5 * l2 * sq;
  for (std::size_t k = 0; k < out.grad_weights.size(); ++k)
    out.grad_weights[k] = out.grad_weights[k] * inv_n + l2 * model.weights[k];
  for (double& g : out.grad_bias) g *= inv_n;
  return out;
}

/// Step size 1/L for the bound L = 0.5 * mean(||x||^2 + 1) + l2 on the
/// objective's curvature.
inline double initial_step(const PixelDataset& ds, double l2) {
  double s = 0.0;
  for (double v : ds.features) s += v * v;
  const double mean_sq = s / static_cast<double>(std::max<std::size_t>(1, ds.size())) + 1.0;
  return 1.0 / (0.5 * mean_sq + l2);
}

/// Gradient descent with rollback: a trial step that raises the loss is
/// discarded and the step halved.
class HalvingDescent {
 public:
  static constexpr int kMaxHalvings = 60;

  HalvingDescent(LogRegModel model, double l2, double step) : model_(std::move(model)), l2_(l2), step_(step) {}

  /// Evaluates loss and gradient at the current parameters on `batch`.
  double evaluate(const PixelDataset& batch) {
    current_ = logreg_loss_and_grad(model_, batch, l2_);
    return current_.loss;
  }

  /// One accepted step on the batch last passed to evaluate(). Returns false
  /// when no step size up to kMaxHalvings halvings reduces the loss.
  bool step(const PixelDataset& batch) {
    for (int h = 0; h <= kMaxHalvings; ++h) {
      LogRegModel trial = model_;
      for (std::size_t k = 0; k < trial.weights.size(); ++k) trial.weights[k] -= step_ * current_.grad_weights[k];
      for (std::size_t k = 0; k < trial.bias.size(); ++k) trial.bias[k] -= step_ * current_.grad_bias[k];
      LossAndGrad next = logreg_loss_and_grad(trial, batch, l2_);
      if (next.loss <= current_.loss) {
        model_ = std::move(trial);
        current_ = std::move(next);
        return true;
      }
      step_ *= 0.5;
    }
    return false;
  }

  double loss() const { return current_.loss; }
  double step_size() const { return step_; }
  const LogRegModel& model() const { return model_; }
  LogRegModel& model() { return model_; }

 private:
  LogRegModel model_;
  double l2_;
  double step_;
  LossAndGrad current_;
};

/// Full-batch descent from zero. Stops after max_iters accepted steps, when
/// the relative loss improvement falls below tol, or when halving fails.
inline LogRegModel fit_logreg(const PixelDataset& ds, const LogRegConfig& cfg) {
  if (ds.size() == 0) throw DataError("logreg: empty dataset");
  std::vector<bool> seen(ds.n_classes, false);
  std::size_t distinct = 0;
  for (auto y : ds.targets)
    if (y < seen.size() && !seen[y]) {
      seen[y] = true;
      ++distinct;
    }
  if (distinct < 2) throw DataError("logreg: dataset holds a single class");

  HalvingDescent gd(LogRegModel(ds.n_classes, ds.n_features), cfg.l2, initial_step(ds, cfg.l2));
  std::vector<double> history{gd.evaluate(ds)};
  for (std::uint32_t it = 0; it < cfg.max_iters; ++it) {
    const double before = gd.loss();
    if (!gd.step(ds)) break;
    history.push_back(gd.loss());
    const double rel = (before - gd.loss()) / std::max(std::abs(before), std::numeric_limits<double>::min());
    if (rel < cfg.tol) break;
  }
  LogRegModel model = std::move(gd.model());
  model.training_history = std::move(history);
  return model;
}

}  // namespace labelreach
