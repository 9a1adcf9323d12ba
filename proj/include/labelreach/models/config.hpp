#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "labelreach/error.hpp"
#include "labelreach/json_util.hpp"

namespace labelreach {

struct LogRegConfig {
  double l2 = 1e-4;
  std::uint32_t max_iters = 500;
  double tol = 1e-7;
};

/// Shared by single trees and forests. max_depth 0 means unlimited; mtry 0
/// means floor(sqrt(D)).
struct ForestConfig {
  std::uint32_t n_trees = 100;
  std::uint32_t max_depth = 0;
  std::uint32_t min_samples_leaf = 1;
  std::uint32_t mtry = 0;
  std::uint64_t seed = 0;
  bool bootstrap = true;
};

struct GbtConfig {
  std::uint32_t n_rounds = 100;
  double learning_rate = 0.1;
  std::uint32_t max_leaves = 31;
  double min_hessian = 1e-3;
  double l2 = 1.0;
  std::uint32_t bins = 255;
};

struct ContextConfig {
  std::uint32_t window = 3;
  bool augment = true;
  std::uint32_t epochs = 350;
  std::uint32_t early_stop_patience = 15;
  std::uint64_t seed = 0;
  double l2 = 1e-4;
};

struct TrainConfig {
  LogRegConfig logreg;
  ForestConfig forest;
  GbtConfig gbt;
  ContextConfig context;
};

inline void validate(const TrainConfig& c) {
  if (!(c.logreg.l2 >= 0.0) || !(c.logreg.tol >= 0.0)) throw ConfigError("logreg l2 and tol must be ≥ 0");
  if (c.forest.n_trees < 1) throw ConfigError("n_trees must be ≥ 1");
  if (c.forest.min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be ≥ 1");
  if (!(c.gbt.learning_rate >= 0.0)) throw ConfigError("learning_rate must be ≥ 0");
  if (c.gbt.max_leaves < 2) throw ConfigError("max_leaves must be ≥ 2");
  if (c.gbt.bins < 2 || c.gbt.bins > 255) throw ConfigError("bins must lie in [2, 255]");
  if (!(c.gbt.l2 >= 0.0) || !(c.gbt.min_hessian >= 0.0)) throw ConfigError("gbt l2 and min_hessian must be ≥ 0");
  if (c.context.window < 1 || c.context.window % 2 == 0) throw ConfigError("context window must be odd and ≥ 1");
  if (c.context.epochs > 350) throw ConfigError("context epochs are capped at 350");
  if (c.context.early_stop_patience < 1) throw ConfigError("early_stop_patience must be ≥ 1");
}

inline void to_json(nlohmann::json& j, const LogRegConfig& c) {
  j = {{"l2", c.l2}, {"max_iters", c.max_iters}, {"tol", c.tol}};
}
inline void from_json(const nlohmann::json& j, LogRegConfig& c) {
  detail::check_keys(j, "logreg", {"l2", "max_iters", "tol"});
  detail::read_key(j, "logreg", "l2", c.l2);
  detail::read_key(j, "logreg", "max_iters", c.max_iters);
  detail::read_key(j, "logreg", "tol", c.tol);
}

inline void to_json(nlohmann::json& j, const ForestConfig& c) {
  j = {{"n_trees", c.n_trees}, {"max_depth", c.max_depth}, {"min_samples_leaf", c.min_samples_leaf},
       {"mtry", c.mtry},       {"seed", c.seed},           {"bootstrap", c.bootstrap}};
}
inline void from_json(const nlohmann::json& j, ForestConfig& c) {
  detail::check_keys(j, "forest", {"n_trees", "max_depth", "min_samples_leaf", "mtry", "seed", "bootstrap"});
  detail::read_key(j, "forest", "n_trees", c.n_trees);
  detail::read_key(j, "forest", "max_depth", c.max_depth);
  detail::read_key(j, "forest", "min_samples_leaf", c.min_samples_leaf);
  detail::read_key(j, "forest", "mtry", c.mtry);
  detail::read_key(j, "forest", "seed", c.seed);
  detail::read_key(j, "forest", "bootstrap", c.bootstrap);
}

inline void to_json(nlohmann::json& j, const GbtConfig& c) {
  j = {{"n_rounds", c.n_rounds},       {"learning_rate", c.learning_rate}, {"max_leaves", c.max_leaves},
       {"min_hessian", c.min_hessian}, {"l2", c.l2},                       {"bins", c.bins}};
}
inline void from_json(const nlohmann::json& j, GbtConfig& c) {
  detail::check_keys(j, "gbt", {"n_rounds", "learning_rate", "max_leaves", "min_hessian", "l2", "bins"});
  detail::read_key(j, "gbt", "n_rounds", c.n_rounds);
  detail::read_key(j, "gbt", "learning_rate", c.learning_rate);
  detail::read_key(j, "gbt", "max_leaves", c.max_leaves);
  detail::read_key(j, "gbt", "min_hessian", c.min_hessian);
  detail::read_key(j, "gbt", "l2", c.l2);
  detail::read_key(j, "gbt", "bins", c.bins);
}

inline void to_json(nlohmann::json& j, const ContextConfig& c) {
  j = {{"window", c.window}, {"augment", c.augment}, {"epochs", c.epochs},
       {"early_stop_patience", c.early_stop_patience}, {"seed", c.seed}, {"l2", c.l2}};
}
inline void from_json(const nlohmann::json& j, ContextConfig& c) {
  detail::check_keys(j, "context", {"window", "augment", "epochs", "early_stop_patience", "seed", "l2"});
  detail::read_key(j, "context", "window", c.window);
  detail::read_key(j, "context", "augment", c.augment);
  detail::read_key(j, "context", "epochs", c.epochs);
  detail::read_key(j, "context", "early_stop_patience", c.early_stop_patience);
  detail::read_key(j, "context", "seed", c.seed);
  detail::read_key(j, "context", "l2", c.l2);
}

}  // namespace labelreach
