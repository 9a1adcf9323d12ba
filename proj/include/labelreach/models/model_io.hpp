#pragma once

// Model files: one JSON document
//   {format_version, family, n_features, n_classes, config, parameters}
// with trees stored as flat per-field node arrays.

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "labelreach/error.hpp"
#include "labelreach/models/classifier.hpp"
#include "labelreach/models/config.hpp"
#include "labelreach/raster.hpp"

namespace labelreach {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

using nlohmann::json;

inline json logreg_params(const LogRegModel& m) {
  return json{{"weights", m.weights}, {"bias", m.bias}, {"training_history", m.training_history}};
}

inline LogRegModel logreg_from(const json& p, std::size_t c, std::size_t d) {
  LogRegModel m(c, d);
  p.at("weights").get_to(m.weights);
  p.at("bias").get_to(m.bias);
  m.training_history = p.value("training_history", std::vector<double>{});
  if (m.weights.size() != c * d || m.bias.size() != c) throw DataError("model: logreg parameter shape mismatch");
  return m;
}

inline json tree_json(const DecisionTree& t) {
  json feature = json::array(), threshold = json::array(), left = json::array(), right = json::array(),
       hist = json::array();
  for (const auto& n : t.nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    hist.push_back(n.histogram);
  }
  return json{{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"histogram", hist}};
}

inline DecisionTree tree_from(const json& j, std::size_t c, std::size_t d) {
  DecisionTree t;
  t.n_classes = c;
  t.n_features = d;
  const auto& feature = j.at("feature");
  t.nodes.resize(feature.size());
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    auto& n = t.nodes[i];
    n.feature = feature[i].get<std::int32_t>();
    n.threshold = j.at("threshold")[i].get<double>();
    n.left = j.at("left")[i].get<std::int32_t>();
    n.right = j.at("right")[i].get<std::int32_t>();
    n.histogram = j.at("histogram")[i].get<std::vector<double>>();
    const auto count = static_cast<std::int32_t>(t.nodes.size());
    if (n.is_leaf() ? n.histogram.size() != c
                    : (n.feature >= static_cast<std::int32_t>(d) || n.left <= 0 || n.right <= 0 ||
                       n.left >= count || n.right >= count))
      throw DataError("model: malformed tree node " + std::to_string(i));
  }
  if (t.nodes.empty()) throw DataError("model: empty tree");
  return t;
}

inline json regtree_json(const RegressionTree& t) {
  json feature = json::array(), bin = json::array(), threshold = json::array(), left = json::array(),
       right = json::array(), value = json::array();
  for (const auto& n : t.nodes) {
    feature.push_back(n.feature);
    bin.push_back(n.bin);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
  }
  return json{{"feature", feature}, {"bin", bin},     {"threshold", threshold},
              {"left", left},       {"right", right}, {"value", value}};
}

inline RegressionTree regtree_from(const json& j, std::size_t d) {
  RegressionTree t;
  const auto& feature = j.at("feature");
  t.nodes.resize(feature.size());
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    auto& n = t.nodes[i];
    n.feature = feature[i].get<std::int32_t>();
    n.bin = j.at("bin")[i].get<std::uint8_t>();
    n.threshold = j.at("threshold")[i].get<double>();
    n.left = j.at("left")[i].get<std::int32_t>();
    n.right = j.at("right")[i].get<std::int32_t>();
    n.value = j.at("value")[i].get<double>();
    const auto count = static_cast<std::int32_t>(t.nodes.size());
    if (!n.is_leaf() && (n.feature >= static_cast<std::int32_t>(d) || n.left <= 0 || n.right <= 0 ||
                         n.left >= count || n.right >= count))
      throw DataError("model: malformed regression tree node " + std::to_string(i));
  }
  if (t.nodes.empty()) throw DataError("model: empty regression tree");
  return t;
}

}  // namespace detail

/// Serializes a model with its compatibility tag. `config` records the
/// training configuration verbatim.
inline nlohmann::json model_to_json(const AnyModel& model, const nlohmann::json& config = nlohmann::json::object()) {
  using nlohmann::json;
  json params = std::visit(
      [](const auto& m) -> json {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, LogRegModel>) {
          return detail::logreg_params(m);
        } else if constexpr (std::is_same_v<M, RandomForestModel>) {
          json trees = json::array();
          for (const auto& t : m.trees) trees.push_back(detail::tree_json(t));
          return json{{"mtry", m.mtry}, {"seed", m.seed}, {"bootstrap", m.bootstrap}, {"trees", trees}};
        } else if constexpr (std::is_same_v<M, GbtModel>) {
          json rounds = json::array();
          for (const auto& r : m.rounds) {
            json per_class = json::array();
            for (const auto& t : r) per_class.push_back(detail::regtree_json(t));
            rounds.push_back(per_class);
          }
          return json{{"learning_rate", m.learning_rate},
                      {"base_score", m.base_score},
                      {"bin_edges", m.bins.edges},
                      {"rounds", rounds},
                      {"training_history", m.training_history}};
        } else {
          return json{{"window", m.window},
                      {"tile", m.tile},
                      {"best_epoch", m.best_epoch},
                      {"core", detail::logreg_params(m.core)},
                      {"training_history", m.training_history},
                      {"validation_history", m.validation_history}};
        }
      },
      model);
  return json{{"format_version", kModelFormatVersion},
              {"family", family_name(family_of(model))},
              {"n_features", model_bands(model)},
              {"n_classes", model_classes(model)},
              {"config", config},
              {"parameters", std::move(params)}};
}

inline AnyModel model_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw DataError("model: unsupported format_version " + std::to_string(version));
    const auto family = parse_family(j.at("family").get<std::string>());
    if (!family) throw DataError("model: unknown family '" + j.at("family").get<std::string>() + "'");
    const auto d = j.at("n_features").get<std::size_t>();
    const auto c = j.at("n_classes").get<std::size_t>();
    const auto& p = j.at("parameters");
    switch (*family) {
      case Family::LogReg:
        return detail::logreg_from(p, c, d);
      case Family::Forest: {
        RandomForestModel m;
        m.n_classes = c;
        m.n_features = d;
        m.mtry = p.at("mtry").get<std::uint32_t>();
        m.seed = p.at("seed").get<std::uint64_t>();
        m.bootstrap = p.value("bootstrap", true);
        for (const auto& t : p.at("trees")) m.trees.push_back(detail::tree_from(t, c, d));
        if (m.trees.empty()) throw DataError("model: forest has no trees");
        return m;
      }
      case Family::Gbt: {
        GbtModel m;
        m.n_classes = c;
        m.n_features = d;
        m.learning_rate = p.at("learning_rate").get<double>();
        p.at("base_score").get_to(m.base_score);
        p.at("bin_edges").get_to(m.bins.edges);
        m.training_history = p.value("training_history", std::vector<double>{});
        for (const auto& r : p.at("rounds")) {
          std::vector<RegressionTree> trees;
          for (const auto& t : r) trees.push_back(detail::regtree_from(t, d));
          if (trees.size() != c) throw DataError("model: gbt round needs one tree per class");
          m.rounds.push_back(std::move(trees));
        }
        if (m.base_score.size() != c || m.bins.edges.size() != d) throw DataError("model: gbt shape mismatch");
        return m;
      }
      case Family::Context: {
        ContextModel m;
        m.window = p.at("window").get<std::uint32_t>();
        m.tile = p.at("tile").get<std::uint32_t>();
        m.best_epoch = p.value("best_epoch", 0u);
        m.n_bands = static_cast<std::uint32_t>(d);
        m.core = detail::logreg_from(p.at("core"), c, 2 * d);
        m.training_history = p.value("training_history", std::vector<double>{});
        m.validation_history = p.value("validation_history", std::vector<double>{});
        return m;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model: malformed document: ") + e.what());
  }
  throw DataError("model: unreachable family");
}

inline void save_model(const AnyModel& model, const std::string& path,
                       const nlohmann::json& config = nlohmann::json::object()) {
  write_text(path, model_to_json(model, config).dump(1) + "\n");
}

inline AnyModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

/// Deployment guard: refuses rasters whose band count differs from the
/// model's tag.
inline void check_compatible(const AnyModel& model, const EmbeddingRaster& emb) {
  if (model_bands(model) != emb.bands)
    throw DataError("model tag mismatch: " + std::string(family_name(family_of(model))) + " model expects " +
                    std::to_string(model_bands(model)) + " bands, raster has " + std::to_string(emb.bands));
}

}  // namespace labelreach
