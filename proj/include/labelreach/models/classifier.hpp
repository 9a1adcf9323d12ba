#pragma once

// The classifier contract shared by every model family, plus a tagged
// union used by serialization and the CLI.

#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "labelreach/models/context.hpp"
#include "labelreach/models/forest.hpp"
#include "labelreach/models/gbt.hpp"
#include "labelreach/models/logreg.hpp"
#include "labelreach/models/tile.hpp"
#include "labelreach/models/tree.hpp"

namespace labelreach {

/// Maps one feature vector to a class-probability simplex.
template <typename M>
concept PixelClassifier = requires(const M& m, std::span<const double> x, std::span<double> out) {
  { m.n_classes } -> std::convertible_to<std::size_t>;
  { m.n_features } -> std::convertible_to<std::size_t>;
  m.predict_proba(x, out);
};

/// Maps a whole tile to per-pixel probabilities (pixels x classes).
template <typename M>
concept TileClassifier = requires(const M& m, const EmbTile& t) {
  { m.predict_tile(t) } -> std::convertible_to<std::vector<double>>;
  { m.n_classes() } -> std::convertible_to<std::size_t>;
};

static_assert(PixelClassifier<LogRegModel>);
static_assert(PixelClassifier<DecisionTree>);
static_assert(PixelClassifier<RandomForestModel>);
static_assert(PixelClassifier<GbtModel>);
static_assert(TileClassifier<ContextModel>);

/// Lifts a pixel classifier to the tile contract; invalid pixels get zero
/// vectors.
template <PixelClassifier M>
class PixelwiseTileModel {
 public:
  explicit PixelwiseTileModel(const M& model) : model_(model) {}

  std::size_t n_classes() const { return model_.n_classes; }

  std::vector<double> predict_tile(const EmbTile& t) const {
    const std::size_t c_count = model_.n_classes;
    std::vector<double> out(t.pixels() * c_count, 0.0);
    std::vector<double> x(t.bands);
    for (std::size_t p = 0; p < t.pixels(); ++p) {
      if (!t.valid[p]) continue;
      for (std::uint32_t b = 0; b < t.bands; ++b) x[b] = t.values[b * t.pixels() + p];
      model_.predict_proba(x, std::span<double>(out).subspan(p * c_count, c_count));
    }
    return out;
  }

 private:
  const M& model_;
};

using AnyModel = std::variant<LogRegModel, RandomForestModel, GbtModel, ContextModel>;

enum class Family { LogReg, Forest, Gbt, Context };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::LogReg: return "logreg";
    case Family::Forest: return "forest";
    case Family::Gbt: return "gbt";
    case Family::Context: return "context";
  }
  return "";
}

inline std::optional<Family> parse_family(const std::string& s) {
  for (auto f : {Family::LogReg, Family::Forest, Family::Gbt, Family::Context})
    if (s == family_name(f)) return f;
  return std::nullopt;
}

inline Family family_of(const AnyModel& m) { return static_cast<Family>(m.index()); }

inline std::size_t model_classes(const AnyModel& m) {
  return std::visit(
      [](const auto& x) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, ContextModel>)
          return x.n_classes();
        else
          return x.n_classes;
      },
      m);
}

/// Embedding bands the model consumes.
inline std::size_t model_bands(const AnyModel& m) {
  return std::visit(
      [](const auto& x) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, ContextModel>)
          return x.n_bands;
        else
          return x.n_features;
      },
      m);
}

}  // namespace labelreach
