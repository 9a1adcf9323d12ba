#pragma once

// The CLI's JSON run configuration. Every section is optional; unknown keys
// are rejected.

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "labelreach/error.hpp"
#include "labelreach/json_util.hpp"
#include "labelreach/models/classifier.hpp"
#include "labelreach/models/config.hpp"
#include "labelreach/synth.hpp"

namespace labelreach {

struct PrepConfig {
  double threshold = 0.001;
  std::uint32_t tile = 64;
  std::pair<double, double> fractions{0.9, 0.1};
  std::uint64_t seed = 0;
  std::string remap_path;                 // empty = no user remap
  std::optional<std::uint32_t> train_rows;  // split only tiles inside rows [0, train_rows)
};

struct RunConfig {
  SynthConfig synth;
  PrepConfig prep;
  std::string family = "logreg";
  TrainConfig train;
  std::uint32_t stride = 0;           // 0 = tile / 2
  std::vector<std::uint32_t> bands;   // band edges; empty = no band reports
  std::string workdir = ".";
  std::string manifest = "manifest.json";
};

inline void validate(const PrepConfig& p) {
  if (!(p.threshold >= 0.0 && p.threshold < 1.0)) throw ConfigError("prep.threshold must lie in [0, 1)");
  if (p.tile < 1) throw ConfigError("prep.tile must be ≥ 1");
  const auto [ft, fv] = p.fractions;
  if (!(ft >= 0.0 && fv >= 0.0 && ft + fv <= 1.0 + 1e-12))
    throw ConfigError("prep.fractions must be non-negative and sum to at most 1");
  if (p.train_rows && *p.train_rows == 0) throw ConfigError("prep.train_rows must be ≥ 1");
}

inline void validate(const RunConfig& c) {
  validate(c.synth);
  validate(c.prep);
  if (!parse_family(c.family)) throw ConfigError("unknown family '" + c.family + "'");
  validate(c.train);
  for (std::size_t i = 1; i < c.bands.size(); ++i)
    if (c.bands[i] <= c.bands[i - 1]) throw ConfigError("eval.bands must be strictly ascending");
  if (c.bands.size() == 1) throw ConfigError("eval.bands needs at least two edges");
}

inline void from_json(const nlohmann::json& j, PrepConfig& p) {
  detail::check_keys(j, "prep", {"threshold", "tile", "fractions", "seed", "remap_path", "train_rows"});
  detail::read_key(j, "prep", "threshold", p.threshold);
  detail::read_key(j, "prep", "tile", p.tile);
  if (j.contains("fractions")) {
    std::vector<double> f;
    detail::read_key(j, "prep", "fractions", f);
    if (f.size() != 2) throw ConfigError("prep.fractions: expected [train, val]");
    p.fractions = {f[0], f[1]};
  }
  detail::read_key(j, "prep", "seed", p.seed);
  detail::read_key(j, "prep", "remap_path", p.remap_path);
  if (j.contains("train_rows") && !j.at("train_rows").is_null()) {
    std::uint32_t rows = 0;
    detail::read_key(j, "prep", "train_rows", rows);
    p.train_rows = rows;
  }
}

inline void to_json(nlohmann::json& j, const PrepConfig& p) {
  j = {{"threshold", p.threshold},
       {"tile", p.tile},
       {"fractions", {p.fractions.first, p.fractions.second}},
       {"seed", p.seed},
       {"remap_path", p.remap_path},
       {"train_rows", p.train_rows ? nlohmann::json(*p.train_rows) : nlohmann::json(nullptr)}};
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  detail::check_keys(j, "config", {"synth", "prep", "train", "infer", "eval", "paths"});
  if (j.contains("synth")) c.synth = j.at("synth").get<SynthConfig>();
  if (j.contains("prep")) c.prep = j.at("prep").get<PrepConfig>();
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::check_keys(t, "train", {"family", "logreg", "forest", "gbt", "context"});
    detail::read_key(t, "train", "family", c.family);
    if (t.contains("logreg")) c.train.logreg = t.at("logreg").get<LogRegConfig>();
    if (t.contains("forest")) c.train.forest = t.at("forest").get<ForestConfig>();
    if (t.contains("gbt")) c.train.gbt = t.at("gbt").get<GbtConfig>();
    if (t.contains("context")) c.train.context = t.at("context").get<ContextConfig>();
  }
  if (j.contains("infer")) {
    detail::check_keys(j.at("infer"), "infer", {"stride"});
    detail::read_key(j.at("infer"), "infer", "stride", c.stride);
  }
  if (j.contains("eval")) {
    detail::check_keys(j.at("eval"), "eval", {"bands"});
    detail::read_key(j.at("eval"), "eval", "bands", c.bands);
  }
  if (j.contains("paths")) {
    detail::check_keys(j.at("paths"), "paths", {"workdir", "manifest"});
    detail::read_key(j.at("paths"), "paths", "workdir", c.workdir);
    detail::read_key(j.at("paths"), "paths", "manifest", c.manifest);
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

inline nlohmann::json run_config_json(const RunConfig& c) {
  return {{"synth", c.synth},
          {"prep", c.prep},
          {"train",
           {{"family", c.family},
            {"logreg", c.train.logreg},
            {"forest", c.train.forest},
            {"gbt", c.train.gbt},
            {"context", c.train.context}}},
          {"infer", {{"stride", c.stride}}},
          {"eval", {{"bands", c.bands}}},
          {"paths", {{"workdir", c.workdir}, {"manifest", c.manifest}}}};
}

}  // namespace labelreach
