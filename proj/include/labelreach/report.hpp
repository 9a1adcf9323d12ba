#pragma once

// Markdown metric tables, per-class CSV listings and PPM class maps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "labelreach/csv.hpp"
#include "labelreach/error.hpp"
#include "labelreach/metrics.hpp"
#include "labelreach/raster.hpp"

namespace labelreach {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct Palette {
  std::map<std::uint16_t, Rgb> colors;
  Rgb nodata{0, 0, 0};
};

/// Distinct non-black colours for ids [0, classes): hues spaced by the
/// golden angle, alternating lightness.
inline Palette default_palette(std::size_t classes) {
  Palette p;
  for (std::size_t k = 0; k < classes; ++k) {
    const double hue = std::fmod(static_cast<double>(k) * 137.50776405003785, 360.0) / 60.0;
    const double light = k % 2 == 0 ? 0.85 : 0.6;
    const double x = light * (1.0 - std::abs(std::fmod(hue, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hue)) {
      case 0: r = light, g = x; break;
      case 1: r = x, g = light; break;
      case 2: g = light, b = x; break;
      case 3: g = x, b = light; break;
      case 4: r = x, b = light; break;
      default: r = light, b = x; break;
    }
    auto to8 = [](double v) { return static_cast<std::uint8_t>(std::lround(40.0 + 215.0 * v)); };
    Rgb c{to8(r), to8(g), to8(b)};
    // Nudge on collision so every class keeps its own colour.
    auto taken = [&p](const Rgb& rgb) {
      return std::ranges::any_of(p.colors, [&](const auto& kv) { return kv.second == rgb; });
    };
    while (taken(c)) c.b = static_cast<std::uint8_t>(c.b == 255 ? 40 : c.b + 1);
    p.colors[static_cast<std::uint16_t>(k)] = c;
  }
  return p;
}

/// Binary PPM (P6): "P6\n<w> <h>\n255\n" then row-major RGB triples.
inline std::vector<unsigned char> render_class_map(const LabelRaster& labels, const Palette& palette) {
  const std::string header = "P6\n" + std::to_string(labels.width) + " " + std::to_string(labels.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + labels.pixels() * 3);
  for (auto id : labels.ids) {
    Rgb c = palette.nodata;
    if (id != kNodata) {
      auto it = palette.colors.find(id);
      if (it == palette.colors.end()) throw DataError("palette has no colour for class " + std::to_string(id));
      c = it->second;
    }
    out.push_back(c.r);
    out.push_back(c.g);
    out.push_back(c.b);
  }
  return out;
}

/// Half-up rounding to `decimals` places, applied to v's decimal expansion
/// (printed to decimals + 9 places) so 0.005 -> "0.01" and 0.285 -> "0.29".
inline std::string round_half_up(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals + 9, v);
  std::string s = buf;
  const auto dot = s.find('.');
  const bool up = s[dot + 1 + static_cast<std::size_t>(decimals)] >= '5';
  s.resize(dot + 1 + static_cast<std::size_t>(decimals));
  if (up) {
    std::size_t i = s.size();
    while (i-- > 0) {
      if (s[i] == '.') continue;
      if (s[i] == '-') break;
      if (s[i] != '9') {
        ++s[i];
        break;
      }
      s[i] = '0';
      if (i == 0 || s[i - 1] == '-') {
        s.insert(i, "1");
        break;
      }
    }
  }
  if (decimals == 0) s.pop_back();
  return s;
}

struct TableRow {
  std::string model;
  std::string split;
  MetricsReport report;
};

/// One row per model; each split contributes an ACC | J | F1 column group,
/// in first-appearance order.
inline std::string metrics_table(const std::vector<TableRow>& rows) {
  if (rows.empty()) throw DataError("metrics_table: no rows");
  std::vector<std::string> models, splits;
  std::map<std::pair<std::string, std::string>, const MetricsReport*> cell;
  for (const auto& r : rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    if (std::find(splits.begin(), splits.end(), r.split) == splits.end()) splits.push_back(r.split);
    cell[{r.model, r.split}] = &r.report;
  }
  std::string out = "| Model |";
  std::string rule = "|---|";
  for (const auto& s : splits) {
    out += " " + s + " ACC | " + s + " J | " + s + " F1 |";
    rule += "---|---|---|";
  }
  out += "\n" + rule + "\n";
  for (const auto& m : models) {
    out += "| " + m + " |";
    for (const auto& s : splits) {
      auto it = cell.find({m, s});
      if (it == cell.end()) {
        out += " - | - | - |";
        continue;
      }
      const auto& r = *it->second;
      out += " " + round_half_up(r.accuracy, 2) + " | " + round_half_up(r.macro_jaccard, 2) + " | " +
             round_half_up(r.macro_f1, 2) + " |";
    }
    out += "\n";
  }
  return out;
}

struct ParsedTable {
  std::vector<std::string> columns;
  std::vector<std::pair<std::string, std::vector<double>>> rows;  // NaN for "-"
};

/// Reads back a table produced by metrics_table.
inline ParsedTable parse_metrics_table(const std::string& text) {
  auto cells = [](const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 1; i < line.size(); ++i) {
      if (line[i] == '|') {
        const auto b = cur.find_first_not_of(' '), e = cur.find_last_not_of(' ');
        out.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
        cur.clear();
      } else {
        cur += line[i];
      }
    }
    return out;
  };
  std::istringstream in(text);
  std::string line;
  ParsedTable t;
  if (!std::getline(in, line)) throw DataError("metrics table: missing header");
  auto header = cells(line);
  t.columns.assign(header.begin() + 1, header.end());
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto c = cells(line);
    std::vector<double> values;
    for (std::size_t i = 1; i < c.size(); ++i)
      values.push_back(c[i] == "-" ? std::numeric_limits<double>::quiet_NaN() : std::stod(c[i]));
    t.rows.emplace_back(c[0], std::move(values));
  }
  return t;
}

inline constexpr std::string_view kPerClassHeader = "class_id,name,support,precision,recall,f1,jaccard";

/// One row per class with 4-decimal metrics. Names come from `table` when it
/// lists the class.
inline std::string per_class_csv(const MetricsReport& r, const ClassTable& table) {
  std::string out(kPerClassHeader);
  out += '\n';
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    const auto id = static_cast<std::uint16_t>(c);
    out += std::to_string(c) + ',' + csv::quote(table.name_of(id)) + ',' + std::to_string(m.support) + ',' +
           csv::format_fixed(m.precision, 4) + ',' + csv::format_fixed(m.recall, 4) + ',' +
           csv::format_fixed(m.f1, 4) + ',' + csv::format_fixed(m.jaccard, 4) + '\n';
  }
  return out;
}

}  // namespace labelreach
