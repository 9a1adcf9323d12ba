#pragma once

// Grid data model and the GRD1 binary raster format.
//
// GRD1 layout (all integers little-endian):
//   offset 0   "GRD1"
//   offset 4   u32 version (= 1)
//   offset 8   u32 width
//   offset 12  u32 height
//   offset 16  u32 bands
//   offset 20  u8  dtype (0 = f32, 1 = u16), then 3 zero bytes
//   offset 24  payload
// f32 payloads are band-sequential planes of row-major pixels; u16 payloads
// are a single row-major plane.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "labelreach/csv.hpp"
#include "labelreach/error.hpp"

namespace labelreach {

inline constexpr std::uint16_t kNodata = 0xFFFF;

struct EmbeddingRaster {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t bands = 0;
  std::vector<float> values;  // band-sequential planar

  EmbeddingRaster() = default;
  EmbeddingRaster(std::uint32_t w, std::uint32_t h, std::uint32_t d)
      : width(w), height(h), bands(d), values(std::size_t{w} * h * d, 0.0f) {}

  std::size_t pixels() const { return std::size_t{width} * height; }
  float at(std::uint32_t band, std::uint32_t row, std::uint32_t col) const {
    return values[band * pixels() + std::size_t{row} * width + col];
  }
  float& at(std::uint32_t band, std::uint32_t row, std::uint32_t col) {
    return values[band * pixels() + std::size_t{row} * width + col];
  }
  std::span<const float> plane(std::uint32_t band) const {
    return std::span<const float>(values).subspan(band * pixels(), pixels());
  }

  bool operator==(const EmbeddingRaster&) const = default;
};

struct LabelRaster {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint16_t> ids;  // row-major

  LabelRaster() = default;
  LabelRaster(std::uint32_t w, std::uint32_t h, std::uint16_t fill = kNodata)
      : width(w), height(h), ids(std::size_t{w} * h, fill) {}

  std::size_t pixels() const { return std::size_t{width} * height; }
  std::uint16_t at(std::uint32_t row, std::uint32_t col) const { return ids[std::size_t{row} * width + col]; }
  std::uint16_t& at(std::uint32_t row, std::uint32_t col) { return ids[std::size_t{row} * width + col]; }

  bool operator==(const LabelRaster&) const = default;
};

struct ClassEntry {
  std::uint16_t class_id = 0;
  std::string name;
  std::uint64_t pixel_count = 0;
  double fraction = 0.0;

  bool operator==(const ClassEntry&) const = default;
};

struct ClassTable {
  std::vector<ClassEntry> entries;  // ascending class_id

  std::size_t size() const { return entries.size(); }
  bool contains(std::uint16_t id) const {
    return std::ranges::binary_search(entries, id, {}, &ClassEntry::class_id);
  }
  std::string name_of(std::uint16_t id) const {
    for (const auto& e : entries)
      if (e.class_id == id) return e.name;
    return "class_" + std::to_string(id);
  }

  bool operator==(const ClassTable&) const = default;
};

struct GridManifest {
  std::string embedding_path;
  std::string label_path;
  double resolution_m = 500.0;
  std::string class_table_path;
  std::string notes;

  bool operator==(const GridManifest&) const = default;
};

using Grid = std::variant<EmbeddingRaster, LabelRaster>;

namespace detail {

inline constexpr char kMagic[4] = {'G', 'R', 'D', '1'};
inline constexpr std::size_t kHeaderBytes = 24;
inline constexpr std::uint8_t kDtypeF32 = 0;
inline constexpr std::uint8_t kDtypeU16 = 1;

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

inline void put_header(std::vector<unsigned char>& out, std::uint32_t w, std::uint32_t h, std::uint32_t bands,
                       std::uint8_t dtype) {
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, 1);
  put_u32(out, w);
  put_u32(out, h);
  put_u32(out, bands);
  out.push_back(dtype);
  out.insert(out.end(), 3, 0);
}

}  // namespace detail

inline void check_invariants(const EmbeddingRaster& r) {
  if (r.values.size() != std::size_t{r.width} * r.height * r.bands)
    throw DataError("embedding raster holds " + std::to_string(r.values.size()) + " values, expected " +
                    std::to_string(std::size_t{r.width} * r.height * r.bands));
  for (float v : r.values)
    if (!std::isfinite(v)) throw DataError("embedding raster contains a non-finite value");
}

inline void check_invariants(const LabelRaster& r) {
  if (r.ids.size() != r.pixels())
    throw DataError("label raster holds " + std::to_string(r.ids.size()) + " ids, expected " +
                    std::to_string(r.pixels()));
}

/// Serializes a raster to GRD1 bytes.
inline std::vector<unsigned char> encode_grid(const EmbeddingRaster& r) {
  check_invariants(r);
  std::vector<unsigned char> out;
  out.reserve(detail::kHeaderBytes + r.values.size() * 4);
  detail::put_header(out, r.width, r.height, r.bands, detail::kDtypeF32);
  for (float v : r.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline std::vector<unsigned char> encode_grid(const LabelRaster& r) {
  check_invariants(r);
  std::vector<unsigned char> out;
  out.reserve(detail::kHeaderBytes + r.ids.size() * 2);
  detail::put_header(out, r.width, r.height, 1, detail::kDtypeU16);
  for (std::uint16_t v : r.ids) detail::put_u16(out, v);
  return out;
}

inline Grid decode_grid(std::span<const unsigned char> bytes, const std::string& origin = "<memory>") {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), detail::kMagic, 4) != 0)
    throw IoError(origin + ": not a GRD1 file");
  if (bytes.size() < detail::kHeaderBytes) throw IoError(origin + ": truncated header");
  const unsigned char* p = bytes.data();
  const std::uint32_t version = detail::get_u32(p + 4);
  if (version != 1) throw IoError(origin + ": unsupported GRD1 version " + std::to_string(version));
  const std::uint32_t w = detail::get_u32(p + 8);
  const std::uint32_t h = detail::get_u32(p + 12);
  const std::uint32_t bands = detail::get_u32(p + 16);
  const std::uint8_t dtype = p[20];
  const std::size_t payload = bytes.size() - detail::kHeaderBytes;
  const unsigned char* data = p + detail::kHeaderBytes;

  if (dtype == detail::kDtypeF32) {
    const std::size_t n = std::size_t{w} * h * bands;
    if (payload < n * 4) throw IoError(origin + ": truncated payload");
    if (payload > n * 4) throw IoError(origin + ": trailing bytes after payload");
    EmbeddingRaster r;
    r.width = w;
    r.height = h;
    r.bands = bands;
    r.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) r.values[i] = std::bit_cast<float>(detail::get_u32(data + 4 * i));
    for (float v : r.values)
      if (!std::isfinite(v)) throw IoError(origin + ": non-finite value in payload");
    return r;
  }
  if (dtype == detail::kDtypeU16) {
    if (bands != 1) throw IoError(origin + ": u16 grids must have exactly 1 band");
    const std::size_t n = std::size_t{w} * h;
    if (payload < n * 2) throw IoError(origin + ": truncated payload");
    if (payload > n * 2) throw IoError(origin + ": trailing bytes after payload");
    LabelRaster r;
    r.width = w;
    r.height = h;
    r.ids.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      r.ids[i] = static_cast<std::uint16_t>(data[2 * i] | (data[2 * i + 1] << 8));
    return r;
  }
  throw IoError(origin + ": unsupported dtype " + std::to_string(dtype));
}

inline std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

inline void write_bytes(const std::string& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write error: cannot open " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write error: " + path);
}

inline void write_text(const std::string& path, std::string_view text) {
  write_bytes(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

template <typename Raster>
void write_grid(const Raster& raster, const std::string& path) {
  write_bytes(path, encode_grid(raster));
}

inline Grid read_grid(const std::string& path) { return decode_grid(read_bytes(path), path); }

inline EmbeddingRaster read_embedding(const std::string& path) {
  auto g = read_grid(path);
  if (auto* r = std::get_if<EmbeddingRaster>(&g)) return std::move(*r);
  throw DataError(path + ": expected an f32 embedding grid, found u16 labels");
}

inline LabelRaster read_labels(const std::string& path) {
  auto g = read_grid(path);
  if (auto* r = std::get_if<LabelRaster>(&g)) return std::move(*r);
  throw DataError(path + ": expected a u16 label grid, found f32 values");
}

/// Checks that an embedding and label raster are co-registered.
inline void validate_pair(const EmbeddingRaster& emb, const LabelRaster& labels) {
  if (emb.width != labels.width || emb.height != labels.height)
    throw DataError("dimension mismatch: embeddings " + std::to_string(emb.width) + "x" +
                    std::to_string(emb.height) + "x" + std::to_string(emb.bands) + " vs labels " +
                    std::to_string(labels.width) + "x" + std::to_string(labels.height));
}

// ClassTable CSV: class_id,name,pixel_count,fraction

inline constexpr std::string_view kClassTableHeader = "class_id,name,pixel_count,fraction";

inline std::string class_table_csv(const ClassTable& table) {
  std::string out(kClassTableHeader);
  out += '\n';
  for (const auto& e : table.entries) {
    out += std::to_string(e.class_id) + ',' + csv::quote(e.name) + ',' + std::to_string(e.pixel_count) + ',' +
           csv::format_double(e.fraction) + '\n';
  }
  return out;
}

inline void write_class_table(const ClassTable& table, const std::string& path) {
  write_text(path, class_table_csv(table));
}

inline ClassTable read_class_table(const std::string& path) {
  ClassTable table;
  for (const auto& row : csv::read(path, kClassTableHeader)) {
    if (row.size() != 4) throw DataError(path + ": class table rows need 4 fields");
    ClassEntry e;
    e.class_id = static_cast<std::uint16_t>(std::stoul(row[0]));
    e.name = row[1];
    e.pixel_count = std::stoull(row[2]);
    e.fraction = std::stod(row[3]);
    table.entries.push_back(std::move(e));
  }
  for (std::size_t i = 1; i < table.entries.size(); ++i)
    if (table.entries[i].class_id <= table.entries[i - 1].class_id)
      throw DataError(path + ": class ids must be unique and ascending");
  return table;
}

inline void to_json(nlohmann::json& j, const GridManifest& m) {
  j = nlohmann::json{{"embedding_path", m.embedding_path},
                     {"label_path", m.label_path},
                     {"resolution_m", m.resolution_m},
                     {"class_table_path", m.class_table_path},
                     {"notes", m.notes}};
}

inline void from_json(const nlohmann::json& j, GridManifest& m) {
  j.at("embedding_path").get_to(m.embedding_path);
  j.at("label_path").get_to(m.label_path);
  m.resolution_m = j.value("resolution_m", 500.0);
  m.class_table_path = j.value("class_table_path", std::string{});
  m.notes = j.value("notes", std::string{});
}

inline void write_manifest(const GridManifest& m, const std::string& path) {
  write_text(path, nlohmann::json(m).dump(2) + "\n");
}

/// Reads a manifest; relative paths inside it resolve against its directory.
inline GridManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  GridManifest m;
  try {
    m = nlohmann::json::parse(in).get<GridManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad manifest: " + e.what());
  }
  const auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).string();
  };
  resolve(m.embedding_path);
  resolve(m.label_path);
  resolve(m.class_table_path);
  for (const auto* p : {&m.embedding_path, &m.label_path})
    if (!std::filesystem::exists(*p)) throw IoError(path + ": referenced file missing: " + *p);
  return m;
}

}  // namespace labelreach
