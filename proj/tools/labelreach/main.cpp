// labelreach command-line driver.

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "labelreach/labelreach.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace labelreach;

namespace {

fs::path resolve(const fs::path& workdir, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : workdir / path;
}

std::string read_text_file(const fs::path& path) {
  const auto bytes = read_bytes(path.string());
  return std::string(bytes.begin(), bytes.end());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

/// Exclusive lock on a workdir, held for the lifetime of the object.
class WorkdirLock {
 public:
  explicit WorkdirLock(const fs::path& workdir) : path_(workdir / ".labelreach.lock") {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      if (errno == EEXIST)
        throw IoError("workdir " + workdir.string() + " is locked by another run (remove " + path_.string() +
                      " if it is stale)");
      throw IoError("cannot create " + path_.string() + ": " + std::strerror(errno));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~WorkdirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  fs::path path_;
};

struct Common {
  std::string config_path;
  std::optional<std::string> workdir;
};

struct PrepFlags {
  std::optional<double> threshold;
  std::optional<std::uint32_t> tile;
  std::optional<double> train_fraction;
  std::optional<double> val_fraction;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> remap;
  std::optional<std::uint32_t> train_rows;

  void attach(CLI::App* cmd) {
    cmd->add_option("--threshold", threshold, "Rare-class fraction threshold");
    cmd->add_option("--tile", tile, "Tile size in pixels");
    cmd->add_option("--train-fraction", train_fraction, "Share of eligible tiles used for training");
    cmd->add_option("--val-fraction", val_fraction, "Share of eligible tiles used for validation");
    cmd->add_option("--split-seed", seed, "Seed of the tile shuffle");
    cmd->add_option("--remap", remap, "Remap CSV keyed by original class ids");
    cmd->add_option("--train-rows", train_rows, "Split only tiles inside rows [0, N)");
  }
  void apply(PrepConfig& p) const {
    if (threshold) p.threshold = *threshold;
    if (tile) p.tile = *tile;
    if (train_fraction) p.fractions.first = *train_fraction;
    if (val_fraction) p.fractions.second = *val_fraction;
    if (seed) p.seed = *seed;
    if (remap) p.remap_path = *remap;
    if (train_rows) p.train_rows = *train_rows;
  }
};

RunConfig load_config(const Common& common) {
  RunConfig cfg = common.config_path.empty() ? RunConfig{} : load_run_config(common.config_path);
  if (common.workdir) cfg.workdir = *common.workdir;
  return cfg;
}

// ---------------------------------------------------------------- synth

struct SynthFlags {
  std::optional<std::uint32_t> width, height, dims, classes, smooth_radius;
  std::optional<std::uint64_t> seed;
  std::optional<double> sep, noise_sigma, drift;
};

int cmd_synth(RunConfig cfg, const SynthFlags& f) {
  auto& s = cfg.synth;
  if (f.width) s.width = *f.width;
  if (f.height) s.height = *f.height;
  if (f.dims) s.dims = *f.dims;
  if (f.classes) s.classes = *f.classes;
  if (f.smooth_radius) s.smooth_radius = *f.smooth_radius;
  if (f.seed) s.seed = *f.seed;
  if (f.sep) s.sep = *f.sep;
  if (f.noise_sigma) s.noise_sigma = *f.noise_sigma;
  if (f.drift) s.drift = *f.drift;
  validate(s);

  const fs::path wd(cfg.workdir);
  ensure_dir(wd);
  WorkdirLock lock(wd);
  const SynthWorld world = generate_world(s);
  const ClassTable table = synth_class_table(world);
  write_grid(world.embeddings, (wd / "embeddings.grd").string());
  write_grid(world.labels, (wd / "labels.grd").string());
  write_class_table(table, (wd / "classes.csv").string());
  GridManifest m;
  m.embedding_path = "embeddings.grd";
  m.label_path = "labels.grd";
  m.class_table_path = "classes.csv";
  m.notes = "synthetic world: " + json(s).dump();
  write_manifest(m, (wd / "manifest.json").string());

  std::cout << "class_id  pixels  fraction\n";
  for (const auto& e : table.entries)
    std::printf("%8u  %6llu  %.4f\n", unsigned{e.class_id}, static_cast<unsigned long long>(e.pixel_count),
                e.fraction);
  return 0;
}

// ---------------------------------------------------------------- convert

struct ConvertFlags {
  std::string input, output;
  std::uint32_t width = 0, height = 0, bands = 1;
  std::string dtype = "f32";
};

int cmd_convert(const RunConfig& cfg, const ConvertFlags& f) {
  if (f.dtype != "f32" && f.dtype != "u16") throw ConfigError("--dtype must be f32 or u16");
  if (f.width == 0 || f.height == 0 || f.bands == 0) throw ConfigError("--width, --height and --bands must be ≥ 1");
  if (f.dtype == "u16" && f.bands != 1) throw ConfigError("u16 label dumps have exactly 1 band");
  const fs::path wd(cfg.workdir);
  ensure_dir(wd);
  WorkdirLock lock(wd);

  const auto in_path = resolve(wd, f.input).string();
  const auto raw = read_bytes(in_path);
  const std::size_t item = f.dtype == "f32" ? 4 : 2;
  const std::size_t expected = std::size_t{f.width} * f.height * f.bands * item;
  if (raw.size() != expected)
    throw DataError(in_path + ": raw dump holds " + std::to_string(raw.size()) + " bytes, expected " +
                    std::to_string(expected));
  std::vector<unsigned char> bytes;
  detail::put_header(bytes, f.width, f.height, f.bands, f.dtype == "f32" ? detail::kDtypeF32 : detail::kDtypeU16);
  bytes.insert(bytes.end(), raw.begin(), raw.end());
  Grid g;
  try {
    g = decode_grid(bytes, in_path);
  } catch (const IoError& e) {
    throw DataError(e.what());
  }
  const auto out_path = resolve(wd, f.output);
  if (out_path.has_parent_path()) ensure_dir(out_path.parent_path());
  write_bytes(out_path.string(), bytes);
  std::cout << "wrote " << out_path.string() << " (" << f.width << "x" << f.height << "x" << f.bands << " "
            << f.dtype << ")\n";
  return 0;
}

// ---------------------------------------------------------------- prep

struct Prepared {
  EmbeddingRaster emb;
  LabelRaster labels;  // dense final ids
  ClassTable classes;
  RemapTable remap;    // original id -> final id
  SplitAssignment split;
  std::uint64_t masked_pixels = 0;
};

Prepared run_prep(const RunConfig& cfg, const fs::path& wd) {
  validate(cfg.prep);
  const GridManifest manifest = read_manifest(resolve(wd, cfg.manifest).string());
  Prepared p;
  p.emb = read_embedding(manifest.embedding_path);
  const LabelRaster raw = read_labels(manifest.label_path);
  validate_pair(p.emb, raw);

  ClassTable table = histogram_classes(raw);
  if (!manifest.class_table_path.empty()) table = with_names(table, read_class_table(manifest.class_table_path));
  const FilterResult filtered = filter_rare_classes(raw, table, cfg.prep.threshold);
  p.remap = filtered.remap;
  if (!cfg.prep.remap_path.empty())
    p.remap = chain_user_remap(filtered.remap, read_remap(resolve(wd, cfg.prep.remap_path).string()));
  p.labels = remap_classes(raw, p.remap);
  p.masked_pixels = filtered.masked_pixels;
  p.classes = histogram_classes(p.labels);
  for (auto& e : p.classes.entries) e.name = p.remap.target_names.at(e.class_id);

  const TileGrid grid = make_tile_grid(p.labels.width, p.labels.height, cfg.prep.tile);
  const auto labeled = has_labels(grid, p.labels);
  const auto rows = within_rows(grid, 0, cfg.prep.train_rows.value_or(p.labels.height));
  p.split = assign_splits(grid, cfg.prep.fractions, cfg.prep.seed,
                          [&](std::size_t t) { return labeled(t) && rows(t); });

  const fs::path dir = wd / "prep";
  ensure_dir(dir);
  write_grid(p.labels, (dir / "labels.grd").string());
  write_class_table(p.classes, (dir / "classes.csv").string());
  write_text((dir / "remap.csv").string(), remap_csv(p.remap));
  write_text((dir / "splits.csv").string(), split_csv(p.split));
  const json info = {{"n_classes", p.classes.size()},
                     {"masked_pixels", p.masked_pixels},
                     {"tiles",
                      {{"train", p.split.count(SplitKind::Train)},
                       {"val", p.split.count(SplitKind::Val)},
                       {"test", p.split.count(SplitKind::Test)},
                       {"excluded", p.split.count(SplitKind::Excluded)}}},
                     {"config", cfg.prep}};
  write_text((dir / "prep.json").string(), info.dump(2) + "\n");
  return p;
}

int cmd_prep(RunConfig cfg, const PrepFlags& f) {
  f.apply(cfg.prep);
  const fs::path wd(cfg.workdir);
  ensure_dir(wd);
  WorkdirLock lock(wd);
  const Prepared p = run_prep(cfg, wd);
  std::cout << p.classes.size() << " classes, " << p.masked_pixels << " pixels masked; tiles train "
            << p.split.count(SplitKind::Train) << ", val " << p.split.count(SplitKind::Val) << ", test "
            << p.split.count(SplitKind::Test) << ", excluded " << p.split.count(SplitKind::Excluded) << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainFlags {
  PrepFlags prep;
  std::optional<std::string> family;
  std::string out = "model.json";
  std::string log = "train_log.csv";
};

std::optional<PixelDataset> extract_if_any(const Prepared& p, SplitKind kind) {
  if (p.split.count(kind) == 0) return std::nullopt;
  return extract_pixels(p.emb, p.labels, p.split, kind, p.classes.size());
}

template <PixelClassifier M>
double dataset_accuracy(const M& m, const PixelDataset& ds) {
  std::vector<double> prob(m.n_classes);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    m.predict_proba(ds.row(i), prob);
    std::size_t best = 0;
    for (std::size_t c = 1; c < prob.size(); ++c)
      if (prob[c] > prob[best]) best = c;
    hits += best == ds.targets[i];
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

std::string log_rows(const std::vector<double>& train, const std::vector<double>& val, std::size_t first_step) {
  std::string out = "step,train_loss,val_loss\n";
  for (std::size_t i = 0; i < train.size(); ++i) {
    out += std::to_string(first_step + i) + ',' + csv::format_double(train[i]) + ',';
    if (i < val.size()) out += csv::format_double(val[i]);
    out += '\n';
  }
  return out;
}

int cmd_train(RunConfig cfg, const TrainFlags& f) {
  f.prep.apply(cfg.prep);
  if (f.family) cfg.family = *f.family;
  const auto family = parse_family(cfg.family);
  if (!family) throw ConfigError("unknown family '" + cfg.family + "' (expected logreg, forest, gbt or context)");
  validate(cfg.train);
  const fs::path wd(cfg.workdir);
  ensure_dir(wd);
  WorkdirLock lock(wd);

  const Prepared p = run_prep(cfg, wd);
  const std::size_t classes = p.classes.size();
  json family_cfg;
  AnyModel model;
  std::string log;
  auto report_pixel = [&](const auto& m, const PixelDataset& train) {
    std::cout << "train accuracy " << csv::format_fixed(dataset_accuracy(m, train), 4);
    if (auto val = extract_if_any(p, SplitKind::Val))
      std::cout << ", val accuracy " << csv::format_fixed(dataset_accuracy(m, *val), 4);
    std::cout << "\n";
  };
  switch (*family) {
    case Family::LogReg: {
      const PixelDataset train = extract_pixels(p.emb, p.labels, p.split, SplitKind::Train, classes);
      auto m = fit_logreg(train, cfg.train.logreg);
      log = log_rows(m.training_history, {}, 0);
      report_pixel(m, train);
      family_cfg = cfg.train.logreg;
      model = std::move(m);
      break;
    }
    case Family::Forest: {
      const PixelDataset train = extract_pixels(p.emb, p.labels, p.split, SplitKind::Train, classes);
      auto m = fit_random_forest(train, cfg.train.forest);
      log = log_rows({}, {}, 0);
      report_pixel(m, train);
      family_cfg = cfg.train.forest;
      model = std::move(m);
      break;
    }
    case Family::Gbt: {
      const PixelDataset train = extract_pixels(p.emb, p.labels, p.split, SplitKind::Train, classes);
      auto m = fit_gbt(train, cfg.train.gbt);
      log = log_rows(m.training_history, {}, 0);
      report_pixel(m, train);
      family_cfg = cfg.train.gbt;
      model = std::move(m);
      break;
    }
    case Family::Context: {
      auto m = fit_context(p.emb, p.labels, p.split, cfg.train.context, classes);
      log = log_rows(m.training_history, m.validation_history, 1);
      std::cout << "best epoch " << m.best_epoch << " of " << m.training_history.size() << "\n";
      family_cfg = cfg.train.context;
      model = std::move(m);
      break;
    }
  }

  json names = json::array();
  for (const auto& e : p.classes.entries) names.push_back(e.name);
  const json config = {{"family", cfg.family}, {"model", family_cfg}, {"prep", cfg.prep}, {"class_names", names}};
  const auto out = resolve(wd, f.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  save_model(model, out.string(), config);
  const auto log_path = resolve(wd, f.log);
  if (log_path.has_parent_path()) ensure_dir(log_path.parent_path());
  write_text(log_path.string(), log);
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- infer

struct InferFlags {
  std::string model = "model.json";
  std::optional<std::string> region;
  std::optional<std::uint32_t> stride;
  std::optional<std::string> mask;
  std::string out_dir = ".";
};

int cmd_infer(RunConfig cfg, const InferFlags& f) {
  if (f.stride) cfg.stride = *f.stride;
  const fs::path wd(cfg.workdir);
  ensure_dir(wd);
  WorkdirLock lock(wd);

  const AnyModel model = load_model(resolve(wd, f.model).string());
  const auto region = resolve(wd, f.region.value_or(cfg.manifest));
  const EmbeddingRaster emb = region.extension() == ".json"
                                  ? read_embedding(read_manifest(region.string()).embedding_path)
                                  : read_embedding(region.string());
  check_compatible(model, emb);
  std::optional<LabelRaster> mask;
  if (f.mask) mask = read_labels(resolve(wd, *f.mask).string());

  const ProbabilityRaster probs = predict_raster(model, emb, cfg.stride, mask ? &*mask : nullptr);
  const LabelRaster pred = argmax_map(probs);
  const fs::path dir = resolve(wd, f.out_dir);
  ensure_dir(dir);
  write_grid(to_grid(probs), (dir / "probs.grd").string());
  write_bytes((dir / "probs.valid").string(), encode_validity(probs));
  write_grid(pred, (dir / "predicted.grd").string());
  write_bytes((dir / "map.ppm").string(), render_class_map(pred, default_palette(model_classes(model))));
  std::cout << "wrote " << (dir / "predicted.grd").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
  std::string pred = "predicted.grd";
  std::string truth = "prep/labels.grd";
  std::string classes = "prep/classes.csv";
  std::optional<std::string> bands;
  std::string split = "all";
  std::string splits = "prep/splits.csv";
  std::string name = "model";
  std::string out_dir = ".";
};

std::vector<std::uint32_t> parse_edges(const std::string& text) {
  std::vector<std::uint32_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::uint32_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("--bands: '" + item + "' is not a row index");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

/// Masks truth pixels outside tiles of the chosen split kind.
LabelRaster restrict_to_split(LabelRaster truth, const SplitAssignment& split, SplitKind kind) {
  const TileGrid& g = split.grid;
  for (std::size_t t = 0; t < g.count(); ++t) {
    if (split.kinds[t] == kind) continue;
    for (std::uint32_t y = g.y0(t); y < g.y1(t); ++y)
      for (std::uint32_t x = g.x0(t); x < g.x1(t); ++x) truth.at(y, x) = kNodata;
  }
  return truth;
}

int cmd_eval(RunConfig cfg, const EvalFlags& f) {
  if (f.bands) cfg.bands = parse_edges(*f.bands);
  const fs::path wd(cfg.workdir);
  ensure_dir(wd);
  WorkdirLock lock(wd);

  const LabelRaster pred = read_labels(resolve(wd, f.pred).string());
  LabelRaster truth = read_labels(resolve(wd, f.truth).string());
  if (pred.width != truth.width || pred.height != truth.height)
    throw DataError("eval: prediction is " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                    ", truth is " + std::to_string(truth.width) + "x" + std::to_string(truth.height));
  if (f.split != "all") {
    const SplitKind kind = parse_split_kind(f.split);
    std::uint32_t tile = cfg.prep.tile;
    const auto prep_info = wd / "prep" / "prep.json";
    if (fs::exists(prep_info)) tile = json::parse(read_text_file(prep_info)).at("config").at("tile").get<std::uint32_t>();
    const TileGrid grid = make_tile_grid(truth.width, truth.height, tile);
    truth = restrict_to_split(std::move(truth), read_splits(resolve(wd, f.splits).string(), grid), kind);
  }

  ClassTable table;
  const auto table_path = resolve(wd, f.classes);
  if (fs::exists(table_path)) table = read_class_table(table_path.string());
  std::size_t classes = std::max(class_count(truth), class_count(pred));
  if (!table.entries.empty()) classes = std::max<std::size_t>(classes, table.entries.back().class_id + 1u);

  const ConfusionMatrix cm = confusion(truth, pred, classes);
  const MetricsReport rep = report(cm);
  const fs::path dir = resolve(wd, f.out_dir);
  ensure_dir(dir);
  json metrics = to_json(rep);
  metrics["model"] = f.name;
  metrics["split"] = f.split;
  write_text((dir / "metrics.json").string(), metrics.dump(2) + "\n");
  write_text((dir / "confusion.csv").string(), confusion_csv(cm));
  write_text((dir / "per_class.csv").string(), per_class_csv(rep, table));
  write_text((dir / "metrics_table.md").string(), metrics_table({{f.name, f.split, rep}}));
  std::cout << "accuracy " << csv::format_fixed(rep.accuracy, 4) << ", macro J "
            << csv::format_fixed(rep.macro_jaccard, 4) << ", macro F1 " << csv::format_fixed(rep.macro_f1, 4)
            << " over " << rep.total << " pixels\n";

  if (!cfg.bands.empty()) {
    const auto band_of = assign_bands(truth.height, BandSpec{cfg.bands});
    const auto reports = evaluate_by_band(truth, pred, band_of, classes);
    json bands = json::array();
    for (std::size_t b = 0; b < reports.size(); ++b) {
      json r = to_json(reports[b]);
      r["rows"] = {cfg.bands[b], cfg.bands[b + 1]};
      bands.push_back(r);
      std::cout << "band " << b << " rows [" << cfg.bands[b] << ", " << cfg.bands[b + 1] << "): accuracy "
                << (reports[b].empty ? std::string("n/a") : csv::format_fixed(reports[b].accuracy, 4)) << "\n";
    }
    write_text((dir / "band_reports.json").string(),
               json{{"model", f.name}, {"edges", cfg.bands}, {"bands", bands}}.dump(2) + "\n");
  }
  return 0;
}

// ---------------------------------------------------------------- report

struct ReportFlags {
  std::vector<std::string> runs;
  std::string out = "report.md";
};

int cmd_report(const RunConfig& cfg, const ReportFlags& f) {
  if (f.runs.empty()) throw ConfigError("report: pass at least one --runs directory");
  const fs::path wd(cfg.workdir);
  ensure_dir(wd);
  WorkdirLock lock(wd);

  std::vector<TableRow> rows;
  std::string band_section;
  std::vector<std::uint32_t> last_edges;
  for (const auto& run : f.runs) {
    const fs::path dir = resolve(wd, run);
    json m;
    try {
      m = json::parse(read_text_file(dir / "metrics.json"));
      rows.push_back({m.value("model", run), m.value("split", std::string("all")), report_from_json(m)});
    } catch (const json::exception& e) {
      throw DataError((dir / "metrics.json").string() + ": " + e.what());
    }
    const auto band_path = dir / "band_reports.json";
    if (!fs::exists(band_path)) continue;
    const json b = json::parse(read_text_file(band_path));
    const auto edges = b.at("edges").get<std::vector<std::uint32_t>>();
    if (edges != last_edges) {
      band_section += (band_section.empty() ? "" : "\n") + std::string("| Model |");
      std::string rule = "|---|";
      for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        band_section += " rows " + std::to_string(edges[i]) + "-" + std::to_string(edges[i + 1]) + " |";
        rule += "---|";
      }
      band_section += "\n" + rule + "\n";
      last_edges = edges;
    }
    band_section += "| " + rows.back().model + " |";
    for (const auto& band : b.at("bands"))
      band_section += band.at("empty").get<bool>() ? " - |" : " " + round_half_up(band.at("accuracy").get<double>(), 4) + " |";
    band_section += "\n";
  }

  std::string text = "# Run report\n\n## Metrics\n\n" + metrics_table(rows);
  if (!band_section.empty()) text += "\n## Accuracy by row band\n\nBands are ordered by distance from the training rows.\n\n" + band_section;
  const auto out = resolve(wd, f.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  write_text(out.string(), text);
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train, apply and evaluate land-cover classifiers on embedding rasters."};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--workdir", common.workdir, "Working directory; relative paths resolve against it");

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic world");
  synth_cmd->add_option("--width", synth.width);
  synth_cmd->add_option("--height", synth.height);
  synth_cmd->add_option("--dims", synth.dims, "Embedding bands");
  synth_cmd->add_option("--classes", synth.classes);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--smooth-radius", synth.smooth_radius);
  synth_cmd->add_option("--sep", synth.sep, "Distance of class means from the origin");
  synth_cmd->add_option("--noise-sigma", synth.noise_sigma);
  synth_cmd->add_option("--drift", synth.drift, "Mean shift reached at the last row");

  ConvertFlags convert;
  auto* convert_cmd = app.add_subcommand("convert", "Wrap a raw little-endian dump as GRD1");
  convert_cmd->add_option("--input", convert.input, "Headerless band-planar dump")->required();
  convert_cmd->add_option("--output", convert.output, "GRD1 output path")->required();
  convert_cmd->add_option("--width", convert.width)->required();
  convert_cmd->add_option("--height", convert.height)->required();
  convert_cmd->add_option("--bands", convert.bands);
  convert_cmd->add_option("--dtype", convert.dtype, "f32 (embeddings) or u16 (labels)");

  PrepFlags prep;
  auto* prep_cmd = app.add_subcommand("prep", "Filter, remap, tile and split the labels");
  prep.attach(prep_cmd);

  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "Prepare the dataset and fit a model");
  train.prep.attach(train_cmd);
  train_cmd->add_option("--family", train.family, "logreg, forest, gbt or context");
  train_cmd->add_option("--out", train.out, "Model file");
  train_cmd->add_option("--log", train.log, "Training log CSV");

  InferFlags infer;
  auto* infer_cmd = app.add_subcommand("infer", "Predict probabilities and a class map");
  infer_cmd->add_option("--model", infer.model);
  infer_cmd->add_option("--region", infer.region, "Embedding GRD1 or manifest JSON");
  infer_cmd->add_option("--stride", infer.stride, "Tile stride for context models (0 = tile/2)");
  infer_cmd->add_option("--mask", infer.mask, "Label grid whose nodata pixels are skipped");
  infer_cmd->add_option("--out-dir", infer.out_dir);

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a predicted class map");
  eval_cmd->add_option("--pred", eval.pred);
  eval_cmd->add_option("--truth", eval.truth);
  eval_cmd->add_option("--classes", eval.classes, "Class table CSV used for names and class count");
  eval_cmd->add_option("--bands", eval.bands, "Comma-separated row edges, e.g. 64,85,106,128");
  eval_cmd->add_option("--split", eval.split, "all, train, val, test or excluded");
  eval_cmd->add_option("--splits", eval.splits, "Split CSV written by prep");
  eval_cmd->add_option("--name", eval.name, "Model name shown in tables");
  eval_cmd->add_option("--out-dir", eval.out_dir);

  ReportFlags rep;
  auto* report_cmd = app.add_subcommand("report", "Combine evaluated runs into a markdown report");
  report_cmd->add_option("--runs", rep.runs, "Directories holding metrics.json")->expected(1, -1);
  report_cmd->add_option("--out", rep.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::Config);
  }

  try {
    const RunConfig cfg = load_config(common);
    if (*synth_cmd) return cmd_synth(cfg, synth);
    if (*convert_cmd) return cmd_convert(cfg, convert);
    if (*prep_cmd) return cmd_prep(cfg, prep);
    if (*train_cmd) return cmd_train(cfg, train);
    if (*infer_cmd) return cmd_infer(cfg, infer);
    if (*eval_cmd) return cmd_eval(cfg, eval);
    if (*report_cmd) return cmd_report(cfg, rep);
  } catch (const Error& e) {
    std::cerr << "labelreach: error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "labelreach: error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::Io);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "labelreach: error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::Data);
  }
  return static_cast<int>(ErrorKind::Config);
}
