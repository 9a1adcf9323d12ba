#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "labelreach/labelreach.hpp"
#include "support.hpp"

namespace lr = labelreach;
using lr::testing::TempDir;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr
};

Run cli(const std::string& args) {
  const std::string cmd = "'" LABELREACH_CLI "' " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  const auto b = lr::read_bytes(p.string());
  return std::string(b.begin(), b.end());
}

std::string wd(const TempDir& d) { return "--workdir '" + d.path().string() + "'"; }

/// Runs synth + train + infer in `d`; returns false on any non-zero exit.
bool pipeline(const TempDir& d, const std::string& family, const std::string& synth_flags = "") {
  return cli("synth " + wd(d) + " " + synth_flags).code == 0 &&
         cli("train " + wd(d) + " --family " + family).code == 0 && cli("infer " + wd(d)).code == 0;
}

}  // namespace

TEST(CliSynth, DefaultsWriteFourFilesDeterministically) {
  TempDir a("cli_synth_a"), b("cli_synth_b");
  const auto ra = cli("synth " + wd(a));
  ASSERT_EQ(ra.code, 0) << ra.output;
  EXPECT_NE(ra.output.find("0.1989"), std::string::npos);
  ASSERT_EQ(cli("synth " + wd(b)).code, 0);
  for (const char* f : {"embeddings.grd", "labels.grd", "classes.csv", "manifest.json"}) {
    ASSERT_TRUE(std::filesystem::exists(a.path() / f)) << f;
    EXPECT_EQ(slurp(a.path() / f), slurp(b.path() / f)) << f;
  }
  EXPECT_FALSE(std::filesystem::exists(a.path() / ".labelreach.lock"));
}

TEST(CliSynth, CheckedInDefaultConfigMatchesBuiltInDefaults) {
  TempDir a("cli_cfg_a"), b("cli_cfg_b");
  ASSERT_EQ(cli("--config '" LABELREACH_CONFIGS "/default.json' synth " + wd(a)).code, 0);
  ASSERT_EQ(cli("synth " + wd(b)).code, 0);
  EXPECT_EQ(slurp(a.path() / "embeddings.grd"), slurp(b.path() / "embeddings.grd"));
  EXPECT_EQ(slurp(a.path() / "labels.grd"), slurp(b.path() / "labels.grd"));
}

TEST(CliSynth, ClassesOneIsAConfigError) {
  TempDir d("cli_c1");
  const auto r = cli("synth " + wd(d) + " --classes 1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("classes must be ≥ 2"), std::string::npos) << r.output;
}

TEST(CliConfig, UnknownKeysAndBadFlagsExitTwo) {
  TempDir d("cli_keys");
  for (const std::string doc : {R"({"synth": {"widht": 3}})", R"({"train": {"forest": {"trees": 3}}})",
                                R"({"extra": {}})", R"({"prep": {"tile": -4}})", R"({"synth": {"sep": "far"}})"}) {
    lr::write_text(d.file("c.json"), doc);
    const auto r = cli("--config '" + d.file("c.json") + "' synth " + wd(d));
    EXPECT_EQ(r.code, 2) << doc << "\n" << r.output;
  }
  lr::write_text(d.file("c.json"), "{not json");
  EXPECT_EQ(cli("--config '" + d.file("c.json") + "' synth " + wd(d)).code, 2);
  EXPECT_EQ(cli("synth --no-such-flag").code, 2);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST(CliConfig, ConfigValuesApplyAndFlagsWin) {
  TempDir d("cli_override");
  lr::write_text(d.file("c.json"), R"({"synth": {"width": 40, "height": 30, "dims": 3}})");
  ASSERT_EQ(cli("--config '" + d.file("c.json") + "' synth " + wd(d) + " --height 20").code, 0);
  const auto emb = lr::read_embedding(d.file("embeddings.grd"));
  EXPECT_EQ(emb.width, 40u);
  EXPECT_EQ(emb.height, 20u);
  EXPECT_EQ(emb.bands, 3u);
}

TEST(CliLock, HeldLockIsAnIoError) {
  TempDir d("cli_lock");
  lr::write_text(d.file(".labelreach.lock"), "1\n");
  const auto r = cli("synth " + wd(d));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("locked"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(d.path() / "labels.grd"));
}

TEST(CliConvert, RawDumpsBecomeGrd1) {
  TempDir d("cli_convert");
  const auto emb = lr::testing::random_embedding(5, 3, 2, 1);
  const auto grd = lr::encode_grid(emb);
  lr::write_bytes(d.file("raw.f32"), std::span(grd).subspan(24));
  ASSERT_EQ(cli("convert " + wd(d) + " --input raw.f32 --output out/emb.grd --width 5 --height 3 --bands 2").code, 0);
  EXPECT_EQ(lr::read_bytes(d.file("out/emb.grd")), grd);

  const auto labels = lr::testing::random_labels(4, 4, 7, 0.3, 2);
  const auto lgrd = lr::encode_grid(labels);
  lr::write_bytes(d.file("raw.u16"), std::span(lgrd).subspan(24));
  ASSERT_EQ(cli("convert " + wd(d) + " --input raw.u16 --output l.grd --width 4 --height 4 --dtype u16").code, 0);
  EXPECT_EQ(lr::read_labels(d.file("l.grd")), labels);

  EXPECT_EQ(cli("convert " + wd(d) + " --input raw.f32 --output x.grd --width 5 --height 3 --bands 3").code, 3);
  EXPECT_EQ(cli("convert " + wd(d) + " --input missing --output x.grd --width 1 --height 1").code, 1);
  EXPECT_EQ(cli("convert " + wd(d) + " --input raw.u16 --output x.grd --width 4 --height 4 --dtype i8").code, 2);
}

TEST(CliPrep, UserRemapCollapsesClasses) {
  TempDir d("cli_remap");
  // 17 source classes on a 68 x 64 grid, four columns each.
  lr::LabelRaster labels(68, 64, 0);
  for (std::uint32_t y = 0; y < 64; ++y)
    for (std::uint32_t x = 0; x < 68; ++x) labels.at(y, x) = static_cast<std::uint16_t>(x / 4);
  lr::write_grid(labels, d.file("labels.grd"));
  lr::write_grid(lr::testing::random_embedding(68, 64, 3, 3), d.file("emb.grd"));
  lr::write_manifest({"emb.grd", "labels.grd", 30.0, "", ""}, d.file("manifest.json"));
  const auto r = cli("prep " + wd(d) + " --tile 16 --remap '" LABELREACH_FIXTURES "/evtphys_remap.csv'");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto table = lr::read_class_table(d.file("prep/classes.csv"));
  EXPECT_EQ(table.size(), 13u);
  const auto remap = lr::read_remap(d.file("prep/remap.csv"));
  EXPECT_EQ(remap.pairs.size(), 17u);
  // The five developed classes share one target.
  for (std::uint16_t src = 3; src <= 6; ++src) EXPECT_EQ(remap.pairs.at(src), remap.pairs.at(2));
  const auto prepared = lr::read_labels(d.file("prep/labels.grd"));
  EXPECT_EQ(lr::class_count(prepared), 13u);
  const auto info = json::parse(slurp(d.path() / "prep/prep.json"));
  EXPECT_EQ(info.at("tiles").at("train").get<int>() + info.at("tiles").at("val").get<int>(), 5 * 4);
}

TEST(CliTrain, LogregWritesTaggedModel) {
  TempDir d("cli_logreg");
  ASSERT_EQ(cli("synth " + wd(d)).code, 0);
  const auto r = cli("train " + wd(d) + " --family logreg");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto m = json::parse(slurp(d.path() / "model.json"));
  EXPECT_EQ(m.at("family"), "logreg");
  EXPECT_EQ(m.at("n_features"), 8);
  EXPECT_EQ(m.at("n_classes"), 5);
  EXPECT_EQ(m.at("config").at("class_names").size(), 5u);
  EXPECT_TRUE(std::filesystem::exists(d.path() / "train_log.csv"));
}

TEST(CliTrain, UnknownFamilyAndDegenerateData) {
  TempDir d("cli_family");
  ASSERT_EQ(cli("synth " + wd(d) + " --classes 2").code, 0);
  EXPECT_EQ(cli("train " + wd(d) + " --family svm").code, 2);
  // At threshold 0.5 only the majority class of a two-class world survives.
  const auto r = cli("train " + wd(d) + " --family logreg --threshold 0.5");
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_EQ(cli("train " + wd(TempDir("cli_empty")) + " --family logreg").code, 1);
}

TEST(CliTrain, ForestRerunIsIdentical) {
  TempDir d("cli_forest");
  ASSERT_EQ(cli("synth " + wd(d) + " --width 64 --height 64").code, 0);
  ASSERT_EQ(cli("train " + wd(d) + " --family forest --tile 32 --out a.json").code, 0);
  ASSERT_EQ(cli("train " + wd(d) + " --family forest --tile 32 --out b.json").code, 0);
  EXPECT_EQ(slurp(d.path() / "a.json"), slurp(d.path() / "b.json"));
}

TEST(CliTrain, GbtLogIsMonotone) {
  TempDir d("cli_gbt");
  ASSERT_EQ(cli("synth " + wd(d) + " --noise-sigma 1.5").code, 0);
  ASSERT_EQ(cli("train " + wd(d) + " --family gbt").code, 0);
  std::istringstream log(slurp(d.path() / "train_log.csv"));
  std::string line;
  std::getline(log, line);
  EXPECT_EQ(line, "step,train_loss,val_loss");
  std::vector<double> loss;
  while (std::getline(log, line)) loss.push_back(std::stod(lr::csv::split(line).at(1)));
  ASSERT_EQ(loss.size(), 101u);
  for (std::size_t i = 1; i < loss.size(); ++i) EXPECT_LE(loss[i], loss[i - 1] + 1e-9) << i;
  EXPECT_LT(loss.back(), 0.5 * loss.front());
}

TEST(CliTrain, ContextLogCarriesValidationLoss) {
  TempDir d("cli_context");
  ASSERT_EQ(cli("synth " + wd(d) + " --width 64 --height 64").code, 0);
  lr::write_text(d.file("c.json"), R"({"train": {"context": {"epochs": 20}}})");
  ASSERT_EQ(cli("--config '" + d.file("c.json") + "' train " + wd(d) + " --family context --tile 32").code, 0);
  const auto log = lr::csv::read(d.file("train_log.csv"), "step,train_loss,val_loss");
  ASSERT_EQ(log.size(), 20u);
  EXPECT_EQ(log[0][0], "1");
  EXPECT_FALSE(log[0][2].empty());
}

TEST(CliInfer, PixelModelOutputIgnoresStride) {
  TempDir d("cli_stride");
  ASSERT_TRUE(pipeline(d, "logreg", "--width 96 --height 80"));
  ASSERT_EQ(cli("infer " + wd(d) + " --stride 8 --out-dir s8").code, 0);
  ASSERT_EQ(cli("infer " + wd(d) + " --stride 64 --out-dir s64").code, 0);
  EXPECT_EQ(slurp(d.path() / "s8/probs.grd"), slurp(d.path() / "s64/probs.grd"));
  EXPECT_EQ(slurp(d.path() / "s8/predicted.grd"), slurp(d.path() / "predicted.grd"));
  for (const char* f : {"probs.grd", "probs.valid", "predicted.grd", "map.ppm"})
    EXPECT_TRUE(std::filesystem::exists(d.path() / f)) << f;
  EXPECT_EQ(lr::read_bytes(d.file("probs.valid")).size(), (96u * 80 + 7) / 8);
}

TEST(CliInfer, ContextModelHonoursStride) {
  TempDir d("cli_ctx_stride");
  ASSERT_EQ(cli("synth " + wd(d) + " --width 64 --height 64 --noise-sigma 2").code, 0);
  lr::write_text(d.file("c.json"), R"({"train": {"context": {"epochs": 10}}})");
  ASSERT_EQ(cli("--config '" + d.file("c.json") + "' train " + wd(d) + " --family context --tile 32").code, 0);
  ASSERT_EQ(cli("infer " + wd(d) + " --stride 32 --out-dir a").code, 0);
  ASSERT_EQ(cli("infer " + wd(d) + " --stride 8 --out-dir b").code, 0);
  EXPECT_NE(slurp(d.path() / "a/probs.grd"), slurp(d.path() / "b/probs.grd"));
}

TEST(CliInfer, BandMismatchIsRefusedByTheModelTag) {
  TempDir d("cli_tag"), other("cli_tag_other");
  ASSERT_EQ(cli("synth " + wd(d) + " --width 32 --height 32").code, 0);
  ASSERT_EQ(cli("train " + wd(d) + " --family logreg --tile 16").code, 0);
  ASSERT_EQ(cli("synth " + wd(other) + " --width 32 --height 32 --dims 4").code, 0);
  const auto r = cli("infer " + wd(d) + " --region '" + other.file("embeddings.grd") + "'");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("model tag mismatch"), std::string::npos) << r.output;
}

TEST(CliInfer, NoiseFreeWorldReproducesLabels) {
  TempDir d("cli_noisefree");
  ASSERT_TRUE(pipeline(d, "logreg", "--noise-sigma 0"));
  EXPECT_EQ(lr::read_labels(d.file("predicted.grd")), lr::read_labels(d.file("prep/labels.grd")));
}

TEST(CliEval, PerfectPredictionScoresOne) {
  TempDir d("cli_perfect");
  ASSERT_EQ(cli("synth " + wd(d) + " --width 48 --height 48").code, 0);
  const auto r = cli("eval " + wd(d) + " --pred labels.grd --truth labels.grd --name oracle");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto m = json::parse(slurp(d.path() / "metrics.json"));
  EXPECT_EQ(m.at("accuracy").get<double>(), 1.0);
  EXPECT_EQ(m.at("macro_f1").get<double>(), 1.0);
  EXPECT_EQ(m.at("macro_jaccard").get<double>(), 1.0);
  EXPECT_NE(slurp(d.path() / "metrics_table.md").find("| oracle | 1.00 | 1.00 | 1.00 |"), std::string::npos);
}

TEST(CliEval, FourPixelConfusion) {
  TempDir d("cli_four");
  lr::LabelRaster truth(4, 1), pred(4, 1);
  truth.ids = {0, 0, 1, lr::kNodata};
  pred.ids = {0, 1, 1, 0};
  lr::write_grid(truth, d.file("t.grd"));
  lr::write_grid(pred, d.file("p.grd"));
  ASSERT_EQ(cli("eval " + wd(d) + " --pred p.grd --truth t.grd").code, 0);
  EXPECT_EQ(slurp(d.path() / "confusion.csv"), "true\\pred,0,1\n0,1,1\n1,0,1\n");
  EXPECT_EQ(slurp(d.path() / "per_class.csv"),
            "class_id,name,support,precision,recall,f1,jaccard\n"
            "0,class_0,2,1.0000,0.5000,0.6667,0.5000\n"
            "1,class_1,1,0.5000,1.0000,0.6667,0.5000\n");
}

TEST(CliEval, DimensionMismatchExitsThree) {
  TempDir d("cli_dims");
  lr::write_grid(lr::LabelRaster(3, 2, 0), d.file("a.grd"));
  lr::write_grid(lr::LabelRaster(2, 3, 0), d.file("b.grd"));
  EXPECT_EQ(cli("eval " + wd(d) + " --pred a.grd --truth b.grd").code, 3);
  EXPECT_EQ(cli("eval " + wd(d) + " --pred a.grd --truth a.grd --bands 0,x").code, 2);
}

TEST(CliEval, SplitRestrictsToTiles) {
  TempDir d("cli_split");
  ASSERT_TRUE(pipeline(d, "logreg", "--noise-sigma 2"));
  ASSERT_EQ(cli("eval " + wd(d) + " --split val --out-dir val").code, 0);
  ASSERT_EQ(cli("eval " + wd(d) + " --split train --out-dir train").code, 0);
  const auto val = json::parse(slurp(d.path() / "val/metrics.json"));
  const auto train = json::parse(slurp(d.path() / "train/metrics.json"));
  EXPECT_EQ(val.at("total").get<int>(), 64 * 64);
  EXPECT_EQ(train.at("total").get<int>(), 3 * 64 * 64);
  EXPECT_EQ(val.at("split"), "val");
}

TEST(CliEval, DriftWorldBandsDecay) {
  TempDir d("cli_drift");
  const std::string cfg = "--config '" LABELREACH_CONFIGS "/drift.json' ";
  ASSERT_EQ(cli(cfg + "synth " + wd(d)).code, 0);
  ASSERT_EQ(cli(cfg + "train " + wd(d) + " --family logreg").code, 0);
  ASSERT_EQ(cli(cfg + "infer " + wd(d)).code, 0);
  ASSERT_EQ(cli(cfg + "eval " + wd(d)).code, 0);
  const auto bands = json::parse(slurp(d.path() / "band_reports.json")).at("bands");
  ASSERT_EQ(bands.size(), 3u);
  const std::vector<double> pinned{0.9924, 0.9728, 0.9309};
  for (std::size_t b = 0; b < 3; ++b) EXPECT_NEAR(bands[b].at("accuracy").get<double>(), pinned[b], 5e-5) << b;
  // The training rows themselves are not part of any band.
  EXPECT_EQ(bands[0].at("rows"), json({64, 85}));
}

TEST(CliReport, CombinesRuns) {
  TempDir d("cli_report");
  ASSERT_EQ(cli("synth " + wd(d) + " --width 64 --height 64").code, 0);
  for (const std::string f : {"logreg", "gbt"}) {
    ASSERT_EQ(cli("train " + wd(d) + " --family " + f + " --tile 32 --out " + f + ".json").code, 0);
    ASSERT_EQ(cli("infer " + wd(d) + " --model " + f + ".json --out-dir " + f).code, 0);
    ASSERT_EQ(cli("eval " + wd(d) + " --pred " + f + "/predicted.grd --name " + f + " --split val --bands 0,32,64 --out-dir " + f).code, 0);
  }
  ASSERT_EQ(cli("report " + wd(d) + " --runs logreg gbt").code, 0);
  const auto text = slurp(d.path() / "report.md");
  EXPECT_NE(text.find("| Model | val ACC | val J | val F1 |"), std::string::npos) << text;
  EXPECT_NE(text.find("| logreg |"), std::string::npos);
  EXPECT_NE(text.find("| gbt |"), std::string::npos);
  EXPECT_NE(text.find("rows 32-64"), std::string::npos);
  EXPECT_EQ(cli("report " + wd(d) + " --runs nowhere").code, 1);
}
