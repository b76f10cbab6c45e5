// Copyright 2026 The segcond Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"

namespace segcond {
namespace {

namespace fs = std::filesystem;

const fs::path kSamples = SEGCOND_SAMPLES_DIR;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "segcond");
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string sample(const std::string& name) { return (kSamples / name).string(); }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

TEST(CliTest, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"masks", sample("worked_layout.json"), "--kind", "xyz", "--out", "/tmp/x.png"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"attend", sample("demo.json"), "--gamma", "1.5"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"attend", sample("demo.json"), "--gamma", "0"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"attend", sample("demo.json"), "--heads", "3"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"attend", sample("demo.json"), "--aia-start", "1"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
}

TEST(CliTest, ContourWritesOnePngPerRecord) {
  const auto dir = oracle::scratch_dir("cli_contour");
  const Outcome r = run_cli({"contour", sample("demo.json"), "--out-dir", dir.string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  for (const char* id : {"demo_street", "demo_portrait", "demo_blank"}) EXPECT_TRUE(fs::exists(dir / (std::string(id) + ".png")));

  ASSERT_EQ(run_cli({"contour", sample("demo.json"), "--out-dir", dir.string(), "--gray"}).code, cli::kExitOk);
  const png::Gray16Image blank = png::read_gray((dir / "demo_blank.png").string());
  EXPECT_EQ(std::count(blank.pixels.begin(), blank.pixels.end(), 0), static_cast<long>(blank.pixels.size()));
  const png::Gray16Image street = png::read_gray((dir / "demo_street.png").string());
  const auto recs = load_manifest(kSamples / "demo.json");
  const GrayContourMap gray = merge_contours(to_instruction(recs[0]));
  for (std::size_t i = 0; i < gray.values.size(); ++i) ASSERT_EQ(street.pixels[i], gray.values[i] * 255);
}

TEST(CliTest, ContourMalformedManifest) {
  const auto dir = oracle::scratch_dir("cli_contour_bad");
  std::ofstream(dir / "bad.json") << "[{\"image_id\": ";
  const Outcome r = run_cli({"contour", (dir / "bad.json").string(), "--out-dir", dir.string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("parse"), std::string::npos);

  std::ofstream(dir / "bad_record.json") << R"([{"image_id": "fine", "width": 2, "height": 2},
    {"image_id": "broken", "width": 2, "height": 2, "entities": [{"id": 1, "caption": "x", "mask": {"rle": [1]}}]}])";
  const Outcome r2 = run_cli({"contour", (dir / "bad_record.json").string(), "--out-dir", dir.string()});
  EXPECT_EQ(r2.code, cli::kExitData);
  EXPECT_NE(r2.err.find("broken"), std::string::npos);
}

std::vector<std::vector<int>> read_mask_png(const fs::path& p) {
  const png::Gray16Image img = png::read_gray(p.string());
  std::vector<std::vector<int>> out(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) out[static_cast<std::size_t>(y)].push_back(img.pixels[static_cast<std::size_t>(y * img.width + x)] == 255);
  }
  return out;
}

TEST(CliTest, MasksOnWorkedLayout) {
  const auto dir = oracle::scratch_dir("cli_masks");
  const auto saa = dir / "saa.png";
  ASSERT_EQ(run_cli({"masks", sample("worked_layout.json"), "--grid", "1x2", "--out", saa.string()}).code,
            cli::kExitOk);
  EXPECT_EQ(read_mask_png(saa), (std::vector<std::vector<int>>{
                                    {1, 1, 0, 1, 1}, {1, 1, 0, 1, 1}, {0, 0, 1, 0, 1}, {1, 1, 0, 1, 1}, {1, 1, 1, 1, 1}}));
  const Json sets = Json::parse(slurp(dir / "saa.json"));
  EXPECT_EQ(sets["layout"]["text_sets"], Json::parse("[[0,1],[2]]"));
  EXPECT_EQ(sets["layout"]["image_sets"], Json::parse("[[3],[4]]"));

  const auto aia = dir / "aia.png";
  ASSERT_EQ(run_cli({"masks", sample("worked_layout.json"), "--grid", "1x2", "--kind", "aia", "--out", aia.string()}).code,
            cli::kExitOk);
  EXPECT_EQ(read_mask_png(aia), (std::vector<std::vector<int>>{
                                    {1, 1, 0, 1, 0}, {1, 1, 0, 1, 0}, {0, 0, 1, 0, 1}, {1, 1, 0, 1, 1}, {0, 0, 1, 0, 1}}));

  EXPECT_EQ(run_cli({"masks", sample("demo.json"), "--record", "nope", "--out", aia.string()}).code, cli::kExitData);
  EXPECT_EQ(run_cli({"masks", sample("demo.json"), "--grid", "two", "--out", aia.string()}).code, cli::kExitUsage);
}

Json attend_json(std::vector<std::string> extra) {
  std::vector<std::string> args{"attend", sample("demo.json")};
  args.insert(args.end(), extra.begin(), extra.end());
  const Outcome r = run_cli(args);
  EXPECT_EQ(r.code, cli::kExitOk) << r.err;
  return Json::parse(r.out);
}

TEST(CliTest, AttendReportsInvariants) {
  const Json j = attend_json({"--seed", "3"});
  EXPECT_TRUE(j["summary"]["invariants_ok"].get<bool>());
  EXPECT_EQ(j["config"]["aia_range"], Json::parse("[1,3]"));
  for (const auto& r : j["records"]) {
    EXPECT_LE(r["row_sum_max_deviation"].get<double>(), 1e-6);
    EXPECT_EQ(r["masked_weight_max"].get<double>(), 0.0);
    EXPECT_LT(r["gamma1_vs_unbiased_max_delta"].get<double>(), 1e-6);
    EXPECT_LT(r["citf_equivalence_max_delta"].get<double>(), 1e-6);
    EXPECT_EQ(r["schedule"], Json::parse(R"(["saa","aia","aia","saa"])"));
  }
}

TEST(CliTest, AttendLowGammaReducesConditionMass) {
  const Json j = attend_json({"--gamma", "0.2"});
  for (const auto& r : j["records"]) {
    if (r["tokens"]["cond_retained"].get<int>() == 0) continue;
    EXPECT_LT(r["condition_mass"]["mean"].get<double>(), r["condition_mass"]["at_gamma_1"].get<double>());
    double prev = -1.0;
    for (const auto& s : r["condition_mass_sweep"]) {
      EXPECT_GE(s["mean"].get<double>(), prev);
      prev = s["mean"].get<double>();
    }
  }
  const Json scribble = attend_json({"--scribble"});
  EXPECT_EQ(scribble["config"]["gamma"].get<double>(), 0.2);
}

TEST(CliTest, AttendNoCitfMatchesDefaultOutputs) {
  const Json on = attend_json({"--seed", "5"});
  const Json off = attend_json({"--seed", "5", "--no-citf"});
  ASSERT_EQ(on["records"].size(), off["records"].size());
  for (std::size_t i = 0; i < on["records"].size(); ++i) {
    const auto& a = on["records"][i];
    const auto& b = off["records"][i];
    EXPECT_EQ(b["tokens"]["cond_in_sequence"], b["tokens"]["cond_total"]);
    EXPECT_EQ(a["tokens"]["cond_in_sequence"], a["tokens"]["cond_retained"]);
    for (const char* k : {"text_abs_sum", "image_abs_sum"}) {
      EXPECT_NEAR(a["outputs"][k].get<double>(), b["outputs"][k].get<double>(), 1e-6);
    }
  }
  EXPECT_EQ(on["records"][2]["image_id"], "demo_blank");
  EXPECT_EQ(on["records"][2]["tokens"]["cond_retained"], 0);
}

TEST(CliTest, AttendDeterministicBytes) {
  const Outcome a = run_cli({"attend", sample("demo.json"), "--seed", "11", "--lora-b-std", "0.05"});
  const Outcome b = run_cli({"attend", sample("demo.json"), "--seed", "11", "--lora-b-std", "0.05"});
  const Outcome c = run_cli({"attend", sample("demo.json"), "--seed", "12", "--lora-b-std", "0.05"});
  ASSERT_EQ(a.code, cli::kExitOk);
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, c.out);
}

TEST(CliTest, AttendJsonFileAndTable) {
  const auto dir = oracle::scratch_dir("cli_attend");
  const Outcome r = run_cli({"attend", sample("demo.json"), "--json", (dir / "r.json").string()});
  ASSERT_EQ(r.code, cli::kExitOk);
  EXPECT_NE(r.out.find("demo_street"), std::string::npos);
  EXPECT_TRUE(Json::parse(slurp(dir / "r.json"))["summary"]["invariants_ok"].get<bool>());
}

TEST(CliTest, FilterMixedManifest) {
  const auto dir = oracle::scratch_dir("cli_filter");
  const Outcome r = run_cli({"filter", sample("filter_mixed.json"), "--out", (dir / "kept.json").string(),
                             "--threads", "3"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_EQ(j["summary"]["rejected"], Json::parse(R"({"size":1,"aspect":1,"aesthetic":0,"mask_count":1})"));
  EXPECT_EQ(Json::parse(slurp(dir / "kept.json")), Json::array());

  const Outcome one = run_cli({"filter", sample("filter_mixed.json")});
  EXPECT_EQ(one.out, r.out);
}

TEST(CliTest, FilterWritesContoursForAcceptedRecords) {
  const auto dir = oracle::scratch_dir("cli_filter_contours");
  DatasetRecord rec;
  rec.image_id = "good/one";
  rec.width = 1000;
  rec.height = 1000;
  rec.entities.push_back({1, "a square", oracle::rect_mask(1000, 1000, 100, 100, 400, 400)});
  std::ofstream(dir / "m.json") << manifest_to_json({rec}).dump();
  const Outcome r = run_cli({"filter", (dir / "m.json").string(), "--contours", (dir / "c").string(), "--json",
                             (dir / "report.json").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(dir / "c" / "good_one.png"));
  EXPECT_EQ(Json::parse(slurp(dir / "report.json"))["summary"]["accepted"], 1);

  const Outcome strict = run_cli({"filter", (dir / "m.json").string(), "--reject-missing-score"});
  EXPECT_EQ(Json::parse(strict.out)["summary"]["rejected"]["aesthetic"], 1);
}

TEST(CliTest, MiouOnIdenticalManifests) {
  const Outcome r = run_cli({"miou", "--pred", sample("demo.json"), "--ref", sample("demo.json")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_EQ(j["miou"].get<double>(), 1.0);
  EXPECT_EQ(j["entities"].size(), 5u);
}

TEST(CliTest, MiouWithMissingPrediction) {
  const auto dir = oracle::scratch_dir("cli_miou");
  auto recs = load_manifest(kSamples / "demo.json");
  recs[0].entities.erase(recs[0].entities.begin());
  std::ofstream(dir / "pred.json") << manifest_to_json(recs).dump();
  const Outcome r = run_cli({"miou", "--pred", (dir / "pred.json").string(), "--ref", sample("demo.json")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_DOUBLE_EQ(Json::parse(r.out)["miou"].get<double>(), 4.0 / 5.0);

  const Outcome missing = run_cli({"miou", "--pred", sample("worked_layout.json"), "--ref", sample("demo.json")});
  EXPECT_EQ(missing.code, cli::kExitData);
}

TEST(CliTest, MacsSavings) {
  const Outcome r = run_cli({"macs", "--l-cond", "0"});
  ASSERT_EQ(r.code, cli::kExitOk);
  const Json j = Json::parse(r.out);
  EXPECT_GT(j["settings"][3]["savings_pct"].get<double>(), 0.0);
  EXPECT_EQ(j["settings"][4]["setting"], "no_citf");
  EXPECT_EQ(j["profile"]["l_text"], 762);

  const Outcome full = run_cli({"macs", "--l-cond", "4096"});
  EXPECT_EQ(Json::parse(full.out)["settings"][3]["savings_pct"].get<double>(), 0.0);
  EXPECT_EQ(run_cli({"macs", "--l-cond", "5000"}).code, cli::kExitUsage);
}

}  // namespace
}  // namespace segcond
