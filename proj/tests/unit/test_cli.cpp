/* Copyright 2026 The ct2ctpa Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


#include <doctest.h>

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ct2ctpa/cli.hpp"
#include "ct2ctpa/error.hpp"
#include "ct2ctpa/image_io.hpp"
#include "ct2ctpa/ingest.hpp"
#include "ct2ctpa/metrics.hpp"
#include "tempdir.hpp"

using namespace ct2ctpa;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), {"ct2ctpa", "--quiet"});
  return cli::run(args);
}

std::string p(const TempDir& t, const std::string& rel) { return (t.path() / rel).string(); }

json read(const fs::path& f) { return json::parse(io::read_text(f)); }

// Relative path -> bytes, timing files excluded.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name == "timing.json" || name == "run_timing.json") continue;
    out[fs::relative(e.path(), root).string()] = io::read_text(e.path());
  }
  return out;
}

// Small phantom set shared by several cases: 6 studies of 4 slices at 32 px.
void make_phantom(const TempDir& t) {
  REQUIRE(run_cli({"phantom", "--n", "6", "--size", "32", "--slices", "4", "--seed", "1", "--out", p(t, "ph")}) == 0);
}

const std::vector<std::string> kTiny = {"--base-channels", "4", "--disc-base-channels", "4", "--size", "32"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("resolve: precedence and canonical values") {
  const json file = {{"epochs", 5}, {"optim.lr", 1e-3}};
  const json flags = {{"epochs", 7}, {"mode", "pe-cyclegan"}};
  const auto r = cli::resolve("", file, flags);
  REQUIRE(r.runs.size() == 1);
  const json& c = r.runs[0].config;
  CHECK(c["epochs"] == 7);           // flag beats file
  CHECK(c["optim.lr"] == 1e-3);      // file beats default
  CHECK(c["mode"] == "pe_cyclegan");  // canonical spelling
  CHECK(c["loss.lambda_cycle"] == 10.0);

  const auto pb = cli::resolve("paper-best", json::object(), {{"epochs", 3}});
  const json& b = pb.runs[0].config;
  CHECK(b["generator.blocks"] == 50);
  CHECK(b["loss.adversarial"] == "mse");
  CHECK(b["loss.cycle"] == "ssim");
  CHECK(b["loss.lambda_cls"] == 0.3);
  CHECK(b["loss.target"] == "rec_ct");
  CHECK(b["discriminator.layers"] == 3);
  CHECK(b["data.hu_filter"] == true);
  CHECK(b["epochs"] == 3);
  // agreeing with a pinned value is fine
  CHECK_NOTHROW(cli::resolve("paper-best", json::object(), {{"mode", "pe-cyclegan"}}));
}

TEST_CASE("resolve: preset conflicts name both sides") {
  CHECK_THROWS_WITH_AS(cli::resolve("paper-best", json::object(), {{"generator.blocks", 9}}, {{"generator.blocks", "--blocks"}}),
                       doctest::Contains("--blocks"), ConfigError);
  CHECK_THROWS_WITH_AS(cli::resolve("paper-best", json::object(), {{"generator.blocks", 9}}, {{"generator.blocks", "--blocks"}}),
                       doctest::Contains("paper-best"), ConfigError);
  CHECK_THROWS_WITH_AS(cli::resolve("paper-best", {{"loss.cycle", "l1"}}, json::object()),
                       doctest::Contains("config file key 'loss.cycle'"), ConfigError);
  CHECK_THROWS_WITH_AS(cli::resolve("table3", json::object(), {{"loss.lambda_cls", 0.2}}),
                       doctest::Contains("varies loss.lambda_cls"), ConfigError);
  CHECK_THROWS_WITH_AS(cli::resolve("", {{"loss.lamda_cls", 0.1}}, json::object()),
                       doctest::Contains("loss.lamda_cls"), ConfigError);
  CHECK_THROWS_AS(cli::resolve("table9", json::object(), json::object()), ConfigError);
  CHECK_THROWS_AS(cli::canonical("data.interval", "7:3"), ConfigError);
  CHECK(cli::canonical("data.interval", "ground-truth") == "gt");
}

TEST_CASE("table presets expand to the ablation column structures") {
  const std::map<std::string, std::vector<std::string>> expected = {
      {"table2", {"Classification model", "Without classification model"}},
      {"table3", {"Ratio = 1", "Ratio = 0.3", "Ratio = 0.1"}},
      {"table4", {"3-layers", "4-layers"}},
      {"table5", {"BCE+L1", "BCE+SSIM", "MSE+SSIM"}},
      {"table6", {"On Rec_CT", "On Fake_CT"}}};
  for (const auto& [name, cols] : expected) {
    const auto r = cli::resolve(name, json::object(), json::object());
    CHECK(r.table == name);
    REQUIRE(r.runs.size() == cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) CHECK(r.runs[i].label == cols[i]);
    CHECK(metrics::table_preset(name)->columns == cols);
  }
  const auto t3 = cli::resolve("table3", json::object(), json::object());
  CHECK(t3.runs[0].config["loss.lambda_cls"] == 1.0);
  CHECK(t3.runs[1].config["loss.lambda_cls"] == 0.3);
  CHECK(t3.runs[2].config["loss.lambda_cls"] == 0.1);
  const auto t5 = cli::resolve("table5", json::object(), json::object());
  CHECK(t5.runs[0].config["loss.adversarial"] == "bce");
  CHECK(t5.runs[0].config["loss.cycle"] == "l1");
  CHECK(t5.runs[2].config["loss.adversarial"] == "mse");
  CHECK(t5.runs[2].config["loss.cycle"] == "ssim");
  const auto t6 = cli::resolve("table6", json::object(), json::object());
  CHECK(t6.runs[1].config["loss.target"] == "fake_ct");
  const auto t2 = cli::resolve("table2", json::object(), json::object());
  CHECK(t2.runs[1].config["mode"] == "cyclegan");
  // outside the varied keys every column keeps the recommended recipe
  for (const auto& run : t3.runs) CHECK(run.config["generator.blocks"] == 50);
}

TEST_CASE("phantom: deterministic, and --out is required") {
  TempDir t;
  REQUIRE(run_cli({"phantom", "--n", "8", "--size", "32", "--slices", "4", "--seed", "1", "--out", p(t, "a")}) == 0);
  REQUIRE(run_cli({"phantom", "--n", "8", "--size", "32", "--slices", "4", "--seed", "1", "--out", p(t, "b")}) == 0);
  CHECK(io::read_text(t / "a/manifest.json") == io::read_text(t / "b/manifest.json"));
  CHECK(snapshot(t / "a") == snapshot(t / "b"));
  CHECK(run_cli({"phantom", "--n", "8", "--seed", "1"}) == cli::kUsageError);
  CHECK(run_cli({"phantom", "--bogus"}) == cli::kUsageError);
  CHECK(run_cli({}) == cli::kUsageError);
  const json run = read(t / "a/run.json");
  CHECK(run["command"] == "phantom");
  for (const auto& a : run["artifacts"]) CHECK(fs::exists(t / "a" / a.get<std::string>()));
}

TEST_CASE("preprocess: contract, interval arithmetic, byte-identical re-runs") {
  TempDir t;
  make_phantom(t);
  REQUIRE(run_cli({"preprocess", "--data", p(t, "ph"), "--window", "-1000:400", "--size", "16", "--out", p(t, "pre")}) == 0);
  const ingest::Dataset ds = ingest::read_dataset(t / "pre");
  CHECK(ds.ct_slices().size() == 6 * 4);
  for (const auto& r : ds.ct_slices()) {
    CHECK(r.image.rows == 16);
    CHECK(r.image.cols == 16);
    for (float v : r.image.pixels) REQUIRE((v >= -1.0f && v <= 1.0f));
  }
  for (const auto& e : fs::recursive_directory_iterator(t / "pre/png")) {
    if (e.is_regular_file()) CHECK(io::read_png(e.path()).rows == 16);
  }
  REQUIRE(run_cli({"preprocess", "--data", p(t, "ph"), "--window", "-1000:400", "--size", "16", "--out", p(t, "pre2")}) == 0);
  CHECK(snapshot(t / "pre") == snapshot(t / "pre2"));

  REQUIRE(run_cli({"preprocess", "--data", p(t, "ph"), "--size", "32", "--interval", "1:3", "--out", p(t, "iv")}) == 0);
  const ingest::Dataset iv = ingest::read_dataset(t / "iv");
  std::map<std::string, int> per_study;
  for (const auto& r : iv.ct_slices()) ++per_study[r.study_id];
  CHECK(per_study.size() == 6);
  for (const auto& [s, n] : per_study) CHECK(n == 2);

  CHECK(run_cli({"preprocess", "--data", p(t, "ph"), "--window", "400:-1000", "--out", p(t, "bad")}) == cli::kUsageError);
  CHECK(run_cli({"preprocess", "--data", p(t, "ph"), "--window", "abc", "--out", p(t, "bad")}) == cli::kUsageError);
  CHECK(run_cli({"preprocess", "--data", p(t, "nowhere"), "--out", p(t, "bad")}) == cli::kRuntimeError);
}

TEST_CASE("train: preconditions and provenance") {
  TempDir t;
  make_phantom(t);
  const std::string ph = p(t, "ph");
  CHECK(run_cli(concat({"train", "--mode", "pe-cyclegan", "--data", ph, "--out", p(t, "x")}, kTiny)) == cli::kUsageError);
  CHECK(run_cli(concat({"train", "--preset", "paper-best", "--blocks", "9", "--data", ph, "--out", p(t, "x")}, kTiny)) ==
        cli::kUsageError);
  CHECK(run_cli(concat({"train", "--data", ph, "--out", p(t, "x"), "--epochs", "two"}, kTiny)) == cli::kUsageError);
  CHECK_FALSE(fs::exists(t / "x"));

  REQUIRE(run_cli({"pretrain-classifier", "--data", ph, "--size", "32", "--epochs", "2", "--base-channels", "4", "--out",
               p(t, "clf")}) == 0);
  CHECK(read(t / "clf/manifest.json")["frozen"] == true);
  REQUIRE(run_cli(concat({"train", "--mode", "pe-cyclegan", "--classifier", p(t, "clf"), "--lambda-cls", "0.3", "--target",
                      "rec_ct", "--epochs", "1", "--backbone", "unet", "--unet-depth", "2", "--data", ph, "--out",
                      p(t, "run")},
                     kTiny)) == 0);
  const json run = read(t / "run/run.json");
  CHECK(run["config"]["loss.lambda_cls"] == 0.3);
  CHECK(io::read_text(t / "run/run.json").find("\"loss.lambda_cls\": 0.3,") != std::string::npos);
  CHECK(read(t / "run/config.json")["loss.lambda_cls"] == 0.3);
  CHECK(run["inputs"]["classifier"]["fingerprint"] != "");
  for (const auto& a : run["artifacts"]) CHECK(fs::exists(t / "run" / a.get<std::string>()));
}

TEST_CASE("paper-best smoke run, then generate, evaluate and report") {
  TempDir t;
  make_phantom(t);
  const std::string ph = p(t, "ph");
  REQUIRE(run_cli({"preprocess", "--data", ph, "--size", "32", "--out", p(t, "pre")}) == 0);
  REQUIRE(run_cli(concat({"train", "--preset", "paper-best", "--data", p(t, "pre"), "--epochs", "2", "--pretrain-epochs",
                      "2", "--out", p(t, "pb")},
                     kTiny)) == 0);
  const json m = read(t / "pb/manifest.json");
  CHECK(m["config"]["generator.blocks"] == 50);
  CHECK(fs::exists(t / "pb/classifier/params.bin"));
  CHECK(fs::exists(t / "pb/checkpoints/epoch_2/g_ct2ctpa/params.bin"));
  // a preprocessed set with the filter off contradicts the preset
  REQUIRE(run_cli({"preprocess", "--data", ph, "--size", "32", "--no-hu-filter", "--out", p(t, "raw")}) == 0);
  CHECK(run_cli(concat({"train", "--preset", "paper-best", "--data", p(t, "raw"), "--epochs", "1", "--out", p(t, "no")},
                   {"--base-channels", "4"})) == cli::kUsageError);

  REQUIRE(run_cli({"generate", "--checkpoint", p(t, "pb"), "--data", p(t, "pre"), "--out", p(t, "g1")}) == 0);
  REQUIRE(run_cli({"generate", "--checkpoint", p(t, "pb"), "--data", p(t, "pre"), "--out", p(t, "g2")}) == 0);
  const auto s1 = snapshot(t / "g1");
  auto s2 = snapshot(t / "g2");
  // run.json records its own output path only through inputs, which match
  CHECK(s1 == s2);
  const ingest::Dataset ds = ingest::read_dataset(t / "pre");
  std::size_t n_test = 0;
  for (const auto& r : ds.ct_slices()) n_test += r.split == "test";
  std::size_t n_png = 0;
  for (const auto& e : fs::directory_iterator(t / "g1/png")) n_png += e.is_regular_file();
  CHECK(n_png == n_test);
  CHECK(run_cli({"generate", "--checkpoint", p(t, "nowhere"), "--data", p(t, "pre"), "--out", p(t, "g3")}) ==
        cli::kRuntimeError);

  // outputs feed evaluate without renaming
  REQUIRE(run_cli({"evaluate", "--generated", p(t, "g1"), "--out", p(t, "ev")}) == 0);
  const auto rep = metrics::MetricsReport::from_json(read(t / "ev/metrics.json"));
  CHECK(rep.pairs.size() == n_test);
  REQUIRE(run_cli({"evaluate", "--generated", p(t, "g1/reference"), "--reference", p(t, "g1/reference"), "--align",
               "--out", p(t, "self")}) == 0);
  const json self = read(t / "self/metrics.json");
  CHECK(self["provenance"]["align"] == true);
  const auto sr = metrics::MetricsReport::from_json(self);
  CHECK(sr.aggregate.mae == 0.0);
  CHECK(sr.aggregate.ssim == 1.0);
  CHECK(sr.aggregate.psnr == metrics::kInfinity);
  CHECK(read(t / "ev/metrics.json")["provenance"]["align"] == false);
  CHECK(run_cli({"evaluate", "--generated", p(t, "g1/png"), "--out", p(t, "e2")}) == cli::kUsageError);

  // one run -> one column; two runs -> two columns plus grids
  REQUIRE(run_cli({"report", "--runs", p(t, "ev"), "--out", p(t, "r1")}) == 0);
  const std::string one = io::read_text(t / "r1/table.tsv");
  CHECK(one.find("\tev\n") != std::string::npos);
  REQUIRE(run_cli({"report", "--runs", p(t, "ev"), p(t, "self"), "--table", "table2", "--out", p(t, "r2")}) == 0);
  const std::string two = io::read_text(t / "r2/table.tsv");
  CHECK(two.find("\tClassification model\tWithout classification model\n") != std::string::npos);
  std::size_t grids = 0;
  for (const auto& e : fs::directory_iterator(t / "r2/grids")) {
    ++grids;
    CHECK(io::read_png(e.path()).cols == 4 * 32 + 3 * 2);  // input | 2 runs | reference
  }
  CHECK(grids == std::min<std::size_t>(4, n_test));
  CHECK(run_cli({"report", "--runs", p(t, "ev"), "--table", "table3", "--out", p(t, "r3")}) == cli::kUsageError);

  // mismatched pair sets
  json cut = read(t / "ev/metrics.json");
  cut["pairs"].erase(cut["pairs"].begin());
  fs::create_directories(t / "cut");
  io::write_text(t / "cut/metrics.json", cut.dump());
  CHECK(run_cli({"report", "--runs", p(t, "ev"), p(t, "cut"), "--out", p(t, "r4")}) == cli::kRuntimeError);
}
