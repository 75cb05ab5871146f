// Copyright 2026 The cfsearch Authors.
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


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cfsearch/error.hpp"
#include "cfsearch/rng.hpp"
#include "cfsearch/run.hpp"
#include "test_support.hpp"

using namespace cfsearch;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int code = 0;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cfsearch");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

class Scratch {
 public:
  Scratch() : root_(fs::temp_directory_path() / ("cfsearch_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  ~Scratch() { fs::remove_all(root_); }
  fs::path operator/(const std::string& name) const { return root_ / name; }

 private:
  fs::path root_;
};

std::string tiny_config() { return testing::source_dir() + "/configs/tiny.json"; }

// tiny.json with `patch` merged in, written next to the scratch runs.
std::string patched_config(const Scratch& s, const std::string& name, const json& patch) {
  json j = json::parse(slurp(tiny_config()));
  j.merge_patch(patch);
  const fs::path p = s / name;
  spit(p, j.dump(2));
  return p.string();
}

}  // namespace

TEST_CASE("analysis subcommands") {
  auto r = cli({"enumerate", "--M", "3", "--L", "4"});
  CHECK(r.code == 0);
  CHECK(r.out == "216\n");
  r = cli({"analyze-uniform", "--M", "2", "--t", "4"});
  CHECK(r.code == 0);
  CHECK(r.out == "0.375\n");
  r = cli({"analyze-uniform", "--M", "3", "--t", "3", "--t", "6"});
  CHECK(r.code == 0);
  CHECK(r.out.find("2/9") != std::string::npos);
  CHECK(r.out.find("10/81") != std::string::npos);
  r = cli({"enumerate", "--config", tiny_config()});
  CHECK(r.code == 0);
  CHECK(r.out.find("joint_search_size\t32") != std::string::npos);

  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"enumerate", "--M", "0", "--L", "2"}).code == 2);
  CHECK(cli({"run-all", "--config", "/nonexistent.json", "--out", "x"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"--version"}).code == 0);
}

TEST_CASE("configuration parsing") {
  const RunConfig cfg = load_run_config(tiny_config());
  CHECK(cfg.seed == 1);
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.supernet.num_paths() == 2);
  const json snap = run_config_to_json(cfg);
  CHECK(run_config_to_json(run_config_from_json(snap)) == snap);

  CHECK(train_config(cfg).seed == derive_seed(1, "train"));
  CHECK(dataset_config(cfg).seed == derive_seed(1, "dataset"));
  CHECK(search_config(cfg).seed == derive_seed(1, "search"));
  CHECK(search_config(cfg).evolution.seed == derive_seed(1, "evolution"));

  json j = json::parse(slurp(tiny_config()));
  j["trian"] = json::object();
  CHECK_THROWS_AS(run_config_from_json(j, testing::source_dir() + "/configs"), ConfigError);
  j = json::parse(slurp(tiny_config()));
  j["train"]["epochs"] = 0;
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = json::parse(slurp(tiny_config()));
  j["evolution"]["elites"] = 9;
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = json::parse(slurp(tiny_config()));
  j["search"]["channel_rule"] = "global_threshold";
  CHECK(run_config_from_json(j).channel_rule == ChannelRule::kGlobalThreshold);
  CHECK(search_config(run_config_from_json(j)).channel_rule == ChannelRule::kGlobalThreshold);
  j["search"]["channel_rule"] = "median";
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = json::parse(slurp(tiny_config()));
  j["task"] = "denoise";
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);

  for (Stage s : {Stage::kPretrain, Stage::kSearchPath, Stage::kSearchOperator, Stage::kShrink,
                  Stage::kFinetune}) {
    CHECK(parse_stage(stage_name(s)) == s);
  }
  CHECK_THROWS_AS(parse_stage("bake"), ConfigError);
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("runs are reproducible byte for byte") {
  Scratch s;
  const auto a = cli({"run-all", "--config", tiny_config(), "--out", (s / "a").string(),
                      "--threads", "1"});
  const auto b = cli({"run-all", "--config", tiny_config(), "--out", (s / "b").string(),
                      "--threads", "2"});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(a.out == b.out);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(s / "a")) {
    const std::string name = entry.path().filename().string();
    if (name == "manifest.json") continue;
    CAPTURE(name);
    CHECK(slurp(entry.path()) == slurp(s / "b" / name));
    ++files;
  }
  CHECK(files == 12);

  json ma = json::parse(slurp(s / "a" / "manifest.json"));
  json mb = json::parse(slurp(s / "b" / "manifest.json"));
  CHECK(ma["status"] == "complete");
  CHECK(ma["artifacts"].size() == files);
  for (auto* m : {&ma, &mb}) {
    m->erase("started_at");
    m->erase("updated_at");
  }
  CHECK(ma == mb);
  CHECK(verify_run_directory((s / "a").string()).empty());

  // The snapshot in the manifest alone reproduces the run.
  const RunConfig replay = run_config_from_json(ma["config"]);
  execute_run(replay, (s / "c").string(), Stage::kFinetune);
  for (const auto& entry : fs::directory_iterator(s / "a")) {
    const std::string name = entry.path().filename().string();
    if (name != "manifest.json") CHECK(slurp(entry.path()) == slurp(s / "c" / name));
  }

  const Genome g = parse_genome(slurp(s / "a" / "genome.txt").substr(0, slurp(s / "a" / "genome.txt").find('\n')));
  CHECK(a.out.find("genome\t" + to_string(g)) == 0);

  const auto fair = cli({"verify-fairness", (s / "a" / "ledger.tsv").string()});
  CHECK(fair.code == 0);
  CHECK(fair.out.rfind("fair\t", 0) == 0);
}

TEST_CASE("stages resume from a verified pretrain") {
  Scratch s;
  const std::string dir = (s / "run").string();
  REQUIRE(cli({"pretrain", "--config", tiny_config(), "--out", dir, "--threads", "1"}).code == 0);
  json m = json::parse(slurp(s / "run" / "manifest.json"));
  CHECK(m["status"] == "complete");
  CHECK(m["stop_after"] == "pretrain");
  const std::string ckpt = slurp(s / "run" / "supernet.ckpt");

  const auto shrink = cli({"shrink", "--config", tiny_config(), "--out", dir, "--threads", "1"});
  REQUIRE(shrink.code == 0);
  CHECK(shrink.err.find("reusing") != std::string::npos);
  CHECK(slurp(s / "run" / "supernet.ckpt") == ckpt);
  CHECK(fs::exists(s / "run" / "channel_stage.tsv"));

  const auto fresh = cli({"shrink", "--config", tiny_config(), "--out", (s / "fresh").string(),
                          "--threads", "1"});
  CHECK(fresh.out == shrink.out);

  // A tampered checkpoint fails verification and is not reused.
  std::string bad = ckpt;
  bad[bad.size() - 1] ^= 1;
  spit(s / "run" / "supernet.ckpt", bad);
  const auto problems = verify_run_directory(dir);
  REQUIRE(problems.size() == 1);
  CHECK(problems[0] == "supernet.ckpt: hash mismatch");
  const auto redo = cli({"search-path", "--config", tiny_config(), "--out", dir, "--threads", "1"});
  CHECK(redo.code == 0);
  CHECK(redo.err.find("reusing") == std::string::npos);
  CHECK(slurp(s / "run" / "supernet.ckpt") == ckpt);

  // A different config does not reuse either.
  const std::string other = patched_config(s, "other.json", {{"seed", 2}});
  const auto changed = cli({"search-path", "--config", other, "--out", dir, "--threads", "1"});
  CHECK(changed.code == 0);
  CHECK(changed.err.find("reusing") == std::string::npos);
}

TEST_CASE("failures leave an incomplete manifest and map to exit codes") {
  Scratch s;
  const std::string infeasible =
      patched_config(s, "infeasible.json", {{"search", {{"params_limit", 1}}}});
  const std::string dir = (s / "run").string();
  const auto r = cli({"run-all", "--config", infeasible, "--out", dir, "--threads", "1"});
  CHECK(r.code == 3);
  CHECK(r.err.find("error:") != std::string::npos);
  const json m = json::parse(slurp(s / "run" / "manifest.json"));
  CHECK(m["status"] == "incomplete");
  CHECK(m.contains("error"));
  CHECK(m["artifacts"].contains("supernet.ckpt"));
  CHECK(verify_run_directory(dir).empty());

  const std::string unknown = patched_config(s, "unknown.json", {{"colour", "blue"}});
  CHECK(cli({"run-all", "--config", unknown, "--out", (s / "u").string()}).code == 2);
  spit(s / "broken.json", "{\"seed\": ");
  CHECK(cli({"run-all", "--config", (s / "broken.json").string(), "--out", (s / "b").string()})
            .code == 2);

  // An uneven ledger is an invariant violation.
  const std::string ok = (s / "ok").string();
  REQUIRE(cli({"pretrain", "--config", tiny_config(), "--out", ok, "--threads", "1"}).code == 0);
  std::string ledger = slurp(s / "ok" / "ledger.tsv");
  const auto at = ledger.find("op\t0\t0\t1\t3");
  REQUIRE(at != std::string::npos);
  ledger.replace(at, 10, "op\t0\t0\t1\t2");
  spit(s / "uneven.tsv", ledger);
  const auto v = cli({"verify-fairness", (s / "uneven.tsv").string()});
  CHECK(v.code == 4);
  CHECK(cli({"verify-fairness", (s / "missing.tsv").string()}).code == 2);

  CHECK(verify_run_directory((s / "nowhere").string()).size() == 1);
  CHECK_THROWS_AS(execute_run(run_config_from_json(json::parse(slurp(
                                  testing::source_dir() + "/configs/landscape_separable.json")),
                                                   testing::source_dir() + "/configs"),
                              (s / "land").string(), Stage::kPretrain),
                  ConfigError);
}

TEST_CASE("landscape runs and the joint baseline") {
  Scratch s;
  const std::string cfg = testing::source_dir() + "/configs/landscape_separable.json";
  const auto run = cli({"run-all", "--config", cfg, "--out", (s / "l").string(), "--threads", "1"});
  REQUIRE(run.code == 0);
  const auto joint = cli({"baseline-joint", "--config", cfg, "--threads", "1"});
  REQUIRE(joint.code == 0);
  CHECK(joint.out.find("evaluations\t53282") != std::string::npos);
  const std::string report = slurp(s / "l" / "report.txt");
  CHECK(report.find("joint_search_size\t62208") != std::string::npos);
  CHECK(cli({"baseline-joint", "--config", cfg, "--cap", "100"}).code == 2);
}
