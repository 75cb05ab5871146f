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

#pragma once

// Run configuration, seed fan-out, run directories and the manifest.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "cfsearch/coarse_to_fine.hpp"

namespace cfsearch {

// Constraint limits as fractions of the widest configuration's cost; a
// nonzero absolute limit overrides its fraction.
struct ConstraintConfig {
  double params_fraction = 0.5;
  double flops_fraction = 0.5;
  std::uint64_t params_limit = 0;
  std::uint64_t flops_limit = 0;
};

struct LandscapeConfig {
  LandscapeRule rule = LandscapeRule::kMonotonePlateau;
  std::uint64_t seed = 0;
  double interaction_noise = kDefaultInteractionNoise;
};

struct RunConfig {
  std::uint64_t seed = 0;
  TaskKind task = TaskKind::kTranslation;
  MetricKind metric = MetricKind::kFrechet;
  std::size_t train_size = 64;
  std::size_t val_size = 64;
  SupernetSpec supernet;
  TrainConfig train;
  ConstraintConfig constraints;
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;
  std::size_t sampled_specializations = 0;
  ChannelRule channel_rule = ChannelRule::kTopGamma;
  EvoConfig evolution;
  std::size_t finetune_epochs = 0;
  // When set, a tabular landscape replaces the trained supernet as the
  // fitness oracle and the training stages are skipped.
  std::optional<LandscapeConfig> landscape;
  // Evaluation threads; 0 uses default_threads(). Not part of the snapshot.
  std::size_t threads = 0;
};

// `base_dir` resolves a "supernet" given as a file name.
RunConfig run_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

// Per-module seeds: derive_seed(seed, tag) for tags "dataset", "train",
// "search" and "evolution".
DatasetConfig dataset_config(const RunConfig& cfg);
TrainConfig train_config(const RunConfig& cfg);
SearchConfig search_config(const RunConfig& cfg);

enum class Stage { kPretrain, kSearchPath, kSearchOperator, kShrink, kFinetune };
std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view name);

std::string sha256_hex(std::string_view bytes);

struct RunOutcome {
  SearchTrace trace;
  std::optional<double> searched_fitness;
  std::optional<double> final_fitness;
  bool resumed_pretrain = false;
};

// Runs the stages up to and including `stop_after` and writes the report
// files into `dir` (created if missing). Pretraining is reused when `dir`
// already holds a verified pretrain for the same configuration. A stage that
// throws leaves the manifest marked "incomplete".
RunOutcome execute_run(const RunConfig& cfg, const std::string& dir, Stage stop_after,
                       std::ostream* log = nullptr);

// Empty when every artifact listed in the manifest exists and matches its
// hash, otherwise one line per problem.
std::vector<std::string> verify_run_directory(const std::string& dir);

// Command-line front end. Exit codes: 0 success, 2 configuration error,
// 3 infeasible constraints, 4 invariant violation, 1 anything else.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cfsearch
