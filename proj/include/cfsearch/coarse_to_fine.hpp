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

// Three-stage search. Stage 1 scores every path in its mixed form, stage 2
// scores every operator assignment of the chosen path covered by the
// disjoint specializations, stage 3 evolves channel widths under the cost
// limits. Oracle calls add up across stages instead of multiplying.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfsearch/evolution.hpp"
#include "cfsearch/oracles.hpp"
#include "cfsearch/trainer.hpp"

namespace cfsearch {

struct StageRecord {
  std::string id;  // genome text, or "path:<p>;mixed" in stage 1
  Genome genome;
  double fitness = 0.0;
  CostReport cost;
};

struct SearchConfig {
  std::uint64_t params_limit = 0;
  std::uint64_t flops_limit = 0;
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;
  // Above the cap, score this many seeded random specializations instead of
  // failing; 0 keeps the hard failure.
  std::size_t sampled_specializations = 0;
  // How narrow layers pick channels from the supernet's widest layer.
  ChannelRule channel_rule = ChannelRule::kTopGamma;
  std::uint64_t seed = 0;
  EvoConfig evolution;
  std::size_t threads = 0;
};

struct SearchTrace {
  std::vector<StageRecord> path_stage;
  std::vector<StageRecord> operator_stage;
  std::vector<StageRecord> channel_stage;
  std::vector<GenerationStats> evolution_history;

  std::size_t chosen_path = 0;
  Genome g_optr;     // chosen path and operators, widest channels
  Genome g_channel;  // after channel search
  Genome g_star;     // final genome (g_channel after fine-tuning)

  std::size_t path_calls() const { return path_stage.size(); }
  std::size_t operator_calls() const { return operator_stage.size(); }
  std::size_t channel_calls() const { return channel_stage.size(); }
  std::size_t total_calls() const { return path_calls() + operator_calls() + channel_calls(); }
};

// Stage 1. Ties go to the lower path index.
std::size_t search_path(FitnessOracle& oracle, SearchTrace& trace, std::size_t threads = 0);

// Stage 2. Every member of every specialization is recorded (M * N_o
// records); ties go to the lexicographically smallest assignment.
Genome search_operators(FitnessOracle& oracle, std::size_t path, const SearchConfig& cfg,
                        SearchTrace& trace);

// Stage 3: evolutionary channel shrinking from the widest channels of `optr`.
EvolutionResult search_channels(FitnessOracle& oracle, const Genome& optr,
                                const SearchConfig& cfg, SearchTrace& trace);

// Stages 1-3.
SearchTrace run_search(FitnessOracle& oracle, const SearchConfig& cfg);

// Same as the stage-2 argmax over an explicit list of fitness values.
std::size_t argmax_first(const std::vector<double>& values);

struct JointResult {
  Genome best;
  double best_fitness = 0.0;
  CostReport best_cost;
  std::uint64_t evaluations = 0;
};

// Exhaustive product search. Only feasible genomes reach the oracle, so
// `evaluations` is the feasible count; ties go to the lexicographically
// smallest genome.
JointResult joint_search_baseline(FitnessOracle& oracle, std::uint64_t params_limit,
                                  std::uint64_t flops_limit,
                                  std::uint64_t cap = 10'000'000, std::size_t threads = 0);

// Evaluation count of the joint product for a spec.
std::uint64_t joint_search_size(const SupernetSpec& spec);

struct PipelineConfig {
  TrainConfig train;
  SearchConfig search;
  MetricKind metric = MetricKind::kFrechet;
  std::size_t finetune_epochs = 0;
};

struct PipelineResult {
  PretrainResult pretrain;
  SearchTrace trace;
  Supernet finetuned;
  std::vector<TrainRecord> finetune_records;
  double searched_fitness = 0.0;  // G_channel on the pretrained weights
  double final_fitness = 0.0;     // G_star after fine-tuning
};

// Pretrain, search, then fine-tune the found genome on a copy of the
// pretrained weights.
PipelineResult run_pipeline(const SupernetSpec& spec, const ToyDataset& data,
                            const PipelineConfig& cfg);

}  // namespace cfsearch
