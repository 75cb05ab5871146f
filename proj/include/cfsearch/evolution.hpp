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

// Constrained evolutionary channel search with elitism, uniform crossover and
// mutation steered by Replacement Gain (RG): the fitness change from swapping
// one layer's channel choice on the current best genome.

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "cfsearch/oracles.hpp"
#include "cfsearch/rng.hpp"

namespace cfsearch {

enum class MutationMode { kDirectional, kRandom };
enum class RgRefresh { kOnEliteChange, kOnce, kEveryGeneration };

std::string_view mutation_name(MutationMode m);
MutationMode parse_mutation(std::string_view name);
std::string_view refresh_name(RgRefresh r);
RgRefresh parse_refresh(std::string_view name);

struct EvoConfig {
  std::size_t population = 8;
  std::size_t elites = 2;
  std::size_t generations = 10;
  std::uint64_t params_limit = 0;
  std::uint64_t flops_limit = 0;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  MutationMode mutation = MutationMode::kDirectional;
  RgRefresh rg_refresh = RgRefresh::kOnEliteChange;
  // Unique oracle evaluations the run may spend; 0 means unlimited.
  std::size_t max_evaluations = 0;
  std::size_t max_resample = 50;
  std::size_t threads = 0;

  void validate() const;
};

struct RgTable {
  Genome baseline;
  double baseline_fitness = 0.0;
  std::vector<std::vector<double>> rg;        // [layer][choice]
  std::vector<std::vector<double>> rg_norm;   // [layer][choice]
  std::vector<std::vector<double>> p_select;  // [layer][choice], rows sum to 1
  std::vector<std::vector<bool>> feasible;    // [layer][choice]
  std::size_t staleness = 0;                  // generations since computed
};

// RG of every single-layer channel swap of `baseline`. Swaps that break the
// constraints are not evaluated; they get the row minimum so they keep only
// epsilon mass after normalization. `evaluated` collects genomes sent to the
// oracle.
RgTable compute_rg(const Genome& baseline, FitnessOracle& oracle,
                   std::uint64_t params_limit, std::uint64_t flops_limit,
                   std::set<Genome>* evaluated = nullptr, std::size_t threads = 0);

// rg_norm = rg - min_j rg + epsilon per layer; p_select = rg_norm / row sum.
void normalize_rg(RgTable& table, double epsilon);

// One uniformly chosen layer gets a channel choice drawn from its p_select row.
Genome mutate_directional(const Genome& parent, const RgTable& table, Rng& rng);
// One uniformly chosen layer gets a uniformly drawn channel choice.
Genome mutate_random(const SupernetSpec& spec, const Genome& parent, Rng& rng);
// Per-layer fair coin between the parents' channel choices.
Genome crossover(const Genome& a, const Genome& b, Rng& rng);

struct GenerationStats {
  std::size_t generation = 0;
  double best_fitness = 0.0;  // best ever
  double mean_fitness = 0.0;  // current population
  std::size_t oracle_calls = 0;  // unique evaluations so far
  double feasible_fraction = 1.0;  // first draws that met the constraints
};

struct EvolutionResult {
  Genome best;
  double best_fitness = 0.0;
  CostReport best_cost;
  std::vector<GenerationStats> history;
  // Unique genomes in the order they were first evaluated.
  std::vector<Genome> evaluated;
  std::vector<double> evaluated_fitness;
  bool budget_exhausted = false;
};

void write_history_csv(std::ostream& out, const std::vector<GenerationStats>& history);

// Searches channel choices for the path, operators and recursion of `base`.
EvolutionResult shrink_channels(const Genome& base, FitnessOracle& oracle, const EvoConfig& cfg);

}  // namespace cfsearch
