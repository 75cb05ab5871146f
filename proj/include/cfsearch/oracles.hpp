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

// Fitness oracles: a genome goes in, a higher-is-better fitness and its cost
// come out. Tabular landscapes give exhaustively known optima for checking the
// search stages; the GAN oracle scores subnets of a frozen pretrained
// supernet.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cfsearch/cost_model.hpp"
#include "cfsearch/network.hpp"
#include "cfsearch/search_space.hpp"
#include "cfsearch/trainer.hpp"

namespace cfsearch {

struct Evaluation {
  double fitness = 0.0;
  CostReport cost;
};

// Memoizing base. evaluate() and score_path() are safe to call from several
// threads; each distinct genome is computed once.
class FitnessOracle {
 public:
  explicit FitnessOracle(SupernetSpec spec);
  virtual ~FitnessOracle() = default;

  const SupernetSpec& spec() const { return spec_; }

  Evaluation evaluate(const Genome& g);
  // Score of a whole path with every operator active at full width.
  double score_path(std::size_t path);

  std::size_t unique_evaluations() const;

 protected:
  virtual double compute_fitness(const Genome& g) const = 0;
  virtual double compute_path_score(std::size_t path) const = 0;

 private:
  SupernetSpec spec_;
  mutable std::mutex mu_;
  std::map<Genome, double> fitness_cache_;
  std::map<std::size_t, double> path_cache_;
};

// Evaluates `genomes` with up to `threads` workers (0: CFSEARCH_THREADS or
// the hardware concurrency). Results keep the input order.
std::vector<Evaluation> evaluate_all(FitnessOracle& oracle, const std::vector<Genome>& genomes,
                                     std::size_t threads = 0);
std::size_t default_threads();

// Runs fn(0) ... fn(n - 1) on up to `threads` workers and rethrows the first
// failure.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

enum class LandscapeRule {
  kSeparable,        // sum of independent per-gene utilities
  kMonotonePlateau,  // non-decreasing in every channel gene, with flat steps
  kRandomSeeded,     // separable plus seeded per-genome interaction noise
  kDeceptive,        // a lone global peak; elsewhere fitness rises away from it
};

std::string_view rule_name(LandscapeRule r);
LandscapeRule parse_rule(std::string_view name);

inline constexpr std::uint64_t kMaxLandscapeSize = 100'000;

// Standard deviation of the per-genome interaction term of the random-seeded
// rule, in units of the raw utility scale (a path utility spans [0, 1]).
inline constexpr double kDefaultInteractionNoise = 0.05;

class TabularLandscape : public FitnessOracle {
 public:
  TabularLandscape(SupernetSpec spec, LandscapeRule rule, std::uint64_t seed,
                   double interaction_noise = kDefaultInteractionNoise);

  LandscapeRule rule() const { return rule_; }
  const std::vector<Genome>& genomes() const { return genomes_; }
  const std::vector<double>& values() const { return values_; }
  double lookup(const Genome& g) const;

  // One line per genome: "<genome>\t<fitness>\t<params>\t<flops>".
  void write_table(std::ostream& out) const;

 protected:
  double compute_fitness(const Genome& g) const override;
  // Mean over operator assignments at full width.
  double compute_path_score(std::size_t path) const override;

 private:
  LandscapeRule rule_;
  std::vector<Genome> genomes_;  // enumeration order (lexicographic)
  std::vector<double> values_;
};

TabularLandscape build_landscape(const SupernetSpec& spec, LandscapeRule rule,
                                 std::uint64_t seed,
                                 double interaction_noise = kDefaultInteractionNoise);

struct Optimum {
  Genome genome;
  double fitness = 0.0;
  CostReport cost;
};

// Constrained argmax over the table; ties go to the lexicographically smallest
// genome. Throws InfeasibleError when no genome fits.
Optimum exhaustive_optimum(const TabularLandscape& landscape, std::uint64_t params_limit,
                           std::uint64_t flops_limit);

// Scores genomes of a frozen copy of the supernet on the validation split.
class GanFitnessOracle : public FitnessOracle {
 public:
  GanFitnessOracle(const Supernet& net, const ToyDataset& data, MetricKind metric);

  const Supernet& network() const { return net_; }

 protected:
  double compute_fitness(const Genome& g) const override;
  double compute_path_score(std::size_t path) const override;

 private:
  Supernet net_;
  ToyDataset data_;
  MetricKind metric_;
};

std::unique_ptr<FitnessOracle> gan_fitness_adapter(const Supernet& net, const ToyDataset& data,
                                                   MetricKind metric);

}  // namespace cfsearch
