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

#include "cfsearch/coarse_to_fine.hpp"

#include <algorithm>
#include <numeric>

#include "cfsearch/error.hpp"
#include "cfsearch/rng.hpp"

namespace cfsearch {
namespace {

StageRecord make_record(const Genome& g, const Evaluation& e) {
  return {to_string(g), g, e.fitness, e.cost};
}

std::vector<Specialization> specializations_for(std::size_t M, std::size_t L,
                                                const SearchConfig& cfg) {
  try {
    return enumerate_specializations(M, L, cfg.enumeration_cap);
  } catch (const EnumerationTooLarge& e) {
    if (cfg.sampled_specializations == 0) {
      throw EnumerationTooLarge(std::string(e.what()) +
                                "; use fewer operators or layers, raise "
                                "search.enumeration_cap, or set "
                                "search.sampled_specializations");
    }
  }
  Rng rng(derive_seed(cfg.seed, "specializations"));
  std::vector<std::size_t> identity(M);
  std::iota(identity.begin(), identity.end(), 0);
  std::vector<Specialization> out;
  for (std::size_t s = 0; s < cfg.sampled_specializations; ++s) {
    Specialization spec(M, OperatorAssignment(L));
    for (std::size_t i = 0; i < M; ++i) spec[i][0] = i;
    for (std::size_t l = 1; l < L; ++l) {
      std::vector<std::size_t> perm = identity;
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t i = 0; i < M; ++i) spec[i][l] = perm[i];
    }
    out.push_back(std::move(spec));
  }
  return out;
}

}  // namespace

std::size_t argmax_first(const std::vector<double>& values) {
  if (values.empty()) throw ValidationError("argmax of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t search_path(FitnessOracle& oracle, SearchTrace& trace, std::size_t threads) {
  const SupernetSpec& spec = oracle.spec();
  const std::size_t n = spec.num_paths();
  if (n == 0) throw ConfigError("search space has no paths");
  std::vector<double> scores(n);
  parallel_for(n, threads, [&](std::size_t p) { scores[p] = oracle.score_path(p); });
  for (std::size_t p = 0; p < n; ++p) {
    trace.path_stage.push_back({"path:" + std::to_string(p) + ";mixed",
                                widest_genome(spec, p, {}), scores[p],
                                mixed_path_cost(spec, p)});
  }
  trace.chosen_path = argmax_first(scores);
  return trace.chosen_path;
}

Genome search_operators(FitnessOracle& oracle, std::size_t path, const SearchConfig& cfg,
                        SearchTrace& trace) {
  const SupernetSpec& spec = oracle.spec();
  const PathSpec& ps = spec.paths.at(path);
  const auto specs = specializations_for(ps.num_operators(), ps.num_layers(), cfg);

  std::vector<Genome> candidates;
  for (const auto& s : specs) {
    for (const auto& assignment : s) candidates.push_back(widest_genome(spec, path, assignment));
  }
  const auto results = evaluate_all(oracle, candidates, cfg.threads);

  std::size_t best = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    trace.operator_stage.push_back(make_record(candidates[i], results[i]));
    const bool better = results[i].fitness > results[best].fitness ||
                        (results[i].fitness == results[best].fitness &&
                         candidates[i].operators < candidates[best].operators);
    if (better) best = i;
  }
  trace.g_optr = candidates[best];
  return trace.g_optr;
}

std::uint64_t joint_search_size(const SupernetSpec& spec) { return genome_space_size(spec); }

JointResult joint_search_baseline(FitnessOracle& oracle, std::uint64_t params_limit,
                                  std::uint64_t flops_limit, std::uint64_t cap,
                                  std::size_t threads) {
  const SupernetSpec& spec = oracle.spec();
  const std::uint64_t size = joint_search_size(spec);
  if (size > cap) {
    throw EnumerationTooLarge("joint search space has " + std::to_string(size) +
                              " genomes, above the cap of " + std::to_string(cap));
  }
  std::vector<Genome> feasible_genomes;
  std::vector<CostReport> costs;
  for (auto& g : enumerate_genomes(spec)) {
    CostReport c = genome_cost(spec, g);
    if (satisfies_constraints(c, params_limit, flops_limit)) {
      feasible_genomes.push_back(std::move(g));
      costs.push_back(std::move(c));
    }
  }
  if (feasible_genomes.empty()) throw InfeasibleError("no genome satisfies the constraints");
  const auto results = evaluate_all(oracle, feasible_genomes, threads);
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i) {
    if (results[i].fitness > results[best].fitness) best = i;
  }
  return {feasible_genomes[best], results[best].fitness, costs[best], results.size()};
}

EvolutionResult search_channels(FitnessOracle& oracle, const Genome& optr,
                                const SearchConfig& cfg, SearchTrace& trace) {
  EvoConfig evo = cfg.evolution;
  evo.params_limit = cfg.params_limit;
  evo.flops_limit = cfg.flops_limit;
  if (evo.threads == 0) evo.threads = cfg.threads;
  EvolutionResult er = shrink_channels(optr, oracle, evo);
  for (std::size_t i = 0; i < er.evaluated.size(); ++i) {
    trace.channel_stage.push_back({to_string(er.evaluated[i]), er.evaluated[i],
                                   er.evaluated_fitness[i],
                                   genome_cost(oracle.spec(), er.evaluated[i])});
  }
  trace.evolution_history = er.history;
  trace.g_channel = er.best;
  trace.g_star = er.best;
  return er;
}

SearchTrace run_search(FitnessOracle& oracle, const SearchConfig& cfg) {
  SearchTrace trace;
  const std::size_t path = search_path(oracle, trace, cfg.threads);
  const Genome optr = search_operators(oracle, path, cfg, trace);
  search_channels(oracle, optr, cfg, trace);
  return trace;
}

PipelineResult run_pipeline(const SupernetSpec& spec, const ToyDataset& data,
                            const PipelineConfig& cfg) {
  PipelineResult res{pretrain_supernet(spec, data, cfg.train), {}, {}, {}, 0.0, 0.0};
  res.pretrain.net.set_channel_rule(cfg.search.channel_rule);
  GanFitnessOracle oracle(res.pretrain.net, data, cfg.metric);
  res.trace = run_search(oracle, cfg.search);
  res.searched_fitness = oracle.evaluate(res.trace.g_channel).fitness;
  res.finetuned = res.pretrain.net.snapshot();
  if (cfg.finetune_epochs > 0) {
    res.finetune_records =
        finetune(res.finetuned, res.trace.g_channel, data, cfg.train, cfg.finetune_epochs);
  }
  res.final_fitness = evaluate_genome(res.finetuned, res.trace.g_channel, data, cfg.metric);
  return res;
}

}  // namespace cfsearch
