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

#include "cfsearch/evolution.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>

#include "cfsearch/error.hpp"

namespace cfsearch {

std::string_view mutation_name(MutationMode m) {
  return m == MutationMode::kDirectional ? "directional" : "random";
}

MutationMode parse_mutation(std::string_view name) {
  if (name == "directional") return MutationMode::kDirectional;
  if (name == "random") return MutationMode::kRandom;
  throw ConfigError("unknown mutation mode '" + std::string(name) +
                    "' (expected directional or random)");
}

std::string_view refresh_name(RgRefresh r) {
  switch (r) {
    case RgRefresh::kOnEliteChange: return "on_elite_change";
    case RgRefresh::kOnce: return "once";
    case RgRefresh::kEveryGeneration: return "every_generation";
  }
  return "?";
}

RgRefresh parse_refresh(std::string_view name) {
  for (auto r : {RgRefresh::kOnEliteChange, RgRefresh::kOnce, RgRefresh::kEveryGeneration}) {
    if (refresh_name(r) == name) return r;
  }
  throw ConfigError("unknown rg_refresh '" + std::string(name) +
                    "' (expected on_elite_change, once or every_generation)");
}

void EvoConfig::validate() const {
  if (population < 2 || population % 2 != 0) {
    throw ConfigError("evolution.population must be even and >= 2");
  }
  if (elites < 1 || elites > population / 2) {
    throw ConfigError("evolution.elites must be in [1, population / 2]");
  }
  if (generations < 1) throw ConfigError("evolution.generations must be >= 1");
  if (!(epsilon > 0.0)) throw ConfigError("evolution.epsilon must be > 0");
  if (max_evaluations != 0 && max_evaluations < population) {
    throw ConfigError("evolution.max_evaluations must cover the initial population");
  }
}

namespace {

Genome with_channel(Genome g, std::size_t layer, std::size_t choice) {
  g.channels[layer] = choice;
  return g;
}

bool feasible(const SupernetSpec& spec, const Genome& g, std::uint64_t params_limit,
              std::uint64_t flops_limit) {
  return satisfies_constraints(genome_cost(spec, g), params_limit, flops_limit);
}

std::size_t draw_from(const std::vector<double>& probs, Rng& rng) {
  const double u = uniform_real(rng, 0.0, 1.0);
  double cum = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    cum += probs[j];
    if (u < cum) return j;
  }
  return probs.size() - 1;
}

}  // namespace

RgTable compute_rg(const Genome& baseline_in, FitnessOracle& oracle,
                   std::uint64_t params_limit, std::uint64_t flops_limit,
                   std::set<Genome>* evaluated, std::size_t threads) {
  const SupernetSpec& spec = oracle.spec();
  const Genome baseline = normalized(spec, baseline_in);
  if (!feasible(spec, baseline, params_limit, flops_limit)) {
    throw InfeasibleError("RG baseline " + to_string(baseline) + " violates the constraints");
  }
  RgTable t;
  t.baseline = baseline;
  t.baseline_fitness = oracle.evaluate(baseline).fitness;
  if (evaluated) evaluated->insert(baseline);
  const std::size_t L = baseline.channels.size();
  const std::size_t K = spec.channel_choices.size();
  t.rg.assign(L, std::vector<double>(K, 0.0));
  t.feasible.assign(L, std::vector<bool>(K, true));

  std::vector<Genome> probes;
  std::vector<std::pair<std::size_t, std::size_t>> where;
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t j = 0; j < K; ++j) {
      if (j == baseline.channels[l]) continue;
      Genome g = with_channel(baseline, l, j);
      if (!feasible(spec, g, params_limit, flops_limit)) {
        t.feasible[l][j] = false;
        continue;
      }
      probes.push_back(std::move(g));
      where.emplace_back(l, j);
    }
  }
  const auto results = evaluate_all(oracle, probes, threads);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    t.rg[where[i].first][where[i].second] = results[i].fitness - t.baseline_fitness;
    if (evaluated) evaluated->insert(probes[i]);
  }
  for (std::size_t l = 0; l < L; ++l) {
    double row_min = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      if (t.feasible[l][j]) row_min = std::min(row_min, t.rg[l][j]);
    }
    for (std::size_t j = 0; j < K; ++j) {
      if (!t.feasible[l][j]) t.rg[l][j] = row_min;
    }
  }
  return t;
}

void normalize_rg(RgTable& t, double epsilon) {
  if (!(epsilon > 0.0)) throw ValidationError("normalize_rg needs epsilon > 0");
  t.rg_norm = t.rg;
  t.p_select = t.rg;
  for (std::size_t l = 0; l < t.rg.size(); ++l) {
    const auto& row = t.rg[l];
    if (row.empty()) continue;
    const double lo = *std::min_element(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      t.rg_norm[l][j] = row[j] - lo + epsilon;
      total += t.rg_norm[l][j];
    }
    for (std::size_t j = 0; j < row.size(); ++j) t.p_select[l][j] = t.rg_norm[l][j] / total;
  }
}

Genome mutate_directional(const Genome& parent, const RgTable& table, Rng& rng) {
  if (table.p_select.size() != parent.channels.size()) {
    throw ValidationError("mutate_directional: RG table is not normalized for this genome");
  }
  Genome child = parent;
  const std::size_t l = uniform_index(rng, child.channels.size());
  child.channels[l] = draw_from(table.p_select[l], rng);
  return child;
}

Genome mutate_random(const SupernetSpec& spec, const Genome& parent, Rng& rng) {
  Genome child = parent;
  const std::size_t l = uniform_index(rng, child.channels.size());
  child.channels[l] = uniform_index(rng, spec.channel_choices.size());
  return child;
}

Genome crossover(const Genome& a, const Genome& b, Rng& rng) {
  if (a.path != b.path || a.operators != b.operators || a.recursion != b.recursion ||
      a.channels.size() != b.channels.size()) {
    throw ValidationError("crossover parents must share path, operators and recursion");
  }
  Genome child = a;
  for (std::size_t l = 0; l < child.channels.size(); ++l) {
    child.channels[l] = uniform_index(rng, 2) == 0 ? a.channels[l] : b.channels[l];
  }
  return child;
}

void write_history_csv(std::ostream& out, const std::vector<GenerationStats>& history) {
  out << "generation,best_fitness,mean_fitness,oracle_calls,feasible_fraction\n";
  char buf[256];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%zu,%.17g\n", h.generation,
                  h.best_fitness, h.mean_fitness, h.oracle_calls, h.feasible_fraction);
    out << buf;
  }
}

EvolutionResult shrink_channels(const Genome& base_in, FitnessOracle& oracle,
                                const EvoConfig& cfg) {
  cfg.validate();
  const SupernetSpec& spec = oracle.spec();
  const Genome base = normalized(spec, base_in);
  require_valid(spec, base);
  const std::size_t L = base.channels.size();
  const std::size_t K = spec.channel_choices.size();
  const std::uint64_t P = cfg.params_limit, F = cfg.flops_limit;

  Genome minimal = base;
  std::fill(minimal.channels.begin(), minimal.channels.end(), 0);
  {
    const CostReport c = genome_cost(spec, minimal);
    if (!satisfies_constraints(c, P, F)) {
      const double rp = P == 0 ? 1e300 : static_cast<double>(c.params) / static_cast<double>(P);
      const double rf = F == 0 ? 1e300 : static_cast<double>(c.flops) / static_cast<double>(F);
      throw InfeasibleError(
          rp >= rf ? "minimal channel configuration needs " + std::to_string(c.params) +
                         " params, limit is < " + std::to_string(P)
                   : "minimal channel configuration needs " + std::to_string(c.flops) +
                         " FLOPs, limit is < " + std::to_string(F));
    }
  }

  Rng rng(cfg.seed);
  EvolutionResult res;
  std::map<Genome, double> fitness;
  std::optional<std::pair<double, Genome>> best;

  auto consider = [&](const Genome& g, double f) {
    if (!best || f > best->first || (f == best->first && g < best->second)) best = {f, g};
  };
  auto remember = [&](const Genome& g, double f) {
    if (fitness.emplace(g, f).second) {
      res.evaluated.push_back(g);
      res.evaluated_fitness.push_back(f);
      consider(g, f);
    }
  };
  auto within_budget = [&](std::size_t extra) {
    return cfg.max_evaluations == 0 || fitness.size() + extra <= cfg.max_evaluations;
  };
  // Evaluates the unseen candidates, or returns false if that would overrun
  // the budget.
  auto evaluate = [&](const std::vector<Genome>& candidates) {
    std::vector<Genome> fresh;
    std::set<Genome> pending;
    for (const auto& g : candidates) {
      if (!fitness.count(g) && pending.insert(g).second) fresh.push_back(g);
    }
    if (!within_budget(fresh.size())) return false;
    const auto results = evaluate_all(oracle, fresh, cfg.threads);
    for (std::size_t i = 0; i < fresh.size(); ++i) remember(fresh[i], results[i].fitness);
    return true;
  };

  std::size_t draws = 0, first_feasible = 0;
  auto draw_feasible = [&](auto&& make) {
    ++draws;
    for (std::size_t attempt = 0; attempt <= cfg.max_resample; ++attempt) {
      Genome g = normalized(spec, make());
      if (feasible(spec, g, P, F)) {
        if (attempt == 0) ++first_feasible;
        return g;
      }
    }
    return minimal;
  };
  auto stats = [&](std::size_t generation, const std::vector<Genome>& pop) {
    double mean = 0.0;
    for (const auto& g : pop) mean += fitness.at(g);
    GenerationStats s;
    s.generation = generation;
    s.best_fitness = best->first;
    s.mean_fitness = mean / static_cast<double>(pop.size());
    s.oracle_calls = fitness.size();
    s.feasible_fraction =
        draws == 0 ? 1.0 : static_cast<double>(first_feasible) / static_cast<double>(draws);
    draws = first_feasible = 0;
    return s;
  };

  std::vector<Genome> population;
  for (std::size_t i = 0; i < cfg.population; ++i) {
    population.push_back(draw_feasible([&] {
      Genome g = base;
      for (auto& c : g.channels) c = uniform_index(rng, K);
      return g;
    }));
  }
  evaluate(population);
  res.history.push_back(stats(0, population));

  std::optional<RgTable> table;
  for (std::size_t gen = 1; gen <= cfg.generations; ++gen) {
    std::vector<Genome> ranked = population;
    std::sort(ranked.begin(), ranked.end(), [&](const Genome& a, const Genome& b) {
      const double fa = fitness.at(a), fb = fitness.at(b);
      return fa != fb ? fa > fb : a < b;
    });
    ranked.erase(std::unique(ranked.begin(), ranked.end()), ranked.end());
    std::vector<Genome> elites(ranked.begin(),
                               ranked.begin() + static_cast<std::ptrdiff_t>(
                                                    std::min(cfg.elites, ranked.size())));
    while (elites.size() < cfg.elites) elites.push_back(elites[elites.size() % ranked.size()]);

    bool directional = cfg.mutation == MutationMode::kDirectional;
    if (directional) {
      const bool refresh =
          !table || cfg.rg_refresh == RgRefresh::kEveryGeneration ||
          (cfg.rg_refresh == RgRefresh::kOnEliteChange && table->baseline != elites.front());
      if (refresh) {
        std::size_t needed = 0;
        for (std::size_t l = 0; l < L; ++l) {
          for (std::size_t j = 0; j < K; ++j) {
            const Genome g = with_channel(elites.front(), l, j);
            if (!fitness.count(g) && feasible(spec, g, P, F)) ++needed;
          }
        }
        if (within_budget(needed)) {
          std::set<Genome> probed;
          table = compute_rg(elites.front(), oracle, P, F, &probed, cfg.threads);
          normalize_rg(*table, cfg.epsilon);
          for (const auto& g : probed) {
            if (!fitness.count(g)) remember(g, oracle.evaluate(g).fitness);
          }
        } else if (table) {
          ++table->staleness;
        }
      } else {
        ++table->staleness;
      }
      directional = table.has_value();
    }

    std::vector<Genome> children;
    const std::size_t half = cfg.population / 2;
    for (std::size_t i = 0; i + cfg.elites < half; ++i) {
      children.push_back(draw_feasible([&] {
        const Genome& a = elites[uniform_index(rng, elites.size())];
        const Genome& b = elites[uniform_index(rng, elites.size())];
        return crossover(a, b, rng);
      }));
    }
    for (std::size_t i = 0; i < half; ++i) {
      children.push_back(draw_feasible([&] {
        const Genome& parent = elites[uniform_index(rng, elites.size())];
        return directional ? mutate_directional(parent, *table, rng)
                           : mutate_random(spec, parent, rng);
      }));
    }
    if (!evaluate(children)) {
      res.budget_exhausted = true;
      break;
    }
    population = elites;
    population.insert(population.end(), children.begin(), children.end());
    res.history.push_back(stats(gen, population));
  }

  res.best = best->second;
  res.best_fitness = best->first;
  res.best_cost = genome_cost(spec, res.best);
  return res;
}

}  // namespace cfsearch
