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

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cfsearch/error.hpp"
#include "cfsearch/evolution.hpp"
#include "cfsearch/oracles.hpp"
#include "test_support.hpp"

using namespace cfsearch;

namespace {

// |observed - expected| within `sigmas` binomial standard deviations.
bool within_sigmas(std::size_t hits, std::size_t n, double p, double sigmas) {
  const double sd = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
  return std::abs(static_cast<double>(hits) - static_cast<double>(n) * p) <= sigmas * sd + 1e-9;
}

struct Limits {
  std::uint64_t params, flops;
};

Limits fraction_limits(const SupernetSpec& spec, double fraction) {
  std::uint64_t p = 0, f = 0;
  for (const auto& g : enumerate_genomes(spec)) {
    const CostReport c = genome_cost(spec, g);
    p = std::max(p, c.params);
    f = std::max(f, c.flops);
  }
  return {static_cast<std::uint64_t>(std::floor(fraction * static_cast<double>(p))),
          static_cast<std::uint64_t>(std::floor(fraction * static_cast<double>(f)))};
}

// Fitness grows strictly with every channel choice.
class WiderIsBetter : public FitnessOracle {
 public:
  using FitnessOracle::FitnessOracle;

 protected:
  double compute_fitness(const Genome& g) const override {
    double v = 0.0;
    for (std::size_t l = 0; l < g.channels.size(); ++l) {
      v += static_cast<double>((l + 1) * g.channels[l]);
    }
    return v;
  }
  double compute_path_score(std::size_t) const override { return 0.0; }
};

}  // namespace

TEST_CASE("landscapes are seeded tables over the whole space") {
  const SupernetSpec spec = testing::grid_spec(2, 2, 2);
  for (LandscapeRule rule : {LandscapeRule::kSeparable, LandscapeRule::kMonotonePlateau,
                             LandscapeRule::kRandomSeeded, LandscapeRule::kDeceptive}) {
    CAPTURE(rule_name(rule));
    const TabularLandscape a = build_landscape(spec, rule, 4);
    const TabularLandscape b = build_landscape(spec, rule, 4);
    const TabularLandscape c = build_landscape(spec, rule, 5);
    CHECK(a.genomes().size() == 32);
    CHECK(a.values() == b.values());
    CHECK(a.values() != c.values());
    CHECK(std::is_sorted(a.genomes().begin(), a.genomes().end()));
    CHECK(*std::max_element(a.values().begin(), a.values().end()) == doctest::Approx(1.0));
    CHECK(*std::min_element(a.values().begin(), a.values().end()) == doctest::Approx(0.1));
    CHECK(parse_rule(rule_name(rule)) == rule);
  }
  CHECK_THROWS_AS(parse_rule("flat"), ConfigError);
  CHECK_THROWS_AS(build_landscape(testing::grid_spec(2, 5, 3, {2, 4, 6, 8}),
                                  LandscapeRule::kSeparable, 0),
                  EnumerationTooLarge);
  CHECK_THROWS_AS(build_landscape(spec, LandscapeRule::kRandomSeeded, 0, -1.0), ConfigError);
  const TabularLandscape t = build_landscape(spec, LandscapeRule::kSeparable, 0);
  CHECK_THROWS_AS(t.lookup(Genome{0, {0, 0, 0}, {0, 0, 0}, {}}), ValidationError);
}

TEST_CASE("landscape rules have their defining structure") {
  const SupernetSpec spec = testing::grid_spec(2, 3, 2, {2, 4, 6, 8});
  const TabularLandscape sep = build_landscape(spec, LandscapeRule::kSeparable, 9);

  // Separable: the effect of one gene does not depend on the others.
  for (const auto& g : sep.genomes()) {
    for (std::size_t l = 0; l < 3; ++l) {
      Genome a = g, b = g, a0 = g, b0 = g;
      a.channels[l] = 0;
      b.channels[l] = 3;
      a0.channels = b0.channels = {0, 0, 0};
      a0.operators = b0.operators = {0, 0, 0};
      a0.channels[l] = 0;
      b0.channels[l] = 3;
      CHECK(sep.lookup(b) - sep.lookup(a) == doctest::Approx(sep.lookup(b0) - sep.lookup(a0)));
    }
  }
  // Its argmax is the composition of per-gene argmaxes.
  Genome composed;
  double composed_value = -1.0;
  for (std::size_t p = 0; p < 2; ++p) {
    Genome g{p, {0, 0, 0}, {0, 0, 0}, {}};
    for (std::size_t l = 0; l < 3; ++l) {
      for (std::size_t pass = 0; pass < 2; ++pass) {
        auto& gene = pass == 0 ? g.operators[l] : g.channels[l];
        const std::size_t n = pass == 0 ? 2 : 4;
        std::size_t best = 0;
        for (std::size_t k = 1; k < n; ++k) {
          Genome trial = g, incumbent = g;
          (pass == 0 ? trial.operators[l] : trial.channels[l]) = k;
          (pass == 0 ? incumbent.operators[l] : incumbent.channels[l]) = best;
          if (sep.lookup(trial) > sep.lookup(incumbent)) best = k;
        }
        gene = best;
      }
    }
    if (sep.lookup(g) > composed_value) {
      composed_value = sep.lookup(g);
      composed = g;
    }
  }
  const Optimum free = exhaustive_optimum(sep, UINT64_MAX, UINT64_MAX);
  CHECK(free.genome == composed);
  CHECK(free.fitness == doctest::Approx(1.0));

  // Monotone-plateau: never decreases in a channel gene.
  const TabularLandscape mono = build_landscape(spec, LandscapeRule::kMonotonePlateau, 9);
  for (const auto& g : mono.genomes()) {
    for (std::size_t l = 0; l < 3; ++l) {
      if (g.channels[l] + 1 == 4) continue;
      Genome up = g;
      ++up.channels[l];
      CHECK(mono.lookup(up) >= mono.lookup(g));
    }
  }

  // Random-seeded without interaction noise is the separable table.
  const TabularLandscape quiet = build_landscape(spec, LandscapeRule::kRandomSeeded, 9, 0.0);
  CHECK(quiet.values() == sep.values());
  const TabularLandscape noisy = build_landscape(spec, LandscapeRule::kRandomSeeded, 9);
  CHECK(noisy.values() != sep.values());

  // Deceptive: one peak at 1, everything else at most 0.8.
  const TabularLandscape dec = build_landscape(spec, LandscapeRule::kDeceptive, 9);
  CHECK(std::count(dec.values().begin(), dec.values().end(), 1.0) == 1);
  for (double v : dec.values()) CHECK((v == 1.0 || v <= 0.8 * 0.9 + 0.1 + 1e-12));
}

TEST_CASE("exhaustive optimum respects strict constraints") {
  const SupernetSpec spec = testing::grid_spec(2, 3, 2, {2, 4, 6, 8});
  const TabularLandscape land = build_landscape(spec, LandscapeRule::kRandomSeeded, 2);
  for (double fraction : {0.3, 0.5, 0.8, 1.0}) {
    const Limits lim = fraction_limits(spec, fraction);
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < land.genomes().size(); ++i) {
      const CostReport c = genome_cost(spec, land.genomes()[i]);
      if (c.params >= lim.params || c.flops >= lim.flops) continue;
      if (!best || land.values()[i] > land.values()[*best]) best = i;
    }
    if (!best) {
      CHECK_THROWS_AS(exhaustive_optimum(land, lim.params, lim.flops), InfeasibleError);
      continue;
    }
    const Optimum o = exhaustive_optimum(land, lim.params, lim.flops);
    CHECK(o.genome == land.genomes()[*best]);
    CHECK(o.fitness == land.values()[*best]);
    CHECK(o.cost.params < lim.params);
  }
  CHECK_THROWS_AS(exhaustive_optimum(land, 1, 1), InfeasibleError);

  // Limits just below the global optimum's cost exclude it.
  const Optimum global = exhaustive_optimum(land, UINT64_MAX, UINT64_MAX);
  const Optimum capped = exhaustive_optimum(land, global.cost.params, UINT64_MAX);
  CHECK(capped.cost.params < global.cost.params);
  CHECK(capped.fitness < global.fitness);

  std::ostringstream out;
  land.write_table(out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line[0] == '#');
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string text;
    double fitness;
    std::uint64_t params, flops;
    fields >> text >> fitness >> params >> flops;
    const Genome g = parse_genome(text);
    CHECK(g == land.genomes()[rows]);
    CHECK(fitness == land.values()[rows]);
    CHECK(params == genome_cost(spec, g).params);
    CHECK(flops == genome_cost(spec, g).flops);
    ++rows;
  }
  CHECK(rows == land.genomes().size());
}

TEST_CASE("oracle memoization and parallel evaluation") {
  const SupernetSpec spec = testing::grid_spec(2, 2, 2);
  TabularLandscape land = build_landscape(spec, LandscapeRule::kSeparable, 1);
  const Genome g = land.genomes()[5];
  CHECK(land.evaluate(g).fitness == land.lookup(g));
  CHECK(land.evaluate(g).cost.params == genome_cost(spec, g).params);
  CHECK(land.unique_evaluations() == 1);

  std::vector<Genome> batch;
  for (int r = 0; r < 3; ++r) batch.insert(batch.end(), land.genomes().begin(), land.genomes().end());
  const auto results = evaluate_all(land, batch, 4);
  REQUIRE(results.size() == batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(results[i].fitness == land.lookup(batch[i]));
  CHECK(land.unique_evaluations() == land.genomes().size());

  for (std::size_t p = 0; p < 2; ++p) {
    double sum = 0.0;
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t b = 0; b < 2; ++b) sum += land.lookup(Genome{p, {a, b}, {1, 1}, {}});
    }
    CHECK(land.score_path(p) == doctest::Approx(sum / 4.0));
  }

  std::vector<int> hit(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hit[i] += 1; });
  CHECK(std::count(hit.begin(), hit.end(), 1) == 100);
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](std::size_t i) {
                                 if (i == 7) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
}

TEST_CASE("GAN oracle scores subnets of a frozen copy") {
  SupernetSpec spec = testing::grid_spec(2, 2, 2);
  conform_spec_to_task(spec, TaskKind::kTranslation);
  spec = finalize_spec(std::move(spec));
  const ToyDataset data = make_dataset({TaskKind::kTranslation, 8, 8, 1});
  Supernet net(spec, 2);
  auto oracle = gan_fitness_adapter(net, data, MetricKind::kFrechet);
  const Genome g{1, {0, 1}, {0, 1}, {}};
  const double expect = evaluate_genome(net, g, data, MetricKind::kFrechet);
  CHECK(oracle->evaluate(g).fitness == expect);
  const CostReport direct = genome_cost(spec, g);
  CHECK(oracle->evaluate(g).cost.params == direct.params);
  CHECK(oracle->evaluate(g).cost.flops == direct.flops);
  CHECK(oracle->score_path(0) ==
        evaluate_selection(net, SubnetSelection::mixed(0), data, MetricKind::kFrechet));
  net.gammas().gamma[1][0].mutable_value().fill(0.0);
  CHECK(oracle->evaluate(g).fitness == expect);
  CHECK(oracle->unique_evaluations() == 1);
}

TEST_CASE("replacement gain and its normalization") {
  RgTable t;
  t.rg = {{0.1, 0.4, 0.3}};
  normalize_rg(t, 1e-8);
  REQUIRE(t.p_select.size() == 1);
  CHECK(t.rg_norm[0][0] == doctest::Approx(1e-8));
  CHECK(t.p_select[0][0] == doctest::Approx(2e-8).epsilon(1e-6));
  CHECK(t.p_select[0][1] == doctest::Approx(0.6));
  CHECK(t.p_select[0][2] == doctest::Approx(0.4));
  CHECK_THROWS_AS(normalize_rg(t, 0.0), ValidationError);

  const SupernetSpec spec = testing::spec_256();
  TabularLandscape land = build_landscape(spec, LandscapeRule::kRandomSeeded, 3);
  const Limits lim = fraction_limits(spec, 0.6);
  const Genome base{0, {0, 0, 0, 0}, {1, 2, 0, 1}, {}};
  std::set<Genome> seen;
  const RgTable rg = compute_rg(base, land, lim.params, lim.flops, &seen);
  const double f0 = land.lookup(base);
  CHECK(rg.baseline_fitness == f0);
  std::size_t feasible_swaps = 0;
  for (std::size_t l = 0; l < 4; ++l) {
    double row_min = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      Genome s = base;
      s.channels[l] = k;
      const CostReport c = genome_cost(spec, s);
      if (c.params < lim.params && c.flops < lim.flops) row_min = std::min(row_min, land.lookup(s) - f0);
    }
    for (std::size_t k = 0; k < 4; ++k) {
      Genome s = base;
      s.channels[l] = k;
      const CostReport c = genome_cost(spec, s);
      const bool ok = c.params < lim.params && c.flops < lim.flops;
      CHECK(rg.feasible[l][k] == ok);
      if (k != base.channels[l] && ok) ++feasible_swaps;
      CHECK(rg.rg[l][k] == doctest::Approx(ok ? land.lookup(s) - f0 : row_min));
    }
  }
  CHECK(seen.size() == feasible_swaps + 1);
  const Genome wide{0, {0, 0, 0, 0}, {3, 3, 3, 3}, {}};
  CHECK_THROWS_AS(compute_rg(wide, land, lim.params, lim.flops), InfeasibleError);

  WiderIsBetter wider(spec);
  RgTable up = compute_rg(base, wider, UINT64_MAX, UINT64_MAX);
  normalize_rg(up, 1e-8);
  for (std::size_t l = 0; l < 4; ++l) {
    for (std::size_t k = 1; k < 4; ++k) {
      CHECK(up.rg[l][k] > up.rg[l][k - 1]);
      CHECK(up.p_select[l][k] > up.p_select[l][k - 1]);
    }
  }
}

TEST_CASE("single-layer mutation draws follow the selection row") {
  const SupernetSpec spec = testing::grid_spec(1, 1, 1, {2, 4, 6, 8});
  const Genome parent{0, {0}, {1}, {}};
  const std::size_t n = 100000;
  for (const std::vector<double>& row :
       {std::vector<double>{0.25, 0.25, 0.25, 0.25}, std::vector<double>{0.1, 0.2, 0.3, 0.4}}) {
    RgTable t;
    t.p_select = {row};
    std::vector<std::size_t> dir(4, 0), rnd(4, 0);
    Rng rng(23);
    for (std::size_t i = 0; i < n; ++i) {
      ++dir[mutate_directional(parent, t, rng).channels[0]];
      ++rnd[mutate_random(spec, parent, rng).channels[0]];
    }
    for (std::size_t k = 0; k < 4; ++k) {
      CAPTURE(k);
      CHECK(within_sigmas(dir[k], n, row[k], 3.0));
      CHECK(within_sigmas(rnd[k], n, 0.25, 3.0));
    }
  }
}

TEST_CASE("mutation and crossover distributions") {
  const SupernetSpec spec = testing::spec_256();
  const Genome parent{0, {0, 0, 0, 0}, {0, 1, 2, 3}, {}};
  RgTable t;
  t.p_select = {{0.1, 0.2, 0.3, 0.4}, {0.7, 0.1, 0.1, 0.1}, {0.25, 0.25, 0.25, 0.25},
                {0.0, 0.5, 0.5, 0.0}};
  const std::size_t n = 100000;
  std::vector<std::vector<std::size_t>> dir(4, std::vector<std::size_t>(4, 0)), rnd = dir;
  Rng rng(17);
  for (std::size_t i = 0; i < n; ++i) {
    const Genome d = mutate_directional(parent, t, rng);
    const Genome r = mutate_random(spec, parent, rng);
    CHECK(d.operators == parent.operators);
    std::size_t changed = 0;
    for (std::size_t l = 0; l < 4; ++l) {
      ++dir[l][d.channels[l]];
      ++rnd[l][r.channels[l]];
      changed += d.channels[l] != parent.channels[l];
    }
    CHECK(changed <= 1);
  }
  for (std::size_t l = 0; l < 4; ++l) {
    for (std::size_t k = 0; k < 4; ++k) {
      if (k == parent.channels[l]) continue;
      CAPTURE(l);
      CAPTURE(k);
      // 24 cells share one run, so the bound covers the family, not one cell.
      CHECK(within_sigmas(dir[l][k], n, t.p_select[l][k] / 4.0, 4.0));
      CHECK(within_sigmas(rnd[l][k], n, 1.0 / 16.0, 4.0));
    }
  }

  const Genome a{0, {0, 0, 0, 0}, {0, 0, 0, 0}, {}};
  const Genome b{0, {0, 0, 0, 0}, {3, 3, 3, 3}, {}};
  std::vector<std::size_t> from_a(4, 0);
  std::size_t both_first_two = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Genome c = crossover(a, b, rng);
    for (std::size_t l = 0; l < 4; ++l) {
      CHECK((c.channels[l] == 0 || c.channels[l] == 3));
      from_a[l] += c.channels[l] == 0;
    }
    both_first_two += c.channels[0] == 0 && c.channels[1] == 0;
  }
  for (std::size_t l = 0; l < 4; ++l) CHECK(within_sigmas(from_a[l], n, 0.5, 3.0));
  CHECK(within_sigmas(both_first_two, n, 0.25, 3.0));
}

TEST_CASE("evolution invariants") {
  const SupernetSpec spec = testing::spec_256();
  const Limits lim = fraction_limits(spec, 0.6);
  const Genome base{0, {0, 0, 0, 0}, {3, 3, 3, 3}, {}};
  for (MutationMode mode : {MutationMode::kDirectional, MutationMode::kRandom}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      CAPTURE(seed);
      TabularLandscape land = build_landscape(spec, LandscapeRule::kMonotonePlateau, seed);
      EvoConfig cfg;
      cfg.population = 8;
      cfg.elites = 2;
      cfg.generations = 12;
      cfg.params_limit = lim.params;
      cfg.flops_limit = lim.flops;
      cfg.seed = seed;
      cfg.mutation = mode;
      cfg.max_evaluations = 40;
      cfg.threads = 1;
      const EvolutionResult r = shrink_channels(base, land, cfg);

      CHECK(r.best_cost.params < lim.params);
      CHECK(r.best_cost.flops < lim.flops);
      CHECK(r.best.path == base.path);
      CHECK(r.best.operators == base.operators);
      CHECK(r.evaluated.size() <= 40);
      CHECK(r.evaluated.size() == r.evaluated_fitness.size());
      CHECK(std::set<Genome>(r.evaluated.begin(), r.evaluated.end()).size() == r.evaluated.size());
      double best_seen = -1.0;
      for (std::size_t i = 0; i < r.evaluated.size(); ++i) {
        const CostReport c = genome_cost(spec, r.evaluated[i]);
        CHECK(c.params < lim.params);
        CHECK(c.flops < lim.flops);
        CHECK(r.evaluated_fitness[i] == land.lookup(r.evaluated[i]));
        best_seen = std::max(best_seen, r.evaluated_fitness[i]);
      }
      CHECK(r.best_fitness == best_seen);
      CHECK(r.best_fitness <= exhaustive_optimum(land, lim.params, lim.flops).fitness);
      for (std::size_t i = 1; i < r.history.size(); ++i) {
        CHECK(r.history[i].best_fitness >= r.history[i - 1].best_fitness);
        CHECK(r.history[i].oracle_calls >= r.history[i - 1].oracle_calls);
      }
      CHECK(r.history.back().best_fitness == r.best_fitness);

      TabularLandscape again = build_landscape(spec, LandscapeRule::kMonotonePlateau, seed);
      const EvolutionResult r2 = shrink_channels(base, again, cfg);
      CHECK(r2.evaluated == r.evaluated);
      CHECK(r2.best == r.best);
    }
  }

  EvoConfig bad;
  bad.population = 7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.population = 8;
  bad.elites = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.elites = 2;
  bad.max_evaluations = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(parse_mutation(mutation_name(MutationMode::kRandom)) == MutationMode::kRandom);
  CHECK(parse_refresh(refresh_name(RgRefresh::kOnce)) == RgRefresh::kOnce);
}
