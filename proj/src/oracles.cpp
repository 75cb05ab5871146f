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

#include "cfsearch/oracles.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <ostream>
#include <thread>

#include "cfsearch/error.hpp"
#include "cfsearch/rng.hpp"

namespace cfsearch {

FitnessOracle::FitnessOracle(SupernetSpec spec) : spec_(std::move(spec)) {}

Evaluation FitnessOracle::evaluate(const Genome& g_in) {
  const Genome g = normalized(spec_, g_in);
  require_valid(spec_, g);
  std::optional<double> fitness;
  {
    std::lock_guard lock(mu_);
    if (auto it = fitness_cache_.find(g); it != fitness_cache_.end()) fitness = it->second;
  }
  if (!fitness) {
    const double f = compute_fitness(g);
    if (!std::isfinite(f)) {
      throw NumericalError("non-finite fitness for " + to_string(g));
    }
    std::lock_guard lock(mu_);
    fitness = fitness_cache_.emplace(g, f).first->second;
  }
  return {*fitness, genome_cost(spec_, g)};
}

double FitnessOracle::score_path(std::size_t path) {
  if (path >= spec_.num_paths()) {
    throw ValidationError("path " + std::to_string(path) + " out of range");
  }
  {
    std::lock_guard lock(mu_);
    if (auto it = path_cache_.find(path); it != path_cache_.end()) return it->second;
  }
  const double s = compute_path_score(path);
  if (!std::isfinite(s)) {
    throw NumericalError("non-finite path score for path " + std::to_string(path));
  }
  std::lock_guard lock(mu_);
  return path_cache_.emplace(path, s).first->second;
}

std::size_t FitnessOracle::unique_evaluations() const {
  std::lock_guard lock(mu_);
  return fitness_cache_.size();
}

std::size_t default_threads() {
  if (const char* env = std::getenv("CFSEARCH_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = default_threads();
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<Evaluation> evaluate_all(FitnessOracle& oracle, const std::vector<Genome>& genomes,
                                     std::size_t threads) {
  std::vector<Evaluation> out(genomes.size());
  parallel_for(genomes.size(), threads, [&](std::size_t i) { out[i] = oracle.evaluate(genomes[i]); });
  return out;
}

std::string_view rule_name(LandscapeRule r) {
  switch (r) {
    case LandscapeRule::kSeparable: return "separable";
    case LandscapeRule::kMonotonePlateau: return "monotone-plateau";
    case LandscapeRule::kRandomSeeded: return "random-seeded";
    case LandscapeRule::kDeceptive: return "deceptive";
  }
  return "?";
}

LandscapeRule parse_rule(std::string_view name) {
  for (auto r : {LandscapeRule::kSeparable, LandscapeRule::kMonotonePlateau,
                 LandscapeRule::kRandomSeeded, LandscapeRule::kDeceptive}) {
    if (rule_name(r) == name) return r;
  }
  throw ConfigError("unknown landscape rule '" + std::string(name) +
                    "' (expected separable, monotone-plateau, random-seeded or deceptive)");
}

namespace {

// Per-gene utilities of one path.
struct PathUtilities {
  double path = 0.0;
  std::vector<std::vector<double>> op;   // [layer][operator]
  std::vector<std::vector<double>> ch;   // [layer][channel choice]
  std::vector<std::vector<double>> rec;  // [layer][recursion choice]
};

std::vector<PathUtilities> draw_utilities(const SupernetSpec& spec, LandscapeRule rule,
                                          Rng& rng) {
  std::vector<PathUtilities> u(spec.num_paths());
  const std::size_t K = spec.channel_choices.size();
  for (std::size_t p = 0; p < spec.num_paths(); ++p) {
    const PathSpec& path = spec.paths[p];
    const double L = static_cast<double>(path.num_layers());
    u[p].path = uniform_real(rng, 0.0, 1.0);
    for (std::size_t l = 0; l < path.num_layers(); ++l) {
      std::vector<double> op(path.num_operators());
      for (auto& v : op) v = uniform_real(rng, 0.0, 1.0) / L;
      std::vector<double> ch(K);
      if (rule == LandscapeRule::kMonotonePlateau) {
        const double weight = uniform_real(rng, 0.5, 1.5);
        double level = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          if (k > 0 && uniform_real(rng, 0.0, 1.0) >= 0.4) level += uniform_real(rng, 0.2, 1.0);
          ch[k] = weight * level / L;
        }
      } else {
        for (auto& v : ch) v = uniform_real(rng, 0.0, 1.0) / L;
      }
      std::vector<double> rec(path.layers[l].effective_recursion_choices().size());
      for (auto& v : rec) v = 0.5 * uniform_real(rng, 0.0, 1.0) / L;
      u[p].op.push_back(std::move(op));
      u[p].ch.push_back(std::move(ch));
      u[p].rec.push_back(std::move(rec));
    }
  }
  return u;
}

double separable_value(const std::vector<PathUtilities>& u, const Genome& g) {
  const PathUtilities& pu = u[g.path];
  double v = pu.path;
  for (std::size_t l = 0; l < g.operators.size(); ++l) {
    v += pu.op[l][g.operators[l]] + pu.ch[l][g.channels[l]];
    v += pu.rec[l][g.recursion.empty() ? 0 : g.recursion[l]];
  }
  return v;
}

std::size_t gene_distance(const Genome& a, const Genome& b) {
  if (a.path != b.path) return 1 + 2 * std::max(a.operators.size(), b.operators.size());
  std::size_t d = 0;
  for (std::size_t l = 0; l < a.operators.size(); ++l) {
    d += a.operators[l] != b.operators[l];
    d += a.channels[l] != b.channels[l];
    if (!a.recursion.empty()) d += a.recursion[l] != b.recursion[l];
  }
  return d;
}

}  // namespace

TabularLandscape::TabularLandscape(SupernetSpec spec_in, LandscapeRule rule, std::uint64_t seed,
                                   double interaction_noise)
    : FitnessOracle(finalize_spec(std::move(spec_in))), rule_(rule) {
  if (!(interaction_noise >= 0.0)) throw ConfigError("interaction noise must be >= 0");
  const std::uint64_t size = genome_space_size(spec());
  if (size > kMaxLandscapeSize) {
    throw EnumerationTooLarge("landscape over " + std::to_string(size) +
                              " genomes exceeds the table limit of " +
                              std::to_string(kMaxLandscapeSize));
  }
  genomes_ = enumerate_genomes(spec());
  for (auto& g : genomes_) g = normalized(spec(), g);
  Rng rng(derive_seed(seed, "landscape"));
  const auto utilities = draw_utilities(spec(), rule, rng);

  values_.resize(genomes_.size());
  if (rule == LandscapeRule::kDeceptive) {
    const Genome peak = genomes_[uniform_index(rng, genomes_.size())];
    std::size_t max_d = 1;
    for (const auto& g : genomes_) max_d = std::max(max_d, gene_distance(g, peak));
    for (std::size_t i = 0; i < genomes_.size(); ++i) {
      const std::size_t d = gene_distance(genomes_[i], peak);
      values_[i] = d == 0 ? 1.0 : 0.8 * static_cast<double>(d) / static_cast<double>(max_d);
    }
  } else {
    for (std::size_t i = 0; i < genomes_.size(); ++i) {
      values_[i] = separable_value(utilities, genomes_[i]);
    }
    if (rule == LandscapeRule::kRandomSeeded) {
      Rng noise(derive_seed(seed, "interaction"));
      std::normal_distribution<double> n(0.0, interaction_noise);
      for (auto& v : values_) v += n(noise);
    }
  }

  const auto [lo, hi] = std::minmax_element(values_.begin(), values_.end());
  const double min = *lo, range = *hi - *lo;
  for (auto& v : values_) v = range > 0.0 ? 0.1 + 0.9 * (v - min) / range : 1.0;
}

double TabularLandscape::lookup(const Genome& g_in) const {
  const Genome g = normalized(spec(), g_in);
  const auto it = std::lower_bound(genomes_.begin(), genomes_.end(), g);
  if (it == genomes_.end() || *it != g) {
    throw ValidationError("genome " + to_string(g) + " is not in the landscape");
  }
  return values_[static_cast<std::size_t>(it - genomes_.begin())];
}

double TabularLandscape::compute_fitness(const Genome& g) const { return lookup(g); }

double TabularLandscape::compute_path_score(std::size_t path) const {
  const std::size_t L = spec().paths[path].num_layers();
  const std::size_t M = spec().paths[path].num_operators();
  std::vector<std::size_t> ops(L, 0);
  double sum = 0.0;
  std::size_t count = 0;
  while (true) {
    sum += lookup(widest_genome(spec(), path, ops));
    ++count;
    std::size_t l = 0;
    while (l < L && ++ops[l] == M) ops[l++] = 0;
    if (l == L) break;
  }
  return sum / static_cast<double>(count);
}

void TabularLandscape::write_table(std::ostream& out) const {
  out << "# genome\tfitness\tparams\tflops\n";
  char buf[64];
  for (std::size_t i = 0; i < genomes_.size(); ++i) {
    const CostReport c = genome_cost(spec(), genomes_[i]);
    std::snprintf(buf, sizeof(buf), "%.17g", values_[i]);
    out << to_string(genomes_[i]) << '\t' << buf << '\t' << c.params << '\t' << c.flops << '\n';
  }
}

TabularLandscape build_landscape(const SupernetSpec& spec, LandscapeRule rule,
                                 std::uint64_t seed, double interaction_noise) {
  return TabularLandscape(spec, rule, seed, interaction_noise);
}

Optimum exhaustive_optimum(const TabularLandscape& landscape, std::uint64_t params_limit,
                           std::uint64_t flops_limit) {
  std::optional<Optimum> best;
  const auto& genomes = landscape.genomes();
  for (std::size_t i = 0; i < genomes.size(); ++i) {
    const CostReport c = genome_cost(landscape.spec(), genomes[i]);
    if (!satisfies_constraints(c, params_limit, flops_limit)) continue;
    if (!best || landscape.values()[i] > best->fitness) {
      best = Optimum{genomes[i], landscape.values()[i], c};
    }
  }
  if (!best) {
    throw InfeasibleError("no genome satisfies params < " + std::to_string(params_limit) +
                          " and flops < " + std::to_string(flops_limit));
  }
  return *best;
}

GanFitnessOracle::GanFitnessOracle(const Supernet& net, const ToyDataset& data,
                                   MetricKind metric)
    : FitnessOracle(net.spec()), net_(net.snapshot()), data_(data), metric_(metric) {}

double GanFitnessOracle::compute_fitness(const Genome& g) const {
  return evaluate_genome(net_, g, data_, metric_);
}

double GanFitnessOracle::compute_path_score(std::size_t path) const {
  return evaluate_selection(net_, SubnetSelection::mixed(path), data_, metric_);
}

std::unique_ptr<FitnessOracle> gan_fitness_adapter(const Supernet& net, const ToyDataset& data,
                                                   MetricKind metric) {
  return std::make_unique<GanFitnessOracle>(net, data, metric);
}

}  // namespace cfsearch
