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


// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "cfsearch/checkpoint.hpp"
#include "cfsearch/coarse_to_fine.hpp"
#include "cfsearch/fair_scheduler.hpp"
#include "cfsearch/prox.hpp"
#include "cfsearch/rng.hpp"
#include "cfsearch/run.hpp"
#include "brute_force.hpp"
#include "gradient_check.hpp"
#include "test_support.hpp"

using namespace cfsearch;
namespace fs = std::filesystem;

namespace {

struct CriterionResult {
  bool pass = true;
  std::string detail;
};

// Collects failed checks; the first few are kept for the report.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) notes_.push_back(what);
  }
  bool ok() const { return failures_ == 0; }
  CriterionResult verdict(std::string summary) const {
    if (failures_ > 0) {
      summary += "; " + std::to_string(failures_) + " failed check(s)";
      for (const auto& n : notes_) summary += "; " + n;
    }
    return {ok(), summary};
  }

 private:
  std::size_t failures_ = 0;
  std::vector<std::string> notes_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

std::string config_path(const std::string& name) {
  return testing::source_dir() + "/configs/" + name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SupernetSpec translation_spec(std::size_t paths, std::size_t layers, std::size_t ops) {
  SupernetSpec s = testing::grid_spec(paths, layers, ops);
  conform_spec_to_task(s, TaskKind::kTranslation);
  return finalize_spec(std::move(s));
}

CriterionResult fairness() {
  Checker c;
  const ToyDataset data = make_dataset({TaskKind::kTranslation, 4, 4, 0});
  std::size_t runs = 0;
  for (std::size_t np = 1; np <= 3; ++np) {
    for (std::size_t L = 1; L <= 3; ++L) {
      for (std::size_t M = 1; M <= 3; ++M) {
        const SupernetSpec spec = translation_spec(np, L, M);
        for (std::size_t T : {1, 3, 10}) {
          TrainConfig tc;
          tc.epochs = T;
          tc.batch_size = 4;
          tc.lambda_per = 1.0;
          tc.seed = np * 100 + L * 10 + M;
          const FairnessLedger ledger = pretrain_supernet(spec, data, tc).ledger;
          const std::string where = "Np=" + std::to_string(np) + " L=" + std::to_string(L) +
                                    " M=" + std::to_string(M) + " T=" + std::to_string(T);
          for (std::size_t p = 0; p < np; ++p) {
            for (std::size_t l = 0; l < L; ++l) {
              for (std::size_t m = 0; m < M; ++m) {
                c.expect(ledger.operator_updates(p, l, m) == T, where + " operator count");
              }
            }
            c.expect(ledger.generator_updates(p) == T, where + " generator path count");
            c.expect(ledger.discriminator_updates(ledger.matched_discriminator(p)) == T,
                     where + " discriminator path count");
          }
          c.expect(ledger.is_fair(), where + " ledger reports a violation");
          ++runs;
        }
      }
    }
  }
  return c.verdict(std::to_string(runs) + " pretraining runs, every count equals T");
}

CriterionResult uniform_unfairness() {
  using boost::multiprecision::cpp_rational;
  Checker c;
  const std::pair<std::uint64_t, cpp_rational> exact[] = {
      {2, cpp_rational(1, 2)}, {4, cpp_rational(3, 8)}, {6, cpp_rational(5, 16)}};
  for (const auto& [t, value] : exact) {
    const BalanceProbability g = uniform_equal_probability(2, t);
    c.expect(g.exact && *g.exact == value, "g(2," + std::to_string(t) + ") value");
    c.expect(testing::balanced_fraction(2, t) == value,
             "enumeration of 2^" + std::to_string(t) + " sequences");
  }
  for (std::uint64_t M = 2; M <= 4; ++M) {
    double previous = 0.0;
    for (std::uint64_t t = M; t <= 10000; t += M) {
      const double lg = uniform_equal_probability(M, t).log_value;
      c.expect(t == M || lg < previous, "not strictly decreasing at M=" + std::to_string(M) +
                                            " t=" + std::to_string(t));
      previous = lg;
    }
  }
  constexpr std::size_t kTrials = 100000;
  std::string mc;
  for (const auto& [M, t] : {std::pair<std::size_t, std::size_t>{2, 4}, {3, 6}}) {
    const SupernetSpec spec = testing::grid_spec(1, 1, M);
    std::size_t hits = 0;
    for (std::size_t run = 0; run < kTrials; ++run) {
      FairnessLedger ledger(spec);
      record_uniform_baseline(ledger, spec, t, derive_seed(2024, "uniform-mc", run));
      hits += ledger.is_fair();
    }
    const double p = uniform_equal_probability(M, t).value;
    const double freq = static_cast<double>(hits) / kTrials;
    const double sigma = std::sqrt(p * (1 - p) / kTrials);
    const double z = std::abs(freq - p) / sigma;
    c.expect(z <= 3.0, "Monte-Carlo off by " + fmt(z) + " sigma");
    mc += (mc.empty() ? "" : ";") + std::string(" M=") + std::to_string(M) + ",t=" + std::to_string(t) + ": " + fmt(freq) + " vs " +
          fmt(p) + " (" + fmt(z, 2) + " sigma)";
  }
  return c.verdict("1/2, 3/8, 5/16 exact; log g strictly decreasing to t=1e4;" + mc);
}

CriterionResult combinatorics() {
  Checker c;
  for (std::size_t M = 1; M <= 3; ++M) {
    for (std::size_t L = 1; L <= 3; ++L) {
      const auto brute = testing::brute_force_specializations(M, L);
      std::set<testing::Member> listed;
      for (const auto& s : enumerate_specializations(M, L)) listed.insert({s.begin(), s.end()});
      const std::string where = "M=" + std::to_string(M) + " L=" + std::to_string(L);
      c.expect(operator_specialization_count(M, L) == brute.size(), where + " count");
      c.expect(listed == brute, where + " members");
    }
  }
  c.expect(operator_specialization_count(2, 2) == 2, "N_o(2,2)");
  c.expect(operator_specialization_count(3, 2) == 6, "N_o(3,2)");
  c.expect(operator_specialization_count(3, 3) == 36, "N_o(3,3)");
  c.expect(operator_specialization_count(3, 4) == 216, "N_o(3,4)");
  return c.verdict("9 (M, L) pairs match brute force; N_o(3,4) = " +
                   std::to_string(operator_specialization_count(3, 4)));
}

CriterionResult proximal() {
  Checker c;
  const double t = 0.25;
  for (std::size_t i = 0; i < 1000; ++i) {
    const double s = -1.5 + 3.0 * static_cast<double>(i) / 999.0;
    const double expect = s > t ? s - t : (s < -t ? s + t : 0.0);
    c.expect(prox_l1(s, t) == expect, "prox_l1(" + fmt(s) + ")");
  }
  const RunConfig cfg = load_run_config(config_path("translation.json"));
  const ToyDataset data = make_dataset(dataset_config(cfg));
  std::string fractions;
  double previous = -1.0;
  for (double lambda : {0.0, 1e-3, 1e-2, 1e-1}) {
    TrainConfig tc = train_config(cfg);
    tc.lambda_sp = lambda;
    const PretrainResult r = pretrain_supernet(cfg.supernet, data, tc);
    const double zero = static_cast<double>(r.net.gammas().zero_count()) /
                        static_cast<double>(r.net.gammas().size());
    c.expect(zero >= previous, "zero fraction fell at lambda_sp=" + fmt(lambda));
    previous = zero;
    fractions += (fractions.empty() ? "" : ", ") + fmt(zero);
  }
  return c.verdict("grid exact; zero fractions over lambda_sp {0,1e-3,1e-2,1e-1}: " + fractions);
}

CriterionResult autodiff() {
  Checker c;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double err = testing::random_network_gradient_error(seed);
    c.expect(err < 1e-4, "network " + std::to_string(seed) + " error " + fmt(err));
    worst = std::max(worst, err);
  }
  return c.verdict("20 networks, worst relative error " + fmt(worst, 3));
}

CriterionResult evolution() {
  Checker c;
  const RunConfig cfg = load_run_config(config_path("evolution_256.json"));
  const SearchConfig sc = search_config(cfg);
  const SupernetSpec& spec = cfg.supernet;
  auto landscape = [&] {
    return build_landscape(spec, cfg.landscape->rule, cfg.landscape->seed,
                           cfg.landscape->interaction_noise);
  };
  const TabularLandscape reference = landscape();
  const std::size_t space = reference.genomes().size();
  c.expect(space == 256, "landscape size " + std::to_string(space));
  c.expect(cfg.landscape->rule == LandscapeRule::kMonotonePlateau, "shipped rule");
  c.expect(sc.evolution.max_evaluations * 5 <= space, "budget above 20%");

  std::vector<double> feasible;
  for (std::size_t i = 0; i < space; ++i) {
    if (satisfies_constraints(genome_cost(spec, reference.genomes()[i]), sc.params_limit,
                              sc.flops_limit)) {
      feasible.push_back(reference.values()[i]);
    }
  }
  std::sort(feasible.rbegin(), feasible.rend());
  const std::size_t top = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(0.01 * static_cast<double>(feasible.size()))));
  const double threshold = feasible[top - 1];
  const double optimum = feasible.front();

  std::size_t hits = 0;
  std::vector<double> to_optimum[2];
  std::size_t max_calls = 0;
  for (MutationMode mode : {MutationMode::kDirectional, MutationMode::kRandom}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      EvoConfig evo = sc.evolution;
      evo.params_limit = sc.params_limit;
      evo.flops_limit = sc.flops_limit;
      evo.seed = seed;
      evo.mutation = mode;
      evo.threads = 1;
      TabularLandscape oracle = landscape();
      const EvolutionResult r = shrink_channels(widest_genome(spec, 0, {}), oracle, evo);
      const std::string where = std::string(mutation_name(mode)) + " seed " + std::to_string(seed);
      for (std::size_t g = 1; g < r.history.size(); ++g) {
        c.expect(r.history[g].best_fitness >= r.history[g - 1].best_fitness,
                 where + " best fitness fell");
      }
      c.expect(satisfies_constraints(r.best_cost, sc.params_limit, sc.flops_limit),
               where + " infeasible result");
      c.expect(r.evaluated.size() <= evo.max_evaluations, where + " over budget");
      max_calls = std::max(max_calls, oracle.unique_evaluations());
      double reached = static_cast<double>(evo.generations) + 1.0;
      for (const auto& h : r.history) {
        if (h.best_fitness >= optimum) {
          reached = static_cast<double>(h.generation);
          break;
        }
      }
      to_optimum[mode == MutationMode::kRandom].push_back(reached);
      if (mode == MutationMode::kDirectional) hits += r.best_fitness >= threshold;
    }
  }
  c.expect(hits >= 18, std::to_string(hits) + "/20 runs reached the top 1%");
  const double dir = median(to_optimum[0]), rnd = median(to_optimum[1]);
  c.expect(dir <= rnd, "directional median " + fmt(dir) + " > random " + fmt(rnd));
  return c.verdict(std::to_string(hits) + "/20 runs reach the top " + std::to_string(top) +
                   " of " + std::to_string(feasible.size()) + " feasible; at most " +
                   std::to_string(max_calls) + " of 256 oracle calls; median generations to "
                   "optimum directional " + fmt(dir) + " vs random " + fmt(rnd));
}

CriterionResult coarse_to_fine() {
  Checker c;
  std::string detail;
  for (const char* name : {"landscape_separable.json", "landscape_monotone-plateau.json",
                           "landscape_random-seeded.json"}) {
    const RunConfig cfg = load_run_config(config_path(name));
    const SearchConfig sc = search_config(cfg);
    const LandscapeConfig& lc = *cfg.landscape;
    TabularLandscape staged = build_landscape(cfg.supernet, lc.rule, lc.seed, lc.interaction_noise);
    const SearchTrace trace = run_search(staged, sc);
    TabularLandscape joint_oracle =
        build_landscape(cfg.supernet, lc.rule, lc.seed, lc.interaction_noise);
    const JointResult joint = joint_search_baseline(joint_oracle, sc.params_limit, sc.flops_limit);
    const double ratio = static_cast<double>(joint.evaluations) /
                         static_cast<double>(trace.total_calls());
    const double quality = staged.lookup(trace.g_channel) / joint.best_fitness;
    const std::string rule(rule_name(lc.rule));
    c.expect(ratio >= 7.0, rule + " call ratio " + fmt(ratio));
    c.expect(quality >= 0.9, rule + " fitness ratio " + fmt(quality));
    c.expect(satisfies_constraints(genome_cost(cfg.supernet, trace.g_channel), sc.params_limit,
                                   sc.flops_limit),
             rule + " infeasible result");
    detail += (detail.empty() ? "" : "; ") + rule + ": " + std::to_string(joint.evaluations) +
              "/" + std::to_string(trace.total_calls()) + " calls = " + fmt(ratio, 3) +
              "x, fitness " + fmt(100.0 * quality, 4) + "% of joint";
  }
  return c.verdict(detail);
}

struct RunPair {
  fs::path a, b;
  RunOutcome first, second;
};

RunPair& translation_runs(const fs::path& scratch) {
  static std::optional<RunPair> runs;
  if (!runs) {
    const RunConfig cfg = load_run_config(config_path("translation.json"));
    RunPair r{scratch / "run_a", scratch / "run_b", {}, {}};
    r.first = execute_run(cfg, r.a.string(), Stage::kFinetune);
    r.second = execute_run(cfg, r.b.string(), Stage::kFinetune);
    runs = std::move(r);
  }
  return *runs;
}

CriterionResult pipeline(const fs::path& scratch) {
  Checker c;
  const RunConfig cfg = load_run_config(config_path("translation.json"));
  const SearchConfig sc = search_config(cfg);
  const RunPair& runs = translation_runs(scratch);
  c.expect(runs.first.trace.g_channel == runs.second.trace.g_channel, "genomes differ");
  c.expect(runs.first.searched_fitness == runs.second.searched_fitness, "searched fitness differs");
  c.expect(runs.first.final_fitness == runs.second.final_fitness, "final fitness differs");
  c.expect(verify_run_directory(runs.a.string()).empty(), "run directory fails verification");

  Supernet net(cfg.supernet, 0);
  load_checkpoint(net, (runs.a / "supernet.ckpt").string());
  const ToyDataset data = make_dataset(dataset_config(cfg));
  const double searched = evaluate_genome(net, runs.first.trace.g_channel, data, cfg.metric);
  c.expect(searched == *runs.first.searched_fitness, "searched fitness is not reproducible");

  Rng rng(derive_seed(cfg.seed, "random-baseline"));
  std::vector<double> random;
  while (random.size() < 20) {
    Genome g;
    g.path = uniform_index(rng, cfg.supernet.num_paths());
    const PathSpec& ps = cfg.supernet.paths[g.path];
    for (std::size_t l = 0; l < ps.num_layers(); ++l) {
      g.operators.push_back(uniform_index(rng, ps.num_operators()));
      g.channels.push_back(uniform_index(rng, cfg.supernet.channel_choices.size()));
    }
    for (std::size_t l = 0; l < ps.num_layers(); ++l) {
      const std::size_t choices = ps.layers[l].effective_recursion_choices().size();
      if (choices > 1) {
        g.recursion.resize(ps.num_layers(), 0);
        g.recursion[l] = uniform_index(rng, choices);
      }
    }
    g = normalized(cfg.supernet, g);
    if (!satisfies_constraints(genome_cost(cfg.supernet, g), sc.params_limit, sc.flops_limit)) {
      continue;
    }
    random.push_back(evaluate_genome(net, g, data, cfg.metric));
  }
  const double baseline = median(random);
  c.expect(searched >= baseline, "searched " + fmt(searched) + " below random median " +
                                     fmt(baseline));
  return c.verdict("genome " + to_string(runs.first.trace.g_channel) + ", searched fitness " +
                   fmt(searched) + " vs random median " + fmt(baseline) +
                   ", after fine-tuning " + fmt(*runs.first.final_fitness));
}

CriterionResult reproducibility(const fs::path& scratch) {
  Checker c;
  const RunPair& runs = translation_runs(scratch);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(runs.a)) {
    const std::string name = entry.path().filename().string();
    if (name == "manifest.json") continue;
    c.expect(fs::exists(runs.b / name), name + " missing in the second run");
    c.expect(slurp(entry.path()) == slurp(runs.b / name), name + " differs");
    ++files;
  }
  auto manifest = [](const fs::path& dir) {
    nlohmann::json m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    m.erase("started_at");
    m.erase("updated_at");
    return m;
  };
  c.expect(manifest(runs.a) == manifest(runs.b), "manifests differ beyond timestamps");
  for (const char* required : {"report.txt", "ledger.tsv", "genome.txt", "supernet.ckpt",
                               "final.ckpt"}) {
    c.expect(fs::exists(runs.a / required), std::string(required) + " not written");
  }
  return c.verdict(std::to_string(files) +
                   " artifacts byte-identical across the two runs of criterion 8; manifests equal up to "
                   "timestamps");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const fs::path scratch =
      fs::temp_directory_path() / ("cfsearch_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  const std::vector<std::pair<std::string, std::function<CriterionResult()>>> criteria = {
      {"fairness", fairness},
      {"uniform-sampling unfairness", uniform_unfairness},
      {"combinatorics", combinatorics},
      {"proximal update", proximal},
      {"autodiff", autodiff},
      {"evolutionary search", evolution},
      {"coarse-to-fine vs joint", coarse_to_fine},
      {"end-to-end pipeline", [&] { return pipeline(scratch); }},
      {"reproducibility", [&] { return reproducibility(scratch); }},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    CriterionResult v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << number << " (" << criteria[i].first
              << "): " << (v.pass ? "PASS" : "FAIL") << " [" << fmt(seconds, 3) << " s] "
              << v.detail << std::endl;
    all = all && v.pass;
  }
  fs::remove_all(scratch);
  return all ? 0 : 1;
}
