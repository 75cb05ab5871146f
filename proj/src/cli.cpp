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

#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cfsearch/checkpoint.hpp"
#include "cfsearch/error.hpp"
#include "cfsearch/fair_scheduler.hpp"
#include "cfsearch/run.hpp"

namespace cfsearch {
namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct StageOptions {
  std::string config;
  std::string out;
  std::size_t threads = 0;
};

void add_stage_options(CLI::App* cmd, StageOptions& o) {
  cmd->add_option("--config", o.config, "run configuration (JSON)")->required()->check(
      CLI::ExistingFile);
  cmd->add_option("--out", o.out, "run directory")->required();
  cmd->add_option("--threads", o.threads, "evaluation threads (0: CFSEARCH_THREADS or all)");
}

int run_stage(const StageOptions& o, Stage stop_after, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_run_config(o.config);
  cfg.threads = o.threads;
  const RunOutcome r = execute_run(cfg, o.out, stop_after, &err);
  const SearchTrace& t = r.trace;
  if (stop_after == Stage::kPretrain) {
    out << "pretrain\t" << (r.resumed_pretrain ? "reused" : "trained") << "\n";
  } else if (stop_after == Stage::kSearchPath) {
    out << "path\t" << t.chosen_path << "\n";
  } else if (stop_after == Stage::kSearchOperator) {
    out << "genome\t" << to_string(t.g_optr) << "\n";
  } else {
    out << "genome\t" << to_string(t.g_channel) << "\n";
    if (r.searched_fitness) out << "searched_fitness\t" << fmt(*r.searched_fitness) << "\n";
    if (r.final_fitness) out << "final_fitness\t" << fmt(*r.final_fitness) << "\n";
    out << "oracle_calls\t" << t.total_calls() << "\n";
  }
  return 0;
}

int baseline_joint(const StageOptions& o, std::uint64_t cap, std::ostream& out,
                   std::ostream& err) {
  RunConfig cfg = load_run_config(o.config);
  cfg.threads = o.threads;
  const SearchConfig sc = search_config(cfg);
  std::unique_ptr<FitnessOracle> oracle;
  std::optional<Supernet> net;
  std::optional<ToyDataset> data;
  if (cfg.landscape) {
    oracle = std::make_unique<TabularLandscape>(cfg.supernet, cfg.landscape->rule,
                                                cfg.landscape->seed,
                                                cfg.landscape->interaction_noise);
  } else {
    if (o.out.empty()) throw ConfigError("baseline-joint on a trained supernet needs --out");
    execute_run(cfg, o.out, Stage::kPretrain, &err);
    data = make_dataset(dataset_config(cfg));
    net.emplace(cfg.supernet, train_config(cfg).seed);
    load_checkpoint(*net, o.out + "/supernet.ckpt");
    net->set_channel_rule(sc.channel_rule);
    oracle = gan_fitness_adapter(*net, *data, cfg.metric);
  }
  const JointResult j =
      joint_search_baseline(*oracle, sc.params_limit, sc.flops_limit, cap, sc.threads);
  out << "genome\t" << to_string(j.best) << "\n";
  out << "fitness\t" << fmt(j.best_fitness) << "\n";
  out << "evaluations\t" << j.evaluations << "\n";
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const OverflowError*>(&e) || dynamic_cast<const EnumerationTooLarge*>(&e) ||
      dynamic_cast<const ShapeError*>(&e)) {
    return 2;
  }
  if (dynamic_cast<const InfeasibleError*>(&e)) return 3;
  if (dynamic_cast<const InvariantError*>(&e)) return 4;
  return 1;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Coarse-to-fine architecture search over a weight-sharing supernet", "cfsearch"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(CFSEARCH_VERSION));

  StageOptions so;
  struct Named {
    const char* name;
    const char* help;
    Stage stage;
  };
  const Named stages[] = {
      {"pretrain", "train the supernet with the fair scheduler", Stage::kPretrain},
      {"search-path", "pretrain, then pick the best path", Stage::kSearchPath},
      {"search-operator", "continue through operator specialization", Stage::kSearchOperator},
      {"shrink", "continue through evolutionary channel shrinking", Stage::kShrink},
      {"run-all", "run every stage including fine-tuning", Stage::kFinetune},
  };
  std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
  for (const auto& s : stages) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    add_stage_options(cmd, so);
    stage_cmds.emplace_back(cmd, s.stage);
  }

  StageOptions jo;
  std::uint64_t cap = 10'000'000;
  CLI::App* joint = app.add_subcommand("baseline-joint", "exhaustive joint search baseline");
  joint->add_option("--config", jo.config, "run configuration (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  joint->add_option("--out", jo.out, "run directory holding or receiving the pretrain");
  joint->add_option("--threads", jo.threads, "evaluation threads");
  joint->add_option("--cap", cap, "largest search space to enumerate");

  std::string ledger_file;
  CLI::App* fair = app.add_subcommand("verify-fairness", "check a ledger for fair updates");
  fair->add_option("ledger", ledger_file, "ledger.tsv from a run directory")
      ->required()
      ->check(CLI::ExistingFile);

  std::uint64_t enum_m = 0, enum_l = 0;
  std::string enum_config;
  CLI::App* enumerate = app.add_subcommand("enumerate", "count operator specializations");
  enumerate->add_option("--M", enum_m, "operators per layer");
  enumerate->add_option("--L", enum_l, "layers");
  enumerate->add_option("--config", enum_config, "count a run configuration's search space")
      ->check(CLI::ExistingFile);

  std::uint64_t uni_m = 0;
  std::vector<std::uint64_t> uni_t;
  CLI::App* uniform = app.add_subcommand(
      "analyze-uniform", "probability that uniform sampling updates every operator equally");
  uniform->add_option("--M", uni_m, "operators per layer")->required();
  uniform->add_option("--t", uni_t, "trials (repeatable); default M, 2M, ..., 10M");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    for (const auto& [cmd, stage] : stage_cmds) {
      if (cmd->parsed()) return run_stage(so, stage, out, err);
    }
    if (joint->parsed()) return baseline_joint(jo, cap, out, err);
    if (fair->parsed()) {
      std::ifstream in(ledger_file, std::ios::binary);
      std::ostringstream text;
      text << in.rdbuf();
      const FairnessLedger ledger = FairnessLedger::parse(text.str());
      const auto violations = ledger.violations();
      for (const auto& v : violations) err << v << "\n";
      if (!violations.empty()) return 4;
      out << "fair\t" << ledger.num_paths() << " paths\t" << ledger.trials() << " updates\n";
      return 0;
    }
    if (enumerate->parsed()) {
      if (!enum_config.empty()) {
        const RunConfig cfg = load_run_config(enum_config);
        const SupernetSpec& spec = cfg.supernet;
        out << "paths\t" << spec.num_paths() << "\n";
        for (std::size_t p = 0; p < spec.num_paths(); ++p) {
          const auto& path = spec.paths[p];
          out << "path " << p << "\tM=" << path.num_operators() << " L=" << path.num_layers()
              << "\tN_o=" << operator_specialization_count(path.num_operators(),
                                                            path.num_layers())
              << "\n";
        }
        out << "genomes\t" << genome_space_size(spec) << "\n";
        out << "joint_search_size\t" << joint_search_size(spec) << "\n";
        return 0;
      }
      if (enum_m == 0 || enum_l == 0) {
        throw ConfigError("enumerate needs --M and --L (both >= 1) or --config");
      }
      out << operator_specialization_count(enum_m, enum_l) << "\n";
      return 0;
    }
    if (uniform->parsed()) {
      if (uni_m == 0) throw ConfigError("analyze-uniform needs --M >= 1");
      if (uni_t.size() == 1) {
        out << fmt(uniform_equal_probability(uni_m, uni_t.front()).value) << "\n";
        return 0;
      }
      if (uni_t.empty()) {
        for (std::uint64_t k = 1; k <= 10; ++k) uni_t.push_back(k * uni_m);
      }
      out << "t\tprobability\tlog_probability\texact\n";
      for (std::uint64_t t : uni_t) {
        const BalanceProbability b = uniform_equal_probability(uni_m, t);
        out << t << "\t" << fmt(b.value) << "\t" << fmt(b.log_value) << "\t"
            << (b.exact ? b.exact->str() : std::string("-")) << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  err << app.help();
  return 2;
}

}  // namespace cfsearch
