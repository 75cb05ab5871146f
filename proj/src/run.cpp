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

#include "cfsearch/run.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include "cfsearch/checkpoint.hpp"
#include "cfsearch/error.hpp"
#include "cfsearch/rng.hpp"

namespace cfsearch {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

LearningRate rate_from_json(const json& j) {
  if (j.is_number()) return {j.get<double>(), 1.0};
  check_keys(j, {"initial", "decay"}, "learning rate");
  LearningRate r{1.0, 1.0};
  r.initial = j.at("initial").get<double>();
  read_if(j, "decay", r.decay);
  return r;
}

json rate_to_json(const LearningRate& r) {
  return {{"initial", r.initial}, {"decay", r.decay}};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed for " + p.string());
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string stage_table(const std::vector<StageRecord>& records) {
  std::string s = "id\tfitness\tparams\tflops\n";
  for (const auto& r : records) {
    s += r.id + "\t" + fmt(r.fitness) + "\t" + std::to_string(r.cost.params) + "\t" +
         std::to_string(r.cost.flops) + "\n";
  }
  return s;
}

std::uint64_t resolve_limit(std::uint64_t absolute, double fraction, std::uint64_t max_value,
                            const char* what) {
  if (absolute != 0) return absolute;
  if (!(fraction > 0.0)) {
    throw ConfigError(std::string("search.") + what + "_fraction must be positive");
  }
  return static_cast<std::uint64_t>(std::floor(fraction * static_cast<double>(max_value)));
}

constexpr const char* kPretrainFiles[] = {"train_metrics.csv", "ledger.tsv", "supernet.ckpt"};

}  // namespace

RunConfig run_config_from_json(const json& j, const std::string& base_dir) {
  try {
    check_keys(j,
               {"seed", "task", "metric", "dataset", "supernet", "train", "search", "evolution",
                "finetune_epochs", "landscape"},
               "config");
    RunConfig cfg;
    read_if(j, "seed", cfg.seed);
    if (j.contains("task")) cfg.task = parse_task(j.at("task").get<std::string>());
    cfg.metric = j.contains("metric") ? parse_metric(j.at("metric").get<std::string>())
                                      : default_metric(cfg.task);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      check_keys(d, {"train_size", "val_size"}, "dataset");
      read_if(d, "train_size", cfg.train_size);
      read_if(d, "val_size", cfg.val_size);
      if (cfg.train_size == 0 || cfg.val_size == 0) {
        throw ConfigError("dataset sizes must be >= 1");
      }
    }
    if (!j.contains("supernet")) throw ConfigError("config needs a 'supernet' entry");
    const auto& js = j.at("supernet");
    SupernetSpec spec = js.is_string()
                            ? load_spec((fs::path(base_dir) / js.get<std::string>()).string())
                            : spec_from_json(js);
    if (j.contains("landscape")) {
      const auto& l = j.at("landscape");
      check_keys(l, {"rule", "seed", "interaction_noise"}, "landscape");
      LandscapeConfig lc;
      if (l.contains("rule")) lc.rule = parse_rule(l.at("rule").get<std::string>());
      read_if(l, "seed", lc.seed);
      read_if(l, "interaction_noise", lc.interaction_noise);
      cfg.landscape = lc;
    } else {
      conform_spec_to_task(spec, cfg.task);
      spec = finalize_spec(std::move(spec));
    }
    cfg.supernet = std::move(spec);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      check_keys(t,
                 {"epochs", "batch_size", "lambda_recon", "lambda_per", "lambda_sp", "alpha",
                  "eta", "feature_dim"},
                 "train");
      read_if(t, "epochs", cfg.train.epochs);
      read_if(t, "batch_size", cfg.train.batch_size);
      read_if(t, "lambda_recon", cfg.train.lambda_recon);
      read_if(t, "lambda_per", cfg.train.lambda_per);
      read_if(t, "lambda_sp", cfg.train.lambda_sp);
      if (t.contains("alpha")) cfg.train.alpha = rate_from_json(t.at("alpha"));
      if (t.contains("eta")) cfg.train.eta = rate_from_json(t.at("eta"));
      read_if(t, "feature_dim", cfg.train.feature_dim);
    }
    cfg.train.validate();
    if (j.contains("search")) {
      const auto& s = j.at("search");
      check_keys(s,
                 {"params_fraction", "flops_fraction", "params_limit", "flops_limit",
                  "enumeration_cap", "sampled_specializations", "channel_rule"},
                 "search");
      read_if(s, "params_fraction", cfg.constraints.params_fraction);
      read_if(s, "flops_fraction", cfg.constraints.flops_fraction);
      read_if(s, "params_limit", cfg.constraints.params_limit);
      read_if(s, "flops_limit", cfg.constraints.flops_limit);
      read_if(s, "enumeration_cap", cfg.enumeration_cap);
      read_if(s, "sampled_specializations", cfg.sampled_specializations);
      if (s.contains("channel_rule")) {
        cfg.channel_rule = parse_channel_rule(s.at("channel_rule").get<std::string>());
      }
    }
    if (j.contains("evolution")) {
      const auto& e = j.at("evolution");
      check_keys(e,
                 {"population", "elites", "generations", "epsilon", "mutation", "rg_refresh",
                  "max_evaluations", "max_resample"},
                 "evolution");
      read_if(e, "population", cfg.evolution.population);
      read_if(e, "elites", cfg.evolution.elites);
      read_if(e, "generations", cfg.evolution.generations);
      read_if(e, "epsilon", cfg.evolution.epsilon);
      if (e.contains("mutation")) {
        cfg.evolution.mutation = parse_mutation(e.at("mutation").get<std::string>());
      }
      if (e.contains("rg_refresh")) {
        cfg.evolution.rg_refresh = parse_refresh(e.at("rg_refresh").get<std::string>());
      }
      read_if(e, "max_evaluations", cfg.evolution.max_evaluations);
      read_if(e, "max_resample", cfg.evolution.max_resample);
    }
    cfg.evolution.validate();
    read_if(j, "finetune_epochs", cfg.finetune_epochs);
    search_config(cfg);  // validates the constraints
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["task"] = task_name(cfg.task);
  j["metric"] = metric_name(cfg.metric);
  j["dataset"] = {{"train_size", cfg.train_size}, {"val_size", cfg.val_size}};
  j["supernet"] = spec_to_json(cfg.supernet);
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"lambda_recon", cfg.train.lambda_recon},
                {"lambda_per", cfg.train.lambda_per},
                {"lambda_sp", cfg.train.lambda_sp},
                {"alpha", rate_to_json(cfg.train.alpha)},
                {"eta", rate_to_json(cfg.train.eta)},
                {"feature_dim", cfg.train.feature_dim}};
  j["search"] = {{"params_fraction", cfg.constraints.params_fraction},
                 {"flops_fraction", cfg.constraints.flops_fraction},
                 {"params_limit", cfg.constraints.params_limit},
                 {"flops_limit", cfg.constraints.flops_limit},
                 {"enumeration_cap", cfg.enumeration_cap},
                 {"sampled_specializations", cfg.sampled_specializations},
                 {"channel_rule", channel_rule_name(cfg.channel_rule)}};
  j["evolution"] = {{"population", cfg.evolution.population},
                    {"elites", cfg.evolution.elites},
                    {"generations", cfg.evolution.generations},
                    {"epsilon", cfg.evolution.epsilon},
                    {"mutation", mutation_name(cfg.evolution.mutation)},
                    {"rg_refresh", refresh_name(cfg.evolution.rg_refresh)},
                    {"max_evaluations", cfg.evolution.max_evaluations},
                    {"max_resample", cfg.evolution.max_resample}};
  j["finetune_epochs"] = cfg.finetune_epochs;
  if (cfg.landscape) {
    j["landscape"] = {{"rule", rule_name(cfg.landscape->rule)},
                      {"seed", cfg.landscape->seed},
                      {"interaction_noise", cfg.landscape->interaction_noise}};
  }
  return j;
}

RunConfig load_run_config(const std::string& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return run_config_from_json(j, fs::path(path).parent_path().string());
}

DatasetConfig dataset_config(const RunConfig& cfg) {
  return {cfg.task, cfg.train_size, cfg.val_size, derive_seed(cfg.seed, "dataset")};
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t = cfg.train;
  t.seed = derive_seed(cfg.seed, "train");
  return t;
}

SearchConfig search_config(const RunConfig& cfg) {
  const CostReport mx = max_cost(cfg.supernet);
  SearchConfig s;
  s.params_limit = resolve_limit(cfg.constraints.params_limit, cfg.constraints.params_fraction,
                                 mx.params, "params");
  s.flops_limit = resolve_limit(cfg.constraints.flops_limit, cfg.constraints.flops_fraction,
                                mx.flops, "flops");
  s.enumeration_cap = cfg.enumeration_cap;
  s.sampled_specializations = cfg.sampled_specializations;
  s.channel_rule = cfg.channel_rule;
  s.seed = derive_seed(cfg.seed, "search");
  s.threads = cfg.threads == 0 ? default_threads() : cfg.threads;
  s.evolution = cfg.evolution;
  s.evolution.seed = derive_seed(cfg.seed, "evolution");
  s.evolution.threads = s.threads;
  return s;
}

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kPretrain: return "pretrain";
    case Stage::kSearchPath: return "search-path";
    case Stage::kSearchOperator: return "search-operator";
    case Stage::kShrink: return "shrink";
    case Stage::kFinetune: return "finetune";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : {Stage::kPretrain, Stage::kSearchPath, Stage::kSearchOperator, Stage::kShrink,
                  Stage::kFinetune}) {
    if (stage_name(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += kHex[digest[i] >> 4];
    s += kHex[digest[i] & 15];
  }
  return s;
}

std::vector<std::string> verify_run_directory(const std::string& dir) {
  std::vector<std::string> problems;
  const fs::path root(dir);
  json m;
  try {
    m = json::parse(read_file(root / "manifest.json"));
  } catch (const std::exception& e) {
    return {std::string("manifest: ") + e.what()};
  }
  if (!m.contains("artifacts") || !m.at("artifacts").is_object()) {
    return {"manifest has no artifact table"};
  }
  for (const auto& [name, hash] : m.at("artifacts").items()) {
    if (!fs::exists(root / name)) {
      problems.push_back(name + ": missing");
    } else if (sha256_hex(read_file(root / name)) != hash.get<std::string>()) {
      problems.push_back(name + ": hash mismatch");
    }
  }
  return problems;
}

RunOutcome execute_run(const RunConfig& cfg, const std::string& dir, Stage stop_after,
                       std::ostream* log) {
  const bool tabular = cfg.landscape.has_value();
  if (tabular && stop_after == Stage::kPretrain) {
    throw ConfigError("landscape runs have no pretrain stage");
  }
  const fs::path root(dir);
  fs::create_directories(root);
  const json snapshot = run_config_to_json(cfg);
  const SupernetSpec& spec = cfg.supernet;
  const SearchConfig sc = search_config(cfg);

  // Pretraining is reused only from an intact directory of the same config.
  json previous;
  bool reuse = false;
  if (!tabular && fs::exists(root / "manifest.json") && verify_run_directory(dir).empty()) {
    try {
      previous = json::parse(read_file(root / "manifest.json"));
      reuse = previous.value("config", json()) == snapshot;
      for (const char* f : kPretrainFiles) reuse = reuse && previous["artifacts"].contains(f);
    } catch (const json::exception&) {
      reuse = false;
    }
  }

  json manifest;
  manifest["format"] = "cfsearch-run/1";
  manifest["version"] = CFSEARCH_VERSION;
  manifest["seed"] = cfg.seed;
  manifest["config"] = snapshot;
  manifest["stop_after"] = stage_name(stop_after);
  manifest["started_at"] = utc_now();
  manifest["stages"] = json::array();
  manifest["artifacts"] = json::object();

  auto flush = [&](const char* status) {
    manifest["status"] = status;
    manifest["updated_at"] = utc_now();
    write_file(root / "manifest.json", manifest.dump(2) + "\n");
  };
  auto emit = [&](const std::string& name, const std::string& bytes) {
    write_file(root / name, bytes);
    manifest["artifacts"][name] = sha256_hex(bytes);
  };
  auto note = [&](const std::string& line) {
    if (log) *log << line << "\n" << std::flush;
  };
  auto finish_stage = [&](Stage s, json summary) {
    summary["stage"] = stage_name(s);
    manifest["stages"].push_back(std::move(summary));
    flush(s == stop_after ? "complete" : "incomplete");
    return s == stop_after;
  };

  RunOutcome outcome;
  flush("incomplete");
  try {
    emit("config.json", snapshot.dump(2) + "\n");

    std::optional<ToyDataset> data;
    std::optional<Supernet> net;
    if (!tabular) {
      data = make_dataset(dataset_config(cfg));
      const TrainConfig tc = train_config(cfg);
      FairnessLedger ledger;
      if (reuse) {
        net.emplace(spec, tc.seed);
        load_checkpoint(*net, (root / "supernet.ckpt").string());
        ledger = FairnessLedger::parse(read_file(root / "ledger.tsv"));
        for (const char* f : kPretrainFiles) manifest["artifacts"][f] = previous["artifacts"][f];
        outcome.resumed_pretrain = true;
        note("pretrain: reusing verified checkpoint");
      } else {
        note("pretrain: " + std::to_string(tc.epochs) + " epochs");
        PretrainResult pre = pretrain_supernet(spec, *data, tc);
        std::ostringstream csv;
        write_train_csv(csv, pre.records);
        emit("train_metrics.csv", csv.str());
        emit("ledger.tsv", pre.ledger.dump());
        emit("supernet.ckpt", checkpoint_bytes(pre.net));
        ledger = pre.ledger;
        net.emplace(std::move(pre.net));
      }
      net->set_channel_rule(sc.channel_rule);
      if (!ledger.is_fair()) {
        throw InvariantError("pretrain ledger violates fairness: " + ledger.violations().front());
      }
      if (finish_stage(Stage::kPretrain, {{"epochs", tc.epochs},
                                          {"trials", ledger.trials()},
                                          {"fair", true},
                                          {"resumed", outcome.resumed_pretrain}})) {
        return outcome;
      }
    }

    std::unique_ptr<FitnessOracle> oracle;
    if (tabular) {
      oracle = std::make_unique<TabularLandscape>(spec, cfg.landscape->rule, cfg.landscape->seed,
                                                  cfg.landscape->interaction_noise);
    } else {
      oracle = gan_fitness_adapter(*net, *data, cfg.metric);
    }
    SearchTrace& trace = outcome.trace;

    note("search-path: " + std::to_string(spec.num_paths()) + " paths");
    const std::size_t path = search_path(*oracle, trace, sc.threads);
    emit("path_stage.tsv", stage_table(trace.path_stage));
    if (finish_stage(Stage::kSearchPath,
                     {{"chosen_path", path}, {"oracle_calls", trace.path_calls()}})) {
      return outcome;
    }

    note("search-operator: path " + std::to_string(path));
    const Genome optr = search_operators(*oracle, path, sc, trace);
    emit("operator_stage.tsv", stage_table(trace.operator_stage));
    if (finish_stage(Stage::kSearchOperator,
                     {{"genome", to_string(optr)}, {"oracle_calls", trace.operator_calls()}})) {
      return outcome;
    }

    note("shrink: params < " + std::to_string(sc.params_limit) + ", flops < " +
         std::to_string(sc.flops_limit));
    const EvolutionResult er = search_channels(*oracle, optr, sc, trace);
    emit("channel_stage.tsv", stage_table(trace.channel_stage));
    std::ostringstream evo;
    write_history_csv(evo, er.history);
    emit("evolution.csv", evo.str());
    emit("genome.txt", to_string(trace.g_channel) + "\n");
    outcome.searched_fitness = er.best_fitness;

    std::string report;
    auto row = [&](const std::string& k, const std::string& v) { report += k + "\t" + v + "\n"; };
    row("genome", to_string(trace.g_channel));
    row("params", std::to_string(er.best_cost.params));
    row("flops", std::to_string(er.best_cost.flops));
    row("params_limit", std::to_string(sc.params_limit));
    row("flops_limit", std::to_string(sc.flops_limit));
    row("searched_fitness", fmt(er.best_fitness));
    row("path_calls", std::to_string(trace.path_calls()));
    row("operator_calls", std::to_string(trace.operator_calls()));
    row("channel_calls", std::to_string(trace.channel_calls()));
    row("total_calls", std::to_string(trace.total_calls()));
    row("joint_search_size", std::to_string(joint_search_size(spec)));
    const bool stop = finish_stage(Stage::kShrink, {{"genome", to_string(trace.g_channel)},
                                                    {"fitness", er.best_fitness},
                                                    {"oracle_calls", trace.channel_calls()},
                                                    {"budget_exhausted", er.budget_exhausted}});
    if (stop || tabular) {
      emit("report.txt", report);
      if (!stop) manifest["stages"].push_back({{"stage", "finetune"}, {"skipped", true}});
      flush("complete");
      return outcome;
    }

    note("finetune: " + std::to_string(cfg.finetune_epochs) + " epochs");
    Supernet tuned = net->snapshot();
    const auto records =
        finetune(tuned, trace.g_channel, *data, train_config(cfg), cfg.finetune_epochs);
    std::ostringstream ft;
    write_train_csv(ft, records);
    emit("finetune_metrics.csv", ft.str());
    emit("final.ckpt", checkpoint_bytes(tuned));
    outcome.final_fitness = evaluate_genome(tuned, trace.g_channel, *data, cfg.metric);
    row("final_fitness", fmt(*outcome.final_fitness));
    emit("report.txt", report);
    finish_stage(Stage::kFinetune,
                 {{"epochs", cfg.finetune_epochs}, {"fitness", *outcome.final_fitness}});
    return outcome;
  } catch (const std::exception& e) {
    manifest["error"] = e.what();
    flush("incomplete");
    throw;
  }
}

}  // namespace cfsearch
