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

#include "cfsearch/fair_scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cfsearch/error.hpp"
#include "cfsearch/rng.hpp"

namespace cfsearch {

FairnessLedger::FairnessLedger(const SupernetSpec& spec) {
  for (const auto& path : spec.paths) {
    std::vector<std::vector<std::uint64_t>> layers;
    for (const auto& layer : path.layers) {
      layers.emplace_back(layer.operator_candidates.size(), 0);
    }
    operator_updates_.push_back(std::move(layers));
    matching_.push_back(path.matched_discriminator_path);
  }
  generator_updates_.assign(spec.num_paths(), 0);
  discriminator_updates_.assign(spec.discriminator_paths.size(), 0);
}

void FairnessLedger::record_generator_update(
    std::size_t path, const std::vector<std::vector<std::size_t>>& operators_per_layer) {
  auto& layers = operator_updates_.at(path);
  if (operators_per_layer.size() != layers.size()) {
    throw InvariantError("ledger: generator update for path " + std::to_string(path) +
                         " lists " + std::to_string(operators_per_layer.size()) +
                         " layers, expected " + std::to_string(layers.size()));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<std::size_t> ops = operators_per_layer[l];
    std::sort(ops.begin(), ops.end());
    ops.erase(std::unique(ops.begin(), ops.end()), ops.end());
    for (std::size_t m : ops) layers[l].at(m) += 1;
  }
  generator_updates_[path] += 1;
  trials_ += 1;
}

void FairnessLedger::record_discriminator_update(std::size_t discriminator_path) {
  discriminator_updates_.at(discriminator_path) += 1;
}

std::vector<std::string> FairnessLedger::violations() const {
  std::vector<std::string> out;
  for (std::size_t p = 0; p < operator_updates_.size(); ++p) {
    const std::size_t d = matching_[p];
    if (d >= discriminator_updates_.size() ||
        generator_updates_[p] != discriminator_updates_[d]) {
      out.push_back("path view: U_path[" + std::to_string(p) + "] = " +
                    std::to_string(generator_updates_[p]) + " != V_path[" +
                    std::to_string(d) + "] = " +
                    (d < discriminator_updates_.size()
                         ? std::to_string(discriminator_updates_[d])
                         : std::string("missing")));
    }
    for (std::size_t l = 0; l < operator_updates_[p].size(); ++l) {
      const auto& row = operator_updates_[p][l];
      if (std::adjacent_find(row.begin(), row.end(), std::not_equal_to<>()) !=
          row.end()) {
        std::string counts;
        for (std::size_t m = 0; m < row.size(); ++m) {
          counts += (m ? "," : "") + std::to_string(row[m]);
        }
        out.push_back("operator view: path " + std::to_string(p) + " layer " +
                      std::to_string(l) + " counts " + counts);
      }
    }
  }
  return out;
}

std::string FairnessLedger::dump() const {
  std::ostringstream os;
  os << "# cfsearch fairness ledger v1\n";
  os << "# kind\tindex\tlayer_or_match\toperator\tcount\n";
  os << "trials\t-\t-\t-\t" << trials_ << '\n';
  for (std::size_t p = 0; p < operator_updates_.size(); ++p) {
    os << "gpath\t" << p << '\t' << matching_[p] << "\t-\t" << generator_updates_[p]
       << '\n';
  }
  for (std::size_t d = 0; d < discriminator_updates_.size(); ++d) {
    os << "dpath\t" << d << "\t-\t-\t" << discriminator_updates_[d] << '\n';
  }
  for (std::size_t p = 0; p < operator_updates_.size(); ++p) {
    for (std::size_t l = 0; l < operator_updates_[p].size(); ++l) {
      for (std::size_t m = 0; m < operator_updates_[p][l].size(); ++m) {
        os << "op\t" << p << '\t' << l << '\t' << m << '\t'
           << operator_updates_[p][l][m] << '\n';
      }
    }
  }
  return os.str();
}

FairnessLedger FairnessLedger::parse(std::string_view text) {
  FairnessLedger ledger;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw ConfigError("ledger line " + std::to_string(line_no) + ": " + why);
  };
  auto to_index = [&](const std::string& s) -> std::size_t {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos);
      if (pos != s.size()) fail("bad number '" + s + "'");
      return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
      fail("bad number '" + s + "'");
    }
    return 0;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string col;
    while (std::getline(ls, col, '\t')) cols.push_back(col);
    if (cols.size() != 5) fail("expected 5 tab-separated columns");
    const std::uint64_t count = to_index(cols[4]);
    if (cols[0] == "trials") {
      ledger.trials_ = count;
    } else if (cols[0] == "gpath") {
      const auto p = to_index(cols[1]);
      if (p >= ledger.generator_updates_.size()) {
        ledger.generator_updates_.resize(p + 1, 0);
        ledger.matching_.resize(p + 1, 0);
      }
      ledger.generator_updates_[p] = count;
      ledger.matching_[p] = to_index(cols[2]);
    } else if (cols[0] == "dpath") {
      const auto d = to_index(cols[1]);
      if (d >= ledger.discriminator_updates_.size()) {
        ledger.discriminator_updates_.resize(d + 1, 0);
      }
      ledger.discriminator_updates_[d] = count;
    } else if (cols[0] == "op") {
      const auto p = to_index(cols[1]);
      const auto l = to_index(cols[2]);
      const auto m = to_index(cols[3]);
      auto& paths = ledger.operator_updates_;
      if (p >= paths.size()) paths.resize(p + 1);
      if (l >= paths[p].size()) paths[p].resize(l + 1);
      if (m >= paths[p][l].size()) paths[p][l].resize(m + 1, 0);
      paths[p][l][m] = count;
    } else {
      fail("unknown row kind '" + cols[0] + "'");
    }
  }
  if (ledger.operator_updates_.size() != ledger.generator_updates_.size()) {
    throw ConfigError("ledger: operator rows and gpath rows disagree on path count");
  }
  return ledger;
}

EpochPlan plan_epoch(const SupernetSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  EpochPlan plan;
  plan.path_order = enumerate_paths(spec);
  std::shuffle(plan.path_order.begin(), plan.path_order.end(), rng);
  for (std::size_t p : plan.path_order) {
    std::vector<std::vector<std::size_t>> layers;
    for (const auto& layer : spec.paths[p].layers) {
      std::vector<std::size_t> perm(layer.operator_candidates.size());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      layers.push_back(std::move(perm));
    }
    plan.operator_order.push_back(std::move(layers));
  }
  return plan;
}

void record_fair_epoch(FairnessLedger& ledger, const SupernetSpec& spec,
                       const EpochPlan& plan) {
  if (plan.path_order.size() != spec.num_paths() ||
      plan.operator_order.size() != plan.path_order.size()) {
    throw InvariantError("epoch plan does not cover every path exactly once");
  }
  for (std::size_t cycle = 0; cycle < plan.path_order.size(); ++cycle) {
    const std::size_t p = plan.path_order[cycle];
    ledger.record_generator_update(p, plan.operator_order[cycle]);
    ledger.record_discriminator_update(spec.paths[p].matched_discriminator_path);
  }
}

void record_uniform_baseline(FairnessLedger& ledger, const SupernetSpec& spec,
                             std::size_t steps, std::uint64_t seed) {
  if (steps < 1) throw ConfigError("uniform baseline needs at least one step");
  Rng rng(seed);
  std::vector<std::size_t> window;
  for (std::size_t step = 0; step < steps; ++step) {
    if (window.empty()) {
      window = enumerate_paths(spec);
      std::shuffle(window.begin(), window.end(), rng);
      std::reverse(window.begin(), window.end());
    }
    const std::size_t p = window.back();
    window.pop_back();
    std::vector<std::vector<std::size_t>> chosen;
    for (const auto& layer : spec.paths[p].layers) {
      chosen.push_back({uniform_index(rng, layer.operator_candidates.size())});
    }
    ledger.record_generator_update(p, chosen);
    ledger.record_discriminator_update(spec.paths[p].matched_discriminator_path);
  }
}

BalanceProbability uniform_equal_probability(std::uint64_t num_operators,
                                             std::uint64_t trials) {
  using boost::multiprecision::cpp_int;
  using boost::multiprecision::cpp_rational;
  if (num_operators < 1) throw ConfigError("uniform_equal_probability needs M >= 1");
  BalanceProbability out;
  if (trials % num_operators != 0) {
    out.value = 0.0;
    out.log_value = -std::numeric_limits<double>::infinity();
    out.exact = cpp_rational(0);
    return out;
  }
  const std::uint64_t share = trials / num_operators;
  if (trials <= kExactBalanceLimit) {
    cpp_int numerator = 1;
    for (std::uint64_t i = 2; i <= trials; ++i) numerator *= i;
    cpp_int share_factorial = 1;
    for (std::uint64_t i = 2; i <= share; ++i) share_factorial *= i;
    cpp_int denominator = boost::multiprecision::pow(share_factorial,
                                                     static_cast<unsigned>(num_operators));
    denominator *= boost::multiprecision::pow(cpp_int(num_operators),
                                              static_cast<unsigned>(trials));
    cpp_rational exact(numerator, denominator);
    out.value = exact.convert_to<double>();
    out.exact = exact;
  }
  const double t = static_cast<double>(trials);
  const double m = static_cast<double>(num_operators);
  out.log_value = std::lgamma(t + 1.0) - m * std::lgamma(t / m + 1.0) - t * std::log(m);
  if (!out.exact) out.value = std::exp(out.log_value);
  return out;
}

}  // namespace cfsearch
