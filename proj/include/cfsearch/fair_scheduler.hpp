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

// Fair supernet sampling. Every epoch visits each generator path exactly once
// (with its matched discriminator path), and within a path cycle every layer
// runs all M operators once before the single accumulated weight update. The
// FairnessLedger counts the updates that reach each operator and path so the
// two fairness equalities can be audited:
//
//   path view:      generator updates of p == updates of p's discriminator
//   operator view:  U[p][l][0] == U[p][l][1] == ... == U[p][l][M-1]

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "cfsearch/search_space.hpp"

namespace cfsearch {

class FairnessLedger {
 public:
  FairnessLedger() = default;
  explicit FairnessLedger(const SupernetSpec& spec);

  // One generator weight update of `path`; `operators_per_layer[l]` lists the
  // operators whose gradients were accumulated into it.
  void record_generator_update(
      std::size_t path, const std::vector<std::vector<std::size_t>>& operators_per_layer);
  void record_discriminator_update(std::size_t discriminator_path);

  std::size_t num_paths() const { return operator_updates_.size(); }
  std::size_t num_layers(std::size_t path) const { return operator_updates_.at(path).size(); }
  std::size_t num_operators(std::size_t path, std::size_t layer) const {
    return operator_updates_.at(path).at(layer).size();
  }
  std::size_t num_discriminator_paths() const { return discriminator_updates_.size(); }

  std::uint64_t operator_updates(std::size_t p, std::size_t l, std::size_t m) const {
    return operator_updates_.at(p).at(l).at(m);
  }
  std::uint64_t generator_updates(std::size_t p) const { return generator_updates_.at(p); }
  std::uint64_t discriminator_updates(std::size_t d) const {
    return discriminator_updates_.at(d);
  }
  std::size_t matched_discriminator(std::size_t p) const { return matching_.at(p); }
  // Generator update trials so far (t).
  std::uint64_t trials() const { return trials_; }

  // Empty when both fairness equalities hold, otherwise one line per
  // violation.
  std::vector<std::string> violations() const;
  bool is_fair() const { return violations().empty(); }

  // Tab-separated audit table; parse(dump()) reproduces the ledger.
  std::string dump() const;
  static FairnessLedger parse(std::string_view text);

  friend bool operator==(const FairnessLedger&, const FairnessLedger&) = default;

 private:
  std::vector<std::vector<std::vector<std::uint64_t>>> operator_updates_;
  std::vector<std::uint64_t> generator_updates_;
  std::vector<std::uint64_t> discriminator_updates_;
  std::vector<std::size_t> matching_;
  std::uint64_t trials_ = 0;
};

struct EpochPlan {
  std::vector<std::size_t> path_order;
  // operator_order[cycle][layer][pass]: a permutation of the layer's M
  // operator indices; pass m activates operator_order[cycle][layer][m].
  std::vector<std::vector<std::vector<std::size_t>>> operator_order;
};

EpochPlan plan_epoch(const SupernetSpec& spec, std::uint64_t seed);

// Applies one fair epoch to the ledger: per cycle every operator of every
// layer of the cycle's path is updated once, and the path and its
// discriminator are each updated once.
void record_fair_epoch(FairnessLedger& ledger, const SupernetSpec& spec,
                       const EpochPlan& plan);

// Uniform single-path sampling for `steps` updates: paths are drawn without
// replacement within windows of N_p steps, then one operator per layer is
// drawn uniformly and only that operator is counted.
void record_uniform_baseline(FairnessLedger& ledger, const SupernetSpec& spec,
                             std::size_t steps, std::uint64_t seed);

// Probability that t uniform single-operator updates over M operators leave
// all M counters equal: t! / ((t/M)!^M * M^t). Exact below kExactLimit,
// log-gamma above it.
struct BalanceProbability {
  double value = 0.0;
  double log_value = 0.0;  // -inf when value is exactly 0
  std::optional<boost::multiprecision::cpp_rational> exact;
};

inline constexpr std::uint64_t kExactBalanceLimit = 500;

BalanceProbability uniform_equal_probability(std::uint64_t num_operators,
                                             std::uint64_t trials);

}  // namespace cfsearch
