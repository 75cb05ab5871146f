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

// Parameter and FLOP accounting for genomes. One multiply-accumulate counts as
// 2 FLOPs. Biases and normalization scales count as parameters; their FLOPs,
// pooling and resampling are ignored. Residual adds cost H*W*c.

#include <cstdint>
#include <string>
#include <vector>

#include "cfsearch/search_space.hpp"

namespace cfsearch {

struct LayerCost {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct CostReport {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  LayerCost stem;
  std::vector<LayerCost> layers;  // one per searchable layer
  LayerCost head;
};

struct CostOptions {
  bool count_bias_and_norm = true;
};

// One layer: the block applied `recursion` times (c_in -> c_out first, then
// c_out -> c_out), plus the per-channel scale factors.
LayerCost operator_cost(OperatorKind kind, int c_in, int c_out, int recursion,
                        Extent extent, int spatial_rank, CostOptions options = {});

CostReport genome_cost(const SupernetSpec& spec, const Genome& g, Extent input_extent,
                       CostOptions options = {});
CostReport genome_cost(const SupernetSpec& spec, const Genome& g,
                       CostOptions options = {});

// Cost of a path with every operator candidate active at full width (the
// mixed form used to score paths).
CostReport mixed_path_cost(const SupernetSpec& spec, std::size_t path,
                           CostOptions options = {});

// The widest configuration over all paths and operators.
CostReport max_cost(const SupernetSpec& spec);

// Strict on both sides: params < params_limit and flops < flops_limit.
bool satisfies_constraints(const CostReport& r, std::uint64_t params_limit,
                           std::uint64_t flops_limit);

}  // namespace cfsearch
