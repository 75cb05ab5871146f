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

#include "cfsearch/cost_model.hpp"

#include <algorithm>

#include "cfsearch/error.hpp"

namespace cfsearch {
namespace {

using u64 = std::uint64_t;

u64 kernel_area(int k, int rank) {
  return rank == 2 ? static_cast<u64>(k) * k : static_cast<u64>(k);
}

struct Cost {
  u64 params = 0;
  u64 flops = 0;
};

// One application of the block, c_in -> c_out.
Cost block_cost(OperatorKind kind, u64 ci, u64 co, u64 hw, int rank, bool bias) {
  const OperatorTraits t = operator_traits(kind);
  const u64 kk = kernel_area(t.kernel, rank);
  const u64 b = bias ? 1 : 0;
  Cost c;
  switch (kind) {
    case OperatorKind::kConv3x3:
      c.params = ci * co * kk + b * co;
      c.flops = 2 * ci * co * kk * hw;
      break;
    case OperatorKind::kResBlock:
      c.params = ci * co * kk + co * co * kk + b * 2 * co;
      c.flops = 2 * (ci * co + co * co) * kk * hw + hw * co;
      break;
    case OperatorKind::kDwsBlock:
      c.params = ci * kk + ci * co + b * (ci + co);
      c.flops = 2 * ci * kk * hw + 2 * ci * co * hw;
      break;
    case OperatorKind::kGroupResidual: {
      const u64 g = effective_groups(t.groups, ci, co);
      const u64 first = ci * co / g;
      const u64 second = co * co / g;
      c.params = (first + second) * kk + b * 2 * co;
      c.flops = 2 * (first + second) * kk * hw + hw * co;
      break;
    }
    case OperatorKind::kShrinkResidual: {
      const u64 hidden = std::max<u64>(1, co / 2);
      c.params = ci * hidden + hidden * co * kk + b * (hidden + co);
      c.flops = 2 * ci * hidden * hw + 2 * hidden * co * kk * hw + hw * co;
      break;
    }
    case OperatorKind::kContextResidual:
      c.params = ci * co * kk + ci * co + b * 2 * co;
      c.flops = 2 * ci * co * kk * hw + 2 * ci * co + 2 * hw * co;
      break;
  }
  return c;
}

u64 area(Extent e) { return static_cast<u64>(e.height) * static_cast<u64>(e.width); }

LayerCost conv_cost(std::string name, int ci, int co, int k, Extent e, int rank,
                    bool bias) {
  const u64 kk = kernel_area(k, rank);
  LayerCost c;
  c.name = std::move(name);
  c.params = static_cast<u64>(ci) * co * kk + (bias ? co : 0);
  c.flops = 2 * static_cast<u64>(ci) * co * kk * area(e);
  return c;
}

void finish(CostReport& r) {
  r.params = r.stem.params + r.head.params;
  r.flops = r.stem.flops + r.head.flops;
  for (const auto& l : r.layers) {
    r.params += l.params;
    r.flops += l.flops;
  }
}

}  // namespace

LayerCost operator_cost(OperatorKind kind, int c_in, int c_out, int recursion,
                        Extent extent, int spatial_rank, CostOptions options) {
  if (c_in <= 0 || c_out <= 0 || recursion <= 0) {
    throw ValidationError("operator_cost needs positive channels and recursion");
  }
  const bool bias = options.count_bias_and_norm;
  const u64 hw = area(extent);
  LayerCost out;
  out.name = std::string(operator_name(kind));
  Cost first = block_cost(kind, c_in, c_out, hw, spatial_rank, bias);
  out.params = first.params;
  out.flops = first.flops;
  for (int r = 1; r < recursion; ++r) {
    Cost again = block_cost(kind, c_out, c_out, hw, spatial_rank, bias);
    out.params += again.params;
    out.flops += again.flops;
  }
  if (bias) out.params += static_cast<u64>(c_out);  // scale factors
  return out;
}

CostReport genome_cost(const SupernetSpec& spec, const Genome& g, Extent input_extent,
                       CostOptions options) {
  require_valid(spec, g);
  const PathSpec& path = spec.paths[g.path];
  const bool bias = options.count_bias_and_norm;
  CostReport r;
  r.stem = conv_cost("stem", spec.input_channels, spec.max_channels(),
                     spec.stem_kernel, input_extent, spec.spatial_rank, bias);
  int c_in = spec.max_channels();
  for (std::size_t l = 0; l < path.num_layers(); ++l) {
    const Extent e =
        scaled_extent(input_extent, path.resolution_schedule[l], spec.spatial_rank);
    const int c_out = channel_width(spec, g, l);
    LayerCost lc = operator_cost(
        path.layers[l].operator_candidates[g.operators[l]], c_in, c_out,
        recursion_count(spec, g, l), e, spec.spatial_rank, options);
    lc.name = "layer" + std::to_string(l) + ":" + lc.name;
    r.layers.push_back(std::move(lc));
    c_in = c_out;
  }
  r.head = conv_cost("head", c_in, spec.output_channels, spec.stem_kernel,
                     scaled_extent(input_extent, spec.output_scale, spec.spatial_rank),
                     spec.spatial_rank, bias);
  finish(r);
  return r;
}

CostReport genome_cost(const SupernetSpec& spec, const Genome& g, CostOptions options) {
  return genome_cost(spec, g, spec.input_extent, options);
}

CostReport mixed_path_cost(const SupernetSpec& spec, std::size_t path_index,
                           CostOptions options) {
  const PathSpec& path = spec.paths.at(path_index);
  const bool bias = options.count_bias_and_norm;
  const int width = spec.max_channels();
  CostReport r;
  r.stem = conv_cost("stem", spec.input_channels, width, spec.stem_kernel,
                     spec.input_extent, spec.spatial_rank, bias);
  for (std::size_t l = 0; l < path.num_layers(); ++l) {
    const Extent e =
        scaled_extent(spec.input_extent, path.resolution_schedule[l], spec.spatial_rank);
    LayerCost lc;
    lc.name = "layer" + std::to_string(l) + ":mixed";
    const int rec = path.layers[l].effective_recursion_choices().front();
    for (OperatorKind k : path.layers[l].operator_candidates) {
      LayerCost one = operator_cost(k, width, width, rec, e, spec.spatial_rank, options);
      lc.params += one.params;
      lc.flops += one.flops;
    }
    r.layers.push_back(std::move(lc));
  }
  r.head = conv_cost("head", width, spec.output_channels, spec.stem_kernel,
                     scaled_extent(spec.input_extent, spec.output_scale, spec.spatial_rank),
                     spec.spatial_rank, bias);
  finish(r);
  return r;
}

CostReport max_cost(const SupernetSpec& spec) {
  CostReport best;
  for (std::size_t p = 0; p < spec.num_paths(); ++p) {
    const PathSpec& path = spec.paths[p];
    Genome g = widest_genome(spec, p, {});
    // Per layer, the costliest operator at full width; layers are independent
    // at fixed width so the layerwise maximum is the path maximum.
    for (std::size_t l = 0; l < path.num_layers(); ++l) {
      std::uint64_t worst = 0;
      for (std::size_t m = 0; m < path.num_operators(); ++m) {
        Genome probe = g;
        probe.operators[l] = m;
        const auto r = genome_cost(spec, probe);
        const auto score = r.layers[l].params + r.layers[l].flops;
        if (score > worst) {
          worst = score;
          g.operators[l] = m;
        }
      }
      if (!g.recursion.empty()) {
        g.recursion[l] = path.layers[l].effective_recursion_choices().size() - 1;
      }
    }
    CostReport r = genome_cost(spec, g);
    best.params = std::max(best.params, r.params);
    best.flops = std::max(best.flops, r.flops);
  }
  return best;
}

bool satisfies_constraints(const CostReport& r, std::uint64_t params_limit,
                           std::uint64_t flops_limit) {
  return r.params < params_limit && r.flops < flops_limit;
}

}  // namespace cfsearch
