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

// Weight-sharing super-generator and multi-path discriminator.
//
// Every block runs at the widest channel count; a subnet of width c keeps the
// c channels whose scale factors have the largest magnitude and zeroes the
// rest, so all subnets read the same weights. Layer output is
// leaky_relu(mask * gamma * block(x)).

#include <cstdint>
#include <string>
#include <vector>

#include "cfsearch/autodiff.hpp"
#include "cfsearch/prox.hpp"
#include "cfsearch/search_space.hpp"

namespace cfsearch {

inline constexpr double kLeakySlope = 0.2;

enum class ChannelRule {
  kTopGamma,         // the c largest |gamma| per layer, ties to lower index
  kGlobalThreshold,  // |gamma| at or above the path-wide percentile for c
};

std::string_view channel_rule_name(ChannelRule r);
ChannelRule parse_channel_rule(std::string_view name);

// What to run through one generator path. Empty `operators` means the mixed
// form: every candidate at full width, averaged.
struct SubnetSelection {
  std::size_t path = 0;
  std::vector<std::size_t> operators;
  std::vector<int> widths;      // per layer; empty means widest
  std::vector<int> recursion;   // per layer; empty means first choice

  static SubnetSelection from_genome(const SupernetSpec& spec, const Genome& g);
  static SubnetSelection mixed(std::size_t path);
  static SubnetSelection full_width(std::size_t path, std::vector<std::size_t> ops);
};

struct NamedParameter {
  std::string name;
  Var value;
};

// Parameters of one block application.
struct BlockWeights {
  OperatorKind kind = OperatorKind::kConv3x3;
  int groups = 1;
  Var w1, b1, w2, b2;
};

class Supernet {
 public:
  Supernet() = default;
  Supernet(SupernetSpec spec, std::uint64_t seed);

  const SupernetSpec& spec() const { return spec_; }

  // Narrow layers keep the channels picked by channel_rule().
  Var forward_generator(const Var& x, const SubnetSelection& sel) const;
  // Scalar logit per sample, shape [N, 1].
  Var forward_discriminator(const Var& y, std::size_t dpath) const;

  // 0/1 mask over the widest channel count.
  std::vector<double> channel_mask(std::size_t path, std::size_t layer, int width) const;
  std::vector<double> channel_mask(std::size_t path, std::size_t layer, int width,
                                   ChannelRule rule) const;

  ChannelRule channel_rule() const { return channel_rule_; }
  void set_channel_rule(ChannelRule rule) { channel_rule_ = rule; }

  ScaleFactorBank& gammas() { return gammas_; }
  const ScaleFactorBank& gammas() const { return gammas_; }

  // Generator weights of a path excluding scale factors.
  std::vector<Var> generator_parameters(std::size_t path) const;
  std::vector<Var> discriminator_parameters(std::size_t dpath) const;
  std::vector<Var> scale_parameters(std::size_t path) const;

  // Every tensor in declaration order, scale factors included.
  const std::vector<NamedParameter>& named_parameters() const { return named_; }

  // Element count of every tensor the genome's path, operators and repeats
  // read, including its scale factors. Widths are ignored: this equals the
  // analytic cost only for the widest genome.
  std::uint64_t full_width_parameter_count(const Genome& g) const;

  // Copies of a Supernet share tensors; snapshot() is the deep copy.
  Supernet snapshot() const;

  void zero_grad();

 private:
  struct PathWeights {
    Var stem_w, stem_b, head_w, head_b;
    // [layer][operator][repeat]
    std::vector<std::vector<std::vector<BlockWeights>>> blocks;
  };
  struct DiscriminatorWeights {
    Var stem_w, stem_b;
    std::vector<Var> stage_w, stage_b;
    Var out_w, out_b;
  };

  Var add_parameter(std::string name, Tensor value);
  Var apply_block(const BlockWeights& b, const Var& x) const;
  Var apply_operator(std::size_t path, std::size_t layer, std::size_t op, int repeats,
                     const Var& x) const;

  SupernetSpec spec_;
  std::vector<NamedParameter> named_;
  std::vector<PathWeights> paths_;
  std::vector<DiscriminatorWeights> discriminators_;
  ScaleFactorBank gammas_;
  ChannelRule channel_rule_ = ChannelRule::kTopGamma;
};

}  // namespace cfsearch
