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

// Hierarchical search space: paths (network level) made of layers, each layer
// offering M operator candidates (block level) and a shared channel choice
// set. A Genome picks one path, one operator per layer and one channel width
// per layer.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace cfsearch {

// Toy analogues of the convolutional blocks a GAN generator searches over.
enum class OperatorKind {
  kConv3x3,
  kResBlock,
  kDwsBlock,
  kGroupResidual,
  kShrinkResidual,
  kContextResidual,
};

std::string_view operator_name(OperatorKind kind);
std::optional<OperatorKind> parse_operator(std::string_view name);

struct OperatorTraits {
  int kernel = 3;
  int groups = 1;
};
OperatorTraits operator_traits(OperatorKind kind);

// Grouped blocks fall back to a single group when a width does not split.
constexpr std::uint64_t effective_groups(int groups, std::uint64_t c_in,
                                         std::uint64_t c_out) {
  const auto g = static_cast<std::uint64_t>(groups);
  return (g > 1 && c_in % g == 0 && c_out % g == 0) ? g : 1;
}

struct Extent {
  int height = 1;
  int width = 1;
  friend bool operator==(const Extent&, const Extent&) = default;
};

struct LayerSpec {
  std::vector<OperatorKind> operator_candidates;
  // Repeat counts of the block; empty means {1}.
  std::vector<int> recursion_choices;

  std::vector<int> effective_recursion_choices() const;
};

struct PathSpec {
  std::vector<LayerSpec> layers;
  // log2 of each layer's spatial scale relative to the input extent.
  std::vector<int> resolution_schedule;
  // Filled in by finalize_spec.
  std::size_t matched_discriminator_path = 0;

  std::size_t num_layers() const { return layers.size(); }
  std::size_t num_operators() const {
    return layers.empty() ? 0 : layers.front().operator_candidates.size();
  }
};

struct DiscriminatorPathSpec {
  std::vector<int> resolution_schedule;
};

struct SupernetSpec {
  std::vector<PathSpec> paths;
  std::vector<DiscriminatorPathSpec> discriminator_paths;
  std::vector<int> channel_choices;
  int spatial_rank = 2;  // 1: signals [C, 1, W]; 2: images [C, H, W]
  int input_channels = 1;
  int output_channels = 1;
  Extent input_extent{4, 4};
  int output_scale = 0;  // log2, relative to input_extent
  int stem_kernel = 3;
  int discriminator_width = 8;

  std::size_t num_paths() const { return paths.size(); }
  int max_channels() const {
    return channel_choices.empty() ? 0 : channel_choices.back();
  }
};

// Checks every structural invariant and resolves each generator path's
// matched discriminator path (equal resolution schedule, lowest free index).
// Throws ConfigError naming the first violation.
SupernetSpec finalize_spec(SupernetSpec spec);

SupernetSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const SupernetSpec& spec);
SupernetSpec load_spec(const std::string& path);

// Parses "1", "2", "1/2", "1/4", ... into a log2 exponent.
int parse_scale(std::string_view text);
std::string format_scale(int log2_scale);

// Extent at 2^log2_scale times the base along every spatial axis in use.
Extent scaled_extent(Extent base, int log2_scale, int spatial_rank);

struct Genome {
  std::size_t path = 0;
  std::vector<std::size_t> operators;
  std::vector<std::size_t> channels;  // indices into channel_choices
  std::vector<std::size_t> recursion;  // indices into recursion choices; may be empty

  auto operator<=>(const Genome&) const = default;
};

// "path:<i>;ops:<i,...>;ch:<i,...>[;rec:<i,...>]"
std::string to_string(const Genome& g);
Genome parse_genome(std::string_view text);

struct Verdict {
  bool valid = true;
  std::string reason;

  explicit operator bool() const { return valid; }
  static Verdict ok() { return {}; }
  static Verdict reject(std::string why) { return {false, std::move(why)}; }
};

Verdict validate_genome(const SupernetSpec& spec, const Genome& g);
void require_valid(const SupernetSpec& spec, const Genome& g);

// Fills an empty recursion list with zeros so equal architectures compare
// equal.
Genome normalized(const SupernetSpec& spec, Genome g);

int channel_width(const SupernetSpec& spec, const Genome& g, std::size_t layer);
int recursion_count(const SupernetSpec& spec, const Genome& g, std::size_t layer);

// Widest channels, first operator, first recursion choice.
Genome widest_genome(const SupernetSpec& spec, std::size_t path,
                     std::vector<std::size_t> operators);

// Every valid genome of the spec in lexicographic order.
std::vector<Genome> enumerate_genomes(const SupernetSpec& spec);
std::uint64_t genome_space_size(const SupernetSpec& spec);

// (M!)^(L-1). Throws OverflowError when it does not fit in 64 bits.
std::uint64_t operator_specialization_count(std::uint64_t num_operators,
                                            std::uint64_t num_layers);

// One specialization: M operator assignments (each of length L) that use M
// distinct operators in every layer, sorted lexicographically.
using OperatorAssignment = std::vector<std::size_t>;
using Specialization = std::vector<OperatorAssignment>;

inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

// All (M!)^(L-1) specializations in lexicographic order. Throws
// EnumerationTooLarge when (M!)^L exceeds the cap.
std::vector<Specialization> enumerate_specializations(
    std::size_t num_operators, std::size_t num_layers,
    std::uint64_t cap = kDefaultEnumerationCap);

std::vector<std::size_t> enumerate_paths(const SupernetSpec& spec);

}  // namespace cfsearch
