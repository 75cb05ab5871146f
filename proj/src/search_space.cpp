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

#include "cfsearch/search_space.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "cfsearch/error.hpp"

namespace cfsearch {
namespace {

struct OperatorEntry {
  OperatorKind kind;
  std::string_view name;
  OperatorTraits traits;
};

constexpr OperatorEntry kOperators[] = {
    {OperatorKind::kConv3x3, "conv3x3", {3, 1}},
    {OperatorKind::kResBlock, "resblock", {3, 1}},
    {OperatorKind::kDwsBlock, "dwsblock", {3, 1}},
    {OperatorKind::kGroupResidual, "grb", {3, 2}},
    {OperatorKind::kShrinkResidual, "srb", {3, 1}},
    {OperatorKind::kContextResidual, "crb", {3, 1}},
};

const OperatorEntry& entry(OperatorKind kind) {
  for (const auto& e : kOperators) {
    if (e.kind == kind) return e;
  }
  throw ConfigError("unknown operator kind");
}

std::size_t parse_index(std::string_view text, std::string_view field) {
  std::size_t value = 0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw ConfigError("genome field '" + std::string(field) +
                      "': bad index '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::size_t> parse_index_list(std::string_view text,
                                          std::string_view field) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(parse_index(text.substr(start, comma - start), field));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

void append_list(std::ostringstream& os, const std::vector<std::size_t>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i != 0) os << ',';
    os << v[i];
  }
}

int scale_from_json(const nlohmann::json& j) {
  if (j.is_string()) return parse_scale(j.get<std::string>());
  if (j.is_number()) {
    const double v = j.get<double>();
    if (!(v > 0.0)) throw ConfigError("resolution scale must be positive");
    const double e = std::log2(v);
    if (std::abs(e - std::round(e)) > 1e-12) {
      throw ConfigError("resolution scale must be a power of two");
    }
    return static_cast<int>(std::lround(e));
  }
  throw ConfigError("resolution scale must be a number or a string like 1/2");
}

void check_extent(Extent base, int log2_scale, int rank, const std::string& where) {
  if (log2_scale >= 0) return;
  const int div = 1 << (-log2_scale);
  const bool bad_width = base.width % div != 0;
  const bool bad_height = rank == 2 && base.height % div != 0;
  if (bad_width || bad_height) {
    throw ConfigError(where + ": scale " + format_scale(log2_scale) +
                      " does not divide the input extent");
  }
}

}  // namespace

std::string_view operator_name(OperatorKind kind) { return entry(kind).name; }

std::optional<OperatorKind> parse_operator(std::string_view name) {
  for (const auto& e : kOperators) {
    if (e.name == name) return e.kind;
  }
  return std::nullopt;
}

OperatorTraits operator_traits(OperatorKind kind) { return entry(kind).traits; }

std::vector<int> LayerSpec::effective_recursion_choices() const {
  if (recursion_choices.empty()) return {1};
  return recursion_choices;
}

int parse_scale(std::string_view text) {
  auto parse_pow2 = [&](std::string_view part) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size() || v <= 0 ||
        (v & (v - 1)) != 0) {
      throw ConfigError("resolution scale '" + std::string(text) +
                        "' is not a power of two");
    }
    int e = 0;
    while ((1 << e) < v) ++e;
    return e;
  };
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) return parse_pow2(text);
  return parse_pow2(text.substr(0, slash)) - parse_pow2(text.substr(slash + 1));
}

std::string format_scale(int log2_scale) {
  if (log2_scale >= 0) return std::to_string(1 << log2_scale);
  return "1/" + std::to_string(1 << (-log2_scale));
}

Extent scaled_extent(Extent base, int log2_scale, int spatial_rank) {
  auto scale = [&](int v) {
    return log2_scale >= 0 ? v << log2_scale : v >> (-log2_scale);
  };
  Extent out = base;
  out.width = scale(base.width);
  if (spatial_rank == 2) out.height = scale(base.height);
  return out;
}

SupernetSpec finalize_spec(SupernetSpec spec) {
  if (spec.paths.empty()) throw ConfigError("supernet needs at least one path");
  if (spec.channel_choices.empty()) {
    throw ConfigError("channel_choices must not be empty");
  }
  for (std::size_t i = 0; i < spec.channel_choices.size(); ++i) {
    if (spec.channel_choices[i] <= 0) {
      throw ConfigError("channel_choices must be positive");
    }
    if (i > 0 && spec.channel_choices[i] <= spec.channel_choices[i - 1]) {
      throw ConfigError("channel_choices must be strictly increasing");
    }
  }
  if (spec.spatial_rank != 1 && spec.spatial_rank != 2) {
    throw ConfigError("spatial_rank must be 1 or 2");
  }
  if (spec.spatial_rank == 1 && spec.input_extent.height != 1) {
    throw ConfigError("rank-1 specs need input height 1");
  }
  if (spec.input_extent.height < 1 || spec.input_extent.width < 1) {
    throw ConfigError("input_extent must be positive");
  }
  if (spec.input_channels < 1 || spec.output_channels < 1) {
    throw ConfigError("input/output channels must be positive");
  }
  if (spec.stem_kernel < 1 || spec.stem_kernel % 2 == 0) {
    throw ConfigError("stem_kernel must be a positive odd number");
  }
  if (spec.discriminator_width < 1) {
    throw ConfigError("discriminator_width must be positive");
  }
  check_extent(spec.input_extent, spec.output_scale, spec.spatial_rank,
               "output_scale");

  for (std::size_t p = 0; p < spec.paths.size(); ++p) {
    const std::string where = "path " + std::to_string(p);
    PathSpec& path = spec.paths[p];
    if (path.layers.empty()) throw ConfigError(where + " has no layers");
    if (path.resolution_schedule.size() != path.layers.size()) {
      throw ConfigError(where + ": resolution_schedule length " +
                        std::to_string(path.resolution_schedule.size()) +
                        " != layer count " + std::to_string(path.layers.size()));
    }
    const std::size_t m = path.layers.front().operator_candidates.size();
    for (std::size_t l = 0; l < path.layers.size(); ++l) {
      const std::string lwhere = where + " layer " + std::to_string(l);
      const auto& ops = path.layers[l].operator_candidates;
      if (ops.empty()) throw ConfigError(lwhere + " has no operators");
      if (ops.size() != m) {
        throw ConfigError(lwhere + ": operator count differs within the path");
      }
      std::set<OperatorKind> seen(ops.begin(), ops.end());
      if (seen.size() != ops.size()) {
        throw ConfigError(lwhere + ": operator candidates must be distinct");
      }
      for (OperatorKind k : ops) {
        if (operator_traits(k).groups > 1 &&
            spec.max_channels() % operator_traits(k).groups != 0) {
          throw ConfigError(lwhere + ": grouped operator needs the widest "
                                     "channel choice divisible by its groups");
        }
      }
      const auto& rec = path.layers[l].recursion_choices;
      for (std::size_t i = 0; i < rec.size(); ++i) {
        if (rec[i] <= 0 || (i > 0 && rec[i] <= rec[i - 1])) {
          throw ConfigError(lwhere +
                            ": recursion_choices must be positive and increasing");
        }
      }
      check_extent(spec.input_extent, path.resolution_schedule[l],
                   spec.spatial_rank, lwhere);
    }
  }

  if (spec.discriminator_paths.empty()) {
    for (const auto& path : spec.paths) {
      spec.discriminator_paths.push_back({path.resolution_schedule});
    }
  }
  for (std::size_t d = 0; d < spec.discriminator_paths.size(); ++d) {
    const auto& sched = spec.discriminator_paths[d].resolution_schedule;
    if (sched.empty()) {
      throw ConfigError("discriminator path " + std::to_string(d) +
                        " has no stages");
    }
    for (int s : sched) {
      check_extent(scaled_extent(spec.input_extent, spec.output_scale,
                                 spec.spatial_rank),
                   s - spec.output_scale, spec.spatial_rank,
                   "discriminator path " + std::to_string(d));
    }
  }

  std::vector<bool> taken(spec.discriminator_paths.size(), false);
  for (std::size_t p = 0; p < spec.paths.size(); ++p) {
    bool matched = false;
    for (std::size_t d = 0; d < spec.discriminator_paths.size(); ++d) {
      if (!taken[d] && spec.discriminator_paths[d].resolution_schedule ==
                           spec.paths[p].resolution_schedule) {
        spec.paths[p].matched_discriminator_path = d;
        taken[d] = true;
        matched = true;
        break;
      }
    }
    if (!matched) {
      throw ConfigError("path " + std::to_string(p) +
                        " has no unmatched discriminator path with the same "
                        "resolution schedule");
    }
  }
  return spec;
}

SupernetSpec spec_from_json(const nlohmann::json& j) {
  try {
    SupernetSpec spec;
    spec.spatial_rank = j.value("spatial_rank", 2);
    spec.input_channels = j.value("input_channels", 1);
    spec.output_channels = j.value("output_channels", 1);
    if (j.contains("input_extent")) {
      const auto& e = j.at("input_extent");
      if (!e.is_array() || e.size() != 2) {
        throw ConfigError("input_extent must be [height, width]");
      }
      spec.input_extent = {e[0].get<int>(), e[1].get<int>()};
    }
    if (j.contains("output_scale")) {
      spec.output_scale = scale_from_json(j.at("output_scale"));
    }
    spec.stem_kernel = j.value("stem_kernel", 3);
    spec.discriminator_width = j.value("discriminator_width", 8);
    spec.channel_choices = j.at("channel_choices").get<std::vector<int>>();
    for (const auto& jp : j.at("paths")) {
      PathSpec path;
      for (const auto& s : jp.at("resolution_schedule")) {
        path.resolution_schedule.push_back(scale_from_json(s));
      }
      for (const auto& jl : jp.at("layers")) {
        LayerSpec layer;
        for (const auto& name : jl.at("operators")) {
          const auto kind = parse_operator(name.get<std::string>());
          if (!kind) {
            throw ConfigError("unknown operator '" + name.get<std::string>() + "'");
          }
          layer.operator_candidates.push_back(*kind);
        }
        if (jl.contains("recursion_choices")) {
          layer.recursion_choices = jl.at("recursion_choices").get<std::vector<int>>();
        }
        path.layers.push_back(std::move(layer));
      }
      spec.paths.push_back(std::move(path));
    }
    if (j.contains("discriminator_paths")) {
      for (const auto& jd : j.at("discriminator_paths")) {
        DiscriminatorPathSpec d;
        for (const auto& s : jd.at("resolution_schedule")) {
          d.resolution_schedule.push_back(scale_from_json(s));
        }
        spec.discriminator_paths.push_back(std::move(d));
      }
    }
    return finalize_spec(std::move(spec));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("supernet config: ") + e.what());
  }
}

nlohmann::json spec_to_json(const SupernetSpec& spec) {
  nlohmann::json j;
  j["spatial_rank"] = spec.spatial_rank;
  j["input_channels"] = spec.input_channels;
  j["output_channels"] = spec.output_channels;
  j["input_extent"] = {spec.input_extent.height, spec.input_extent.width};
  j["output_scale"] = format_scale(spec.output_scale);
  j["stem_kernel"] = spec.stem_kernel;
  j["discriminator_width"] = spec.discriminator_width;
  j["channel_choices"] = spec.channel_choices;
  nlohmann::json paths = nlohmann::json::array();
  for (const auto& path : spec.paths) {
    nlohmann::json jp;
    nlohmann::json sched = nlohmann::json::array();
    for (int s : path.resolution_schedule) sched.push_back(format_scale(s));
    jp["resolution_schedule"] = sched;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : path.layers) {
      nlohmann::json jl;
      nlohmann::json ops = nlohmann::json::array();
      for (auto k : layer.operator_candidates) ops.push_back(operator_name(k));
      jl["operators"] = ops;
      if (!layer.recursion_choices.empty()) {
        jl["recursion_choices"] = layer.recursion_choices;
      }
      layers.push_back(jl);
    }
    jp["layers"] = layers;
    paths.push_back(jp);
  }
  j["paths"] = paths;
  nlohmann::json dpaths = nlohmann::json::array();
  for (const auto& d : spec.discriminator_paths) {
    nlohmann::json sched = nlohmann::json::array();
    for (int s : d.resolution_schedule) sched.push_back(format_scale(s));
    dpaths.push_back({{"resolution_schedule", sched}});
  }
  j["discriminator_paths"] = dpaths;
  return j;
}

SupernetSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open supernet config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
  return spec_from_json(j.contains("supernet") ? j.at("supernet") : j);
}

std::string to_string(const Genome& g) {
  std::ostringstream os;
  os << "path:" << g.path << ";ops:";
  append_list(os, g.operators);
  os << ";ch:";
  append_list(os, g.channels);
  if (!g.recursion.empty()) {
    os << ";rec:";
    append_list(os, g.recursion);
  }
  return os.str();
}

Genome parse_genome(std::string_view text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r' ||
                           text.back() == ' ')) {
    text.remove_suffix(1);
  }
  Genome g;
  bool have_path = false, have_ops = false, have_ch = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto semi = text.find(';', start);
    const auto field = text.substr(start, semi - start);
    const auto colon = field.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError("genome record '" + std::string(text) +
                        "': expected key:value fields");
    }
    const auto key = field.substr(0, colon);
    const auto value = field.substr(colon + 1);
    if (key == "path") {
      g.path = parse_index(value, key);
      have_path = true;
    } else if (key == "ops") {
      g.operators = parse_index_list(value, key);
      have_ops = true;
    } else if (key == "ch") {
      g.channels = parse_index_list(value, key);
      have_ch = true;
    } else if (key == "rec") {
      g.recursion = parse_index_list(value, key);
    } else {
      throw ConfigError("genome record: unknown field '" + std::string(key) + "'");
    }
    if (semi == std::string_view::npos) break;
    start = semi + 1;
  }
  if (!have_path || !have_ops || !have_ch) {
    throw ConfigError("genome record '" + std::string(text) +
                      "' needs path, ops and ch fields");
  }
  return g;
}

Verdict validate_genome(const SupernetSpec& spec, const Genome& g) {
  if (g.path >= spec.num_paths()) {
    return Verdict::reject("path_index " + std::to_string(g.path) +
                           " out of range [0, " +
                           std::to_string(spec.num_paths()) + ")");
  }
  const PathSpec& path = spec.paths[g.path];
  const std::size_t layers = path.num_layers();
  if (g.operators.size() != layers) {
    return Verdict::reject("operator list length " +
                           std::to_string(g.operators.size()) + " != L = " +
                           std::to_string(layers));
  }
  if (g.channels.size() != layers) {
    return Verdict::reject("channel list length " +
                           std::to_string(g.channels.size()) + " != L = " +
                           std::to_string(layers));
  }
  if (!g.recursion.empty() && g.recursion.size() != layers) {
    return Verdict::reject("recursion list length " +
                           std::to_string(g.recursion.size()) + " != L = " +
                           std::to_string(layers));
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (g.operators[l] >= path.layers[l].operator_candidates.size()) {
      return Verdict::reject("layer " + std::to_string(l) + ": operator index " +
                             std::to_string(g.operators[l]) + " out of range");
    }
    if (g.channels[l] >= spec.channel_choices.size()) {
      return Verdict::reject("layer " + std::to_string(l) + ": channel index " +
                             std::to_string(g.channels[l]) + " out of range");
    }
    if (!g.recursion.empty() &&
        g.recursion[l] >= path.layers[l].effective_recursion_choices().size()) {
      return Verdict::reject("layer " + std::to_string(l) + ": recursion index " +
                             std::to_string(g.recursion[l]) + " out of range");
    }
  }
  return Verdict::ok();
}

void require_valid(const SupernetSpec& spec, const Genome& g) {
  const Verdict v = validate_genome(spec, g);
  if (!v) throw ValidationError("invalid genome " + to_string(g) + ": " + v.reason);
}

namespace {

// Mixed-radix increment, last digit fastest. False once it wraps around.
bool advance(std::vector<std::size_t>& digits, const std::vector<std::size_t>& radix) {
  for (std::size_t i = digits.size(); i > 0; --i) {
    if (++digits[i - 1] < radix[i - 1]) return true;
    digits[i - 1] = 0;
  }
  return false;
}

bool path_has_recursion(const PathSpec& path) {
  return std::any_of(path.layers.begin(), path.layers.end(), [](const LayerSpec& l) {
    return l.effective_recursion_choices().size() > 1;
  });
}

}  // namespace

Genome normalized(const SupernetSpec& spec, Genome g) {
  if (g.path >= spec.num_paths()) return g;
  const PathSpec& path = spec.paths[g.path];
  if (!path_has_recursion(path)) {
    if (std::all_of(g.recursion.begin(), g.recursion.end(),
                    [](std::size_t r) { return r == 0; })) {
      g.recursion.clear();
    }
  } else if (g.recursion.empty()) {
    g.recursion.assign(path.num_layers(), 0);
  }
  return g;
}

int channel_width(const SupernetSpec& spec, const Genome& g, std::size_t layer) {
  return spec.channel_choices.at(g.channels.at(layer));
}

int recursion_count(const SupernetSpec& spec, const Genome& g, std::size_t layer) {
  const auto choices = spec.paths.at(g.path).layers.at(layer).effective_recursion_choices();
  return g.recursion.empty() ? choices.front() : choices.at(g.recursion.at(layer));
}

Genome widest_genome(const SupernetSpec& spec, std::size_t path,
                     std::vector<std::size_t> operators) {
  Genome g;
  g.path = path;
  const std::size_t layers = spec.paths.at(path).num_layers();
  g.operators = operators.empty() ? std::vector<std::size_t>(layers, 0)
                                  : std::move(operators);
  g.channels.assign(layers, spec.channel_choices.size() - 1);
  return normalized(spec, std::move(g));
}

std::uint64_t genome_space_size(const SupernetSpec& spec) {
  std::uint64_t total = 0;
  for (const auto& path : spec.paths) {
    std::uint64_t n = 1;
    for (const auto& layer : path.layers) {
      const std::uint64_t per_layer = layer.operator_candidates.size() *
                                      spec.channel_choices.size() *
                                      layer.effective_recursion_choices().size();
      if (__builtin_mul_overflow(n, per_layer, &n)) {
        throw OverflowError("genome space size overflows 64 bits");
      }
    }
    if (__builtin_add_overflow(total, n, &total)) {
      throw OverflowError("genome space size overflows 64 bits");
    }
  }
  return total;
}

std::vector<Genome> enumerate_genomes(const SupernetSpec& spec) {
  std::vector<Genome> out;
  out.reserve(static_cast<std::size_t>(genome_space_size(spec)));
  for (std::size_t p = 0; p < spec.num_paths(); ++p) {
    const PathSpec& path = spec.paths[p];
    const std::size_t L = path.num_layers();
    const bool rec = path_has_recursion(path);
    // Odometer digits: operators, channels, then recursion; last digit fastest.
    std::vector<std::size_t> radix;
    for (const auto& layer : path.layers) radix.push_back(layer.operator_candidates.size());
    for (std::size_t l = 0; l < L; ++l) radix.push_back(spec.channel_choices.size());
    if (rec) {
      for (const auto& layer : path.layers) {
        radix.push_back(layer.effective_recursion_choices().size());
      }
    }
    std::vector<std::size_t> digits(radix.size(), 0);
    while (true) {
      Genome g;
      g.path = p;
      g.operators.assign(digits.begin(), digits.begin() + L);
      g.channels.assign(digits.begin() + L, digits.begin() + 2 * L);
      if (rec) g.recursion.assign(digits.begin() + 2 * L, digits.end());
      out.push_back(std::move(g));
      if (!advance(digits, radix)) break;
    }
  }
  return out;
}

std::uint64_t operator_specialization_count(std::uint64_t num_operators,
                                            std::uint64_t num_layers) {
  if (num_operators < 1 || num_layers < 1) {
    throw ConfigError("operator_specialization_count needs M >= 1 and L >= 1");
  }
  std::uint64_t factorial = 1;
  for (std::uint64_t i = 2; i <= num_operators; ++i) {
    if (__builtin_mul_overflow(factorial, i, &factorial)) {
      throw OverflowError("M! overflows 64 bits");
    }
  }
  std::uint64_t result = 1;
  for (std::uint64_t l = 1; l < num_layers; ++l) {
    if (__builtin_mul_overflow(result, factorial, &result)) {
      throw OverflowError("(M!)^(L-1) overflows 64 bits for M = " +
                          std::to_string(num_operators) +
                          ", L = " + std::to_string(num_layers));
    }
  }
  return result;
}

std::vector<Specialization> enumerate_specializations(std::size_t num_operators,
                                                      std::size_t num_layers,
                                                      std::uint64_t cap) {
  if (num_operators < 1 || num_layers < 1) {
    throw ConfigError("enumerate_specializations needs M >= 1 and L >= 1");
  }
  std::uint64_t factorial = 1;
  std::uint64_t ordered = 1;
  bool overflow = false;
  for (std::uint64_t i = 2; i <= num_operators && !overflow; ++i) {
    overflow = __builtin_mul_overflow(factorial, i, &factorial);
  }
  for (std::size_t l = 0; l < num_layers && !overflow; ++l) {
    overflow = __builtin_mul_overflow(ordered, factorial, &ordered);
  }
  if (overflow || ordered > cap) {
    throw EnumerationTooLarge("(M!)^L for M = " + std::to_string(num_operators) +
                              ", L = " + std::to_string(num_layers) +
                              " exceeds the enumeration cap of " +
                              std::to_string(cap));
  }

  // Sorting members puts operator i at layer 0 of member i, so a canonical
  // specialization is one permutation per remaining layer.
  std::vector<std::size_t> identity(num_operators);
  std::iota(identity.begin(), identity.end(), 0);
  std::vector<std::vector<std::size_t>> perms(num_layers - 1, identity);

  std::vector<Specialization> out;
  while (true) {
    Specialization s(num_operators, OperatorAssignment(num_layers));
    for (std::size_t i = 0; i < num_operators; ++i) {
      s[i][0] = i;
      for (std::size_t l = 1; l < num_layers; ++l) s[i][l] = perms[l - 1][i];
    }
    out.push_back(std::move(s));
    std::size_t l = perms.size();
    bool done = true;
    while (l > 0) {
      --l;
      if (std::next_permutation(perms[l].begin(), perms[l].end())) {
        done = false;
        break;
      }
    }
    if (done) break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> enumerate_paths(const SupernetSpec& spec) {
  std::vector<std::size_t> ids(spec.num_paths());
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace cfsearch
