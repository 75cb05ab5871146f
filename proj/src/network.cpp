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

#include "cfsearch/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfsearch/error.hpp"
#include "cfsearch/ops.hpp"
#include "cfsearch/rng.hpp"

namespace cfsearch {
namespace {

Shape kernel_shape(int co, int ci, int k, int rank) {
  const auto kk = static_cast<std::size_t>(k);
  return {static_cast<std::size_t>(co), static_cast<std::size_t>(ci),
          rank == 2 ? kk : 1, kk};
}

}  // namespace

SubnetSelection SubnetSelection::from_genome(const SupernetSpec& spec, const Genome& g) {
  require_valid(spec, g);
  SubnetSelection s;
  s.path = g.path;
  s.operators = g.operators;
  const std::size_t L = spec.paths[g.path].num_layers();
  for (std::size_t l = 0; l < L; ++l) {
    s.widths.push_back(channel_width(spec, g, l));
    s.recursion.push_back(recursion_count(spec, g, l));
  }
  return s;
}

SubnetSelection SubnetSelection::mixed(std::size_t path) {
  SubnetSelection s;
  s.path = path;
  return s;
}

SubnetSelection SubnetSelection::full_width(std::size_t path,
                                            std::vector<std::size_t> ops) {
  SubnetSelection s;
  s.path = path;
  s.operators = std::move(ops);
  return s;
}

Var Supernet::add_parameter(std::string name, Tensor value) {
  Var v = Var::parameter(std::move(value));
  named_.push_back({std::move(name), v});
  return v;
}

std::string_view channel_rule_name(ChannelRule r) {
  return r == ChannelRule::kTopGamma ? "top_gamma" : "global_threshold";
}

ChannelRule parse_channel_rule(std::string_view name) {
  for (auto r : {ChannelRule::kTopGamma, ChannelRule::kGlobalThreshold}) {
    if (channel_rule_name(r) == name) return r;
  }
  throw ConfigError("unknown channel rule '" + std::string(name) +
                    "' (expected top_gamma or global_threshold)");
}

Supernet::Supernet(SupernetSpec spec, std::uint64_t seed) : spec_(finalize_spec(std::move(spec))) {
  Rng rng(seed);
  const int C = spec_.max_channels();
  const int rank = spec_.spatial_rank;
  const int k = spec_.stem_kernel;

  auto uniform = [&](Shape shape, int fan_in) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform_real(rng, -a, a);
    return t;
  };
  auto conv = [&](const std::string& name, int co, int ci, int kernel, Var& w, Var& b) {
    const int area = rank == 2 ? kernel * kernel : kernel;
    w = add_parameter(name + ".w", uniform(kernel_shape(co, ci, kernel, rank), ci * area));
    b = add_parameter(name + ".b", Tensor({static_cast<std::size_t>(co)}, 0.0));
  };

  gammas_.gamma.resize(spec_.num_paths());
  for (std::size_t p = 0; p < spec_.num_paths(); ++p) {
    const PathSpec& path = spec_.paths[p];
    PathWeights pw;
    const std::string gp = "g" + std::to_string(p);
    conv(gp + ".stem", C, spec_.input_channels, k, pw.stem_w, pw.stem_b);
    pw.blocks.resize(path.num_layers());
    for (std::size_t l = 0; l < path.num_layers(); ++l) {
      const LayerSpec& layer = path.layers[l];
      const int repeats = layer.effective_recursion_choices().back();
      for (OperatorKind kind : layer.operator_candidates) {
        std::vector<BlockWeights> reps;
        for (int r = 0; r < repeats; ++r) {
          BlockWeights b;
          b.kind = kind;
          const std::string name = gp + ".l" + std::to_string(l) + "." +
                                   std::string(operator_name(kind)) + ".r" +
                                   std::to_string(r);
          const OperatorTraits t = operator_traits(kind);
          switch (kind) {
            case OperatorKind::kConv3x3:
              conv(name + ".conv", C, C, t.kernel, b.w1, b.b1);
              break;
            case OperatorKind::kResBlock:
              conv(name + ".conv1", C, C, t.kernel, b.w1, b.b1);
              conv(name + ".conv2", C, C, t.kernel, b.w2, b.b2);
              break;
            case OperatorKind::kDwsBlock:
              b.groups = C;
              conv(name + ".depthwise", C, 1, t.kernel, b.w1, b.b1);
              conv(name + ".pointwise", C, C, 1, b.w2, b.b2);
              break;
            case OperatorKind::kGroupResidual:
              b.groups = t.groups;
              conv(name + ".conv1", C, C / t.groups, t.kernel, b.w1, b.b1);
              conv(name + ".conv2", C, C / t.groups, t.kernel, b.w2, b.b2);
              break;
            case OperatorKind::kShrinkResidual: {
              const int hidden = std::max(1, C / 2);
              conv(name + ".reduce", hidden, C, 1, b.w1, b.b1);
              conv(name + ".conv", C, hidden, t.kernel, b.w2, b.b2);
              break;
            }
            case OperatorKind::kContextResidual:
              conv(name + ".conv", C, C, t.kernel, b.w1, b.b1);
              b.w2 = add_parameter(name + ".context.w",
                                   uniform({static_cast<std::size_t>(C),
                                            static_cast<std::size_t>(C)},
                                           C));
              b.b2 = add_parameter(name + ".context.b",
                                   Tensor({static_cast<std::size_t>(C)}, 0.0));
              break;
          }
          reps.push_back(std::move(b));
        }
        pw.blocks[l].push_back(std::move(reps));
      }
      gammas_.gamma[p].push_back(add_parameter(
          gp + ".l" + std::to_string(l) + ".gamma",
          Tensor({static_cast<std::size_t>(C)}, 0.5)));
    }
    conv(gp + ".head", spec_.output_channels, C, k, pw.head_w, pw.head_b);
    paths_.push_back(std::move(pw));
  }

  const int Wd = spec_.discriminator_width;
  for (std::size_t d = 0; d < spec_.discriminator_paths.size(); ++d) {
    DiscriminatorWeights dw;
    const std::string dp = "d" + std::to_string(d);
    conv(dp + ".stem", Wd, spec_.output_channels, k, dw.stem_w, dw.stem_b);
    const auto& sched = spec_.discriminator_paths[d].resolution_schedule;
    for (std::size_t s = 0; s < sched.size(); ++s) {
      Var w, b;
      conv(dp + ".s" + std::to_string(s), Wd, Wd, k, w, b);
      dw.stage_w.push_back(w);
      dw.stage_b.push_back(b);
    }
    dw.out_w = add_parameter(dp + ".out.w", uniform({1, static_cast<std::size_t>(Wd)}, Wd));
    dw.out_b = add_parameter(dp + ".out.b", Tensor({1}, 0.0));
    discriminators_.push_back(std::move(dw));
  }
}

Var Supernet::apply_block(const BlockWeights& b, const Var& x) const {
  using namespace ops;
  switch (b.kind) {
    case OperatorKind::kConv3x3:
      return conv2d(x, b.w1, b.b1);
    case OperatorKind::kResBlock:
    case OperatorKind::kGroupResidual:
      return add(x, conv2d(leaky_relu(conv2d(x, b.w1, b.b1, b.groups), kLeakySlope), b.w2,
                           b.b2, b.groups));
    case OperatorKind::kDwsBlock:
      return conv2d(conv2d(x, b.w1, b.b1, b.groups), b.w2, b.b2);
    case OperatorKind::kShrinkResidual:
      return add(x, conv2d(leaky_relu(conv2d(x, b.w1, b.b1), kLeakySlope), b.w2, b.b2));
    case OperatorKind::kContextResidual:
      return add(x, add_channel(conv2d(x, b.w1, b.b1), linear(spatial_mean(x), b.w2, b.b2)));
  }
  throw InvariantError("unknown operator kind");
}

Var Supernet::apply_operator(std::size_t path, std::size_t layer, std::size_t op,
                             int repeats, const Var& x) const {
  const auto& reps = paths_[path].blocks[layer].at(op);
  if (repeats < 1 || static_cast<std::size_t>(repeats) > reps.size()) {
    throw ValidationError("recursion " + std::to_string(repeats) + " out of range");
  }
  Var h = x;
  for (int r = 0; r < repeats; ++r) {
    if (r > 0) h = ops::leaky_relu(h, kLeakySlope);
    h = apply_block(reps[static_cast<std::size_t>(r)], h);
  }
  return h;
}

std::vector<double> Supernet::channel_mask(std::size_t path, std::size_t layer,
                                           int width) const {
  return channel_mask(path, layer, width, channel_rule_);
}

std::vector<double> Supernet::channel_mask(std::size_t path, std::size_t layer, int width,
                                           ChannelRule rule) const {
  const std::size_t C = static_cast<std::size_t>(spec_.max_channels());
  if (width <= 0 || static_cast<std::size_t>(width) > C) {
    throw ValidationError("channel width " + std::to_string(width) + " outside [1, " +
                          std::to_string(C) + "]");
  }
  std::vector<double> mask(C, 0.0);
  if (static_cast<std::size_t>(width) == C) {
    std::fill(mask.begin(), mask.end(), 1.0);
    return mask;
  }
  const Tensor& g = gammas_.gamma.at(path).at(layer).value();
  if (rule == ChannelRule::kTopGamma) {
    std::vector<std::size_t> idx(C);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(g[a]) > std::abs(g[b]);
    });
    for (int i = 0; i < width; ++i) mask[idx[static_cast<std::size_t>(i)]] = 1.0;
    return mask;
  }
  std::vector<double> pooled;
  for (const Var& row : gammas_.gamma.at(path)) {
    for (double v : row.value().values()) pooled.push_back(std::abs(v));
  }
  std::sort(pooled.begin(), pooled.end());
  const double keep = static_cast<double>(width) / static_cast<double>(C);
  const auto cut = static_cast<std::size_t>(
      std::floor((1.0 - keep) * static_cast<double>(pooled.size())));
  const double threshold = pooled[std::min(cut, pooled.size() - 1)];
  for (std::size_t c = 0; c < C; ++c) mask[c] = std::abs(g[c]) >= threshold ? 1.0 : 0.0;
  return mask;
}

Var Supernet::forward_generator(const Var& x, const SubnetSelection& sel) const {
  if (sel.path >= spec_.num_paths()) {
    throw ValidationError("path " + std::to_string(sel.path) + " out of range");
  }
  const PathSpec& path = spec_.paths[sel.path];
  const PathWeights& pw = paths_[sel.path];
  const std::size_t L = path.num_layers();
  const Extent e = spec_.input_extent;
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != static_cast<std::size_t>(spec_.input_channels) ||
      s[2] != static_cast<std::size_t>(e.height) ||
      s[3] != static_cast<std::size_t>(e.width)) {
    throw ShapeError("generator input " + shape_string(s) + " does not match [N, " +
                     std::to_string(spec_.input_channels) + ", " +
                     std::to_string(e.height) + ", " + std::to_string(e.width) + "]");
  }
  if (!sel.operators.empty() && sel.operators.size() != L) {
    throw ValidationError("selection has " + std::to_string(sel.operators.size()) +
                          " operators for " + std::to_string(L) + " layers");
  }
  if ((!sel.widths.empty() && sel.widths.size() != L) ||
      (!sel.recursion.empty() && sel.recursion.size() != L)) {
    throw ValidationError("selection widths/recursion do not match the layer count");
  }

  using namespace ops;
  Var h = leaky_relu(conv2d(x, pw.stem_w, pw.stem_b), kLeakySlope);
  int scale = 0;
  for (std::size_t l = 0; l < L; ++l) {
    try {
      h = resample(h, scale, path.resolution_schedule[l], spec_.spatial_rank);
      scale = path.resolution_schedule[l];
      const int repeats = sel.recursion.empty()
                              ? path.layers[l].effective_recursion_choices().front()
                              : sel.recursion[l];
      Var y;
      if (sel.operators.empty()) {
        std::vector<Var> outs;
        for (std::size_t m = 0; m < path.num_operators(); ++m) {
          outs.push_back(apply_operator(sel.path, l, m, repeats, h));
        }
        y = average(outs);
      } else {
        y = apply_operator(sel.path, l, sel.operators[l], repeats, h);
      }
      Var g = gammas_.gamma[sel.path][l];
      if (!sel.widths.empty() && sel.widths[l] < spec_.max_channels()) {
        const std::vector<double> m = channel_mask(sel.path, l, sel.widths[l]);
        g = mul(g, Var::constant(Tensor({m.size()}, m)));
      }
      h = leaky_relu(channel_mul(y, g), kLeakySlope);
    } catch (const ShapeError& err) {
      throw ShapeError("layer " + std::to_string(l) + ": " + err.what());
    }
  }
  h = resample(h, scale, spec_.output_scale, spec_.spatial_rank);
  return conv2d(h, pw.head_w, pw.head_b);
}

Var Supernet::forward_discriminator(const Var& y, std::size_t dpath) const {
  if (dpath >= discriminators_.size()) {
    throw ValidationError("discriminator path " + std::to_string(dpath) + " out of range");
  }
  const DiscriminatorWeights& dw = discriminators_[dpath];
  const auto& sched = spec_.discriminator_paths[dpath].resolution_schedule;
  using namespace ops;
  Var h = leaky_relu(conv2d(y, dw.stem_w, dw.stem_b), kLeakySlope);
  int scale = spec_.output_scale;
  for (std::size_t s = 0; s < sched.size(); ++s) {
    h = resample(h, scale, sched[s], spec_.spatial_rank);
    scale = sched[s];
    h = leaky_relu(conv2d(h, dw.stage_w[s], dw.stage_b[s]), kLeakySlope);
  }
  return linear(spatial_mean(h), dw.out_w, dw.out_b);
}

std::vector<Var> Supernet::generator_parameters(std::size_t path) const {
  const PathWeights& pw = paths_.at(path);
  std::vector<Var> out{pw.stem_w, pw.stem_b};
  for (const auto& layer : pw.blocks) {
    for (const auto& reps : layer) {
      for (const BlockWeights& b : reps) {
        for (const Var* v : {&b.w1, &b.b1, &b.w2, &b.b2}) {
          if (*v) out.push_back(*v);
        }
      }
    }
  }
  out.push_back(pw.head_w);
  out.push_back(pw.head_b);
  return out;
}

std::vector<Var> Supernet::discriminator_parameters(std::size_t dpath) const {
  const DiscriminatorWeights& dw = discriminators_.at(dpath);
  std::vector<Var> out{dw.stem_w, dw.stem_b};
  for (std::size_t s = 0; s < dw.stage_w.size(); ++s) {
    out.push_back(dw.stage_w[s]);
    out.push_back(dw.stage_b[s]);
  }
  out.push_back(dw.out_w);
  out.push_back(dw.out_b);
  return out;
}

std::vector<Var> Supernet::scale_parameters(std::size_t path) const {
  return gammas_.gamma.at(path);
}

std::uint64_t Supernet::full_width_parameter_count(const Genome& g) const {
  require_valid(spec_, g);
  const PathWeights& pw = paths_[g.path];
  std::uint64_t n = pw.stem_w.size() + pw.stem_b.size() + pw.head_w.size() + pw.head_b.size();
  for (std::size_t l = 0; l < pw.blocks.size(); ++l) {
    const auto& reps = pw.blocks[l][g.operators[l]];
    const int r = recursion_count(spec_, g, l);
    for (int i = 0; i < r; ++i) {
      const BlockWeights& b = reps[static_cast<std::size_t>(i)];
      for (const Var* v : {&b.w1, &b.b1, &b.w2, &b.b2}) {
        if (*v) n += v->size();
      }
    }
    n += gammas_.gamma[g.path][l].size();
  }
  return n;
}

Supernet Supernet::snapshot() const {
  Supernet copy(spec_, 0);
  for (std::size_t i = 0; i < named_.size(); ++i) {
    copy.named_[i].value.mutable_value() = named_[i].value.value();
  }
  copy.gammas_.eta = gammas_.eta;
  copy.gammas_.lambda_sp = gammas_.lambda_sp;
  copy.channel_rule_ = channel_rule_;
  return copy;
}

void Supernet::zero_grad() {
  for (auto& p : named_) p.value.zero_grad();
}

}  // namespace cfsearch
