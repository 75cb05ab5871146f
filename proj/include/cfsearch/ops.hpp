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

// Differentiable tensor ops. Feature maps are [N, C, H, W]; rank-1 signals use
// H = 1 and are resampled along W only.

#include <vector>

#include "cfsearch/autodiff.hpp"

namespace cfsearch::ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// Mean of equally shaped inputs.
Var average(const std::vector<Var>& xs);

Var leaky_relu(const Var& x, double slope);
inline Var relu(const Var& x) { return leaky_relu(x, 0.0); }
Var tanh(const Var& x);
Var softplus(const Var& x);

// Zero "same" padding, stride 1. w: [Co, Ci / groups, kh, kw], b: [Co] or empty.
Var conv2d(const Var& x, const Var& w, const Var& b, int groups = 1);

// x: [N, D], w: [O, D], b: [O] or empty.
Var linear(const Var& x, const Var& w, const Var& b);

// x: [N, C, H, W] times g[c].
Var channel_mul(const Var& x, const Var& g);
// x: [N, C, H, W] plus v[n, c] broadcast over space.
Var add_channel(const Var& x, const Var& v);
// [N, C, H, W] -> [N, C]
Var spatial_mean(const Var& x);

// Nearest-neighbour x2 / 2x2 average pooling; rank 1 touches W only.
Var upsample2(const Var& x, int spatial_rank);
Var downsample2(const Var& x, int spatial_rank);
// Repeated x2 steps from 2^from to 2^to.
Var resample(const Var& x, int from_log2, int to_log2, int spatial_rank);

Var reshape(const Var& x, Shape shape);
Var detach(const Var& x);

// Scalar reductions.
Var sum(const Var& x);
Var mean(const Var& x);
Var mean_abs(const Var& x);
Var mean_square(const Var& x);

}  // namespace cfsearch::ops
