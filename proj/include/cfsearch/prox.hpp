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

// Proximal gradient step for the L1 penalty on channel scale factors.

#include <cstddef>
#include <span>
#include <vector>

#include "cfsearch/autodiff.hpp"

namespace cfsearch {

// Soft threshold: s - t for s > t, s + t for s < -t, 0 otherwise.
double prox_l1(double s, double threshold);
void prox_l1(std::span<const double> s, double threshold, std::span<double> out);

// eta(t) = initial * decay^t, t counted in epochs.
struct LearningRate {
  double initial = 0.01;
  double decay = 1.0;

  double at(std::size_t t) const;
};

// gamma <- prox_{lambda * eta}(gamma - eta * grad), in place.
void prox_step(std::span<double> gamma, std::span<const double> grad, double eta,
               double lambda_sp);

// Per-channel scale factors: one row per (path, layer), each as wide as the
// widest channel choice.
struct ScaleFactorBank {
  std::vector<std::vector<Var>> gamma;  // [path][layer] -> [C]
  LearningRate eta;
  double lambda_sp = 0.0;

  // L_sp = sum |gamma| over every row of `path`, or all paths when omitted.
  double l1(std::size_t path) const;
  double l1() const;
  std::size_t zero_count() const;
  std::size_t size() const;

  // Applies prox_step to every row of `path` using the rows' gradients.
  void step(std::size_t path, std::size_t t);
};

}  // namespace cfsearch
