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

#include "cfsearch/prox.hpp"

#include <cmath>

#include "cfsearch/error.hpp"
#include "cfsearch/kernels.hpp"

namespace cfsearch {

double prox_l1(double s, double threshold) {
  if (threshold < 0.0) throw ValidationError("prox_l1 threshold must be >= 0");
  if (s > threshold) return s - threshold;
  if (s < -threshold) return s + threshold;
  return 0.0;
}

void prox_l1(std::span<const double> s, double threshold, std::span<double> out) {
  if (threshold < 0.0) throw ValidationError("prox_l1 threshold must be >= 0");
  if (s.size() != out.size()) throw ShapeError("prox_l1: size mismatch");
  kernels::active().soft_threshold(s.data(), threshold, out.data(), s.size());
}

double LearningRate::at(std::size_t t) const {
  return initial * std::pow(decay, static_cast<double>(t));
}

void prox_step(std::span<double> gamma, std::span<const double> grad, double eta,
               double lambda_sp) {
  if (gamma.size() != grad.size()) {
    throw ShapeError("prox_step: " + std::to_string(grad.size()) + " gradients for " +
                     std::to_string(gamma.size()) + " scale factors");
  }
  if (!(eta > 0.0)) throw ValidationError("prox_step needs eta > 0");
  if (lambda_sp < 0.0) throw ValidationError("prox_step needs lambda_sp >= 0");
  const auto& k = kernels::active();
  std::vector<double> inner(gamma.begin(), gamma.end());
  k.axpy(-eta, grad.data(), inner.data(), inner.size());
  k.soft_threshold(inner.data(), lambda_sp * eta, gamma.data(), gamma.size());
}

double ScaleFactorBank::l1(std::size_t path) const {
  double s = 0.0;
  for (const Var& row : gamma.at(path)) {
    for (double v : row.value().values()) s += std::abs(v);
  }
  return s;
}

double ScaleFactorBank::l1() const {
  double s = 0.0;
  for (std::size_t p = 0; p < gamma.size(); ++p) s += l1(p);
  return s;
}

std::size_t ScaleFactorBank::zero_count() const {
  std::size_t n = 0;
  for (const auto& rows : gamma) {
    for (const Var& row : rows) {
      for (double v : row.value().values()) n += v == 0.0 ? 1 : 0;
    }
  }
  return n;
}

std::size_t ScaleFactorBank::size() const {
  std::size_t n = 0;
  for (const auto& rows : gamma) {
    for (const Var& row : rows) n += row.size();
  }
  return n;
}

void ScaleFactorBank::step(std::size_t path, std::size_t t) {
  const double e = eta.at(t);
  for (Var& row : gamma.at(path)) {
    Tensor& value = row.mutable_value();
    if (!row.has_grad()) {
      const std::vector<double> zero(value.size(), 0.0);
      prox_step(value.values(), zero, e, lambda_sp);
    } else {
      prox_step(value.values(), row.grad().values(), e, lambda_sp);
    }
  }
}

}  // namespace cfsearch
