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

// Data-parallel inner loops used by the tensor core. Every routine has a
// portable scalar reference; vectorized variants are picked once at startup
// from what the CPU reports, or forced with CFSEARCH_SIMD=scalar|avx2|neon.
//
// Elementwise kernels (axpy, add, mul, soft_threshold, ...) are bit-identical
// across variants. Reductions (dot, sum) reassociate and only agree to
// rounding.

#include <cstddef>
#include <string_view>

namespace cfsearch::kernels {

struct KernelTable {
  std::string_view name;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // sum_i x[i]
  double (*sum)(const double* x, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // out[i] = x[i] + y[i]
  void (*add)(const double* x, const double* y, double* out, std::size_t n);
  // out[i] = x[i] * y[i]
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  // x[i] *= a
  void (*scale)(double a, double* x, std::size_t n);
  // out[i] = prox of the l1 norm with the given threshold (soft threshold)
  void (*soft_threshold)(const double* x, double threshold, double* out,
                         std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// The table every caller should use. Resolved once, thread-safe.
const KernelTable& active();

}  // namespace cfsearch::kernels
