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

#include <cstdlib>
#include <string_view>

#include "cfsearch/kernels.hpp"

namespace cfsearch::kernels {
namespace {

const KernelTable& resolve() {
  const char* forced = std::getenv("CFSEARCH_SIMD");
  const std::string_view request = forced != nullptr ? forced : "auto";
  if (request == "scalar") return scalar_table();
  if (request == "avx2" || request == "auto") {
    if (const KernelTable* t = avx2_table()) return *t;
  }
  if (request == "neon" || request == "auto") {
    if (const KernelTable* t = neon_table()) return *t;
  }
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = resolve();
  return table;
}

}  // namespace cfsearch::kernels
