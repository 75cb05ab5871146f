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

// Binary weight container.
//
//   magic    8 bytes  "CFSCKPT1"
//   version  u32      1
//   count    u32      number of tensors
//   count x { name_len u32, name bytes, rank u32, rank x u64 extents }
//   values   f64 for every tensor in table order
//
// All integers and floats are little-endian.

#include <string>

#include "cfsearch/network.hpp"

namespace cfsearch {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Supernet& net, const std::string& path);
std::string checkpoint_bytes(const Supernet& net);

// Overwrites the weights of `net`; names and shapes must match exactly.
void load_checkpoint(Supernet& net, const std::string& path);
void load_checkpoint_bytes(Supernet& net, const std::string& bytes);

}  // namespace cfsearch
