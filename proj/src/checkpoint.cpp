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

#include "cfsearch/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cfsearch/error.hpp"

namespace cfsearch {
namespace {

constexpr char kMagic[8] = {'C', 'F', 'S', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little ||
                std::endian::native == std::endian::big);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char b[sizeof(T)];
    std::memcpy(b, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ValidationError("checkpoint truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const Supernet& net) {
  std::string out(kMagic, sizeof(kMagic));
  const auto& params = net.named_parameters();
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.shape().size()));
    for (std::size_t d : p.value.shape()) put<std::uint64_t>(out, d);
  }
  for (const auto& p : params) {
    for (double v : p.value.value().values()) put<double>(out, v);
  }
  return out;
}

void save_checkpoint(const Supernet& net, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write checkpoint " + path);
  const std::string bytes = checkpoint_bytes(net);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ConfigError("failed writing checkpoint " + path);
}

void load_checkpoint_bytes(Supernet& net, const std::string& bytes) {
  Reader r(bytes);
  if (r.get_string(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw ValidationError("not a checkpoint (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto& params = net.named_parameters();
  const auto count = r.get<std::uint32_t>();
  if (count != params.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(count) +
                          " tensors, network has " + std::to_string(params.size()));
  }
  for (const auto& p : params) {
    const std::string name = r.get_string(r.get<std::uint32_t>());
    Shape shape(r.get<std::uint32_t>());
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    if (name != p.name || shape != p.value.shape()) {
      throw ValidationError("checkpoint tensor " + name + " " + shape_string(shape) +
                            " does not match " + p.name + " " +
                            shape_string(p.value.shape()));
    }
  }
  for (const auto& p : params) {
    Var v = p.value;
    Tensor& t = v.mutable_value();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.get<double>();
  }
  if (!r.done()) throw ValidationError("trailing bytes after checkpoint values");
}

void load_checkpoint(Supernet& net, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  load_checkpoint_bytes(net, ss.str());
}

}  // namespace cfsearch
