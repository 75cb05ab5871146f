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

#include "cfsearch/ops.hpp"

#include <algorithm>
#include <cmath>

#include "cfsearch/error.hpp"
#include "cfsearch/kernels.hpp"

namespace cfsearch::ops {
namespace {

const kernels::KernelTable& K() { return kernels::active(); }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_string(x.shape()));
  }
}

// Elementwise unary op with derivative expressed through input and output.
template <typename F, typename D>
Var unary(const Var& x, F f, D df) {
  Tensor out(x.shape());
  const Tensor& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(std::move(out), {x}, [df](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * df(p.value[i], self.value[i]);
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  K().add(a.value().data(), b.value().data(), out.data(), out.size());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  K().axpy(-1.0, b.value().data(), out.data(), out.size());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    Node& pb = *self.parents[1];
    if (pb.requires_grad) {
      K().axpy(-1.0, self.grad.data(), pb.grad_buffer().data(), self.grad.size());
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  K().mul(a.value().data(), b.value().data(), out.data(), out.size());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    Tensor tmp(self.grad.shape());
    if (pa.requires_grad) {
      K().mul(self.grad.data(), pb.value.data(), tmp.data(), tmp.size());
      accumulate(pa, tmp);
    }
    if (pb.requires_grad) {
      K().mul(self.grad.data(), pa.value.data(), tmp.data(), tmp.size());
      accumulate(pb, tmp);
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  K().scale(s, out.data(), out.size());
  return make_result(std::move(out), {a}, [s](Node& self) {
    Node& p = *self.parents[0];
    if (p.requires_grad) K().axpy(s, self.grad.data(), p.grad_buffer().data(), self.grad.size());
  });
}

Var average(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("average of zero tensors");
  if (xs.size() == 1) return xs.front();
  for (const auto& x : xs) require_same_shape(xs.front(), x, "average");
  const double w = 1.0 / static_cast<double>(xs.size());
  Tensor out(xs.front().shape(), 0.0);
  for (const auto& x : xs) K().axpy(w, x.value().data(), out.data(), out.size());
  return make_result(std::move(out), xs, [w](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) {
        K().axpy(w, self.grad.data(), p->grad_buffer().data(), self.grad.size());
      }
    }
  });
}

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double in, double) { return in > 0.0 ? 1.0 : slope; });
}

Var tanh(const Var& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double out) { return 1.0 - out * out; });
}

Var softplus(const Var& x) {
  return unary(
      x,
      [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double in, double) { return 1.0 / (1.0 + std::exp(-in)); });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int groups) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  const std::size_t N = x.shape()[0], Ci = x.shape()[1], H = x.shape()[2],
                    W = x.shape()[3];
  const std::size_t Co = w.shape()[0], Cig = w.shape()[1], KH = w.shape()[2],
                    KW = w.shape()[3];
  const std::size_t G = static_cast<std::size_t>(groups);
  if (G == 0 || Ci % G != 0 || Co % G != 0 || Cig != Ci / G) {
    throw ShapeError("conv2d: input " + shape_string(x.shape()) + " vs weight " +
                     shape_string(w.shape()) + " with " + std::to_string(groups) +
                     " groups");
  }
  if (b && (b.shape().size() != 1 || b.shape()[0] != Co)) {
    throw ShapeError("conv2d: bias shape " + shape_string(b.shape()));
  }
  const std::ptrdiff_t PH = static_cast<std::ptrdiff_t>(KH / 2);
  const std::ptrdiff_t PW = static_cast<std::ptrdiff_t>(KW / 2);
  const std::size_t Cog = Co / G;

  // Visits every (output row segment, input row segment, weight) triple.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t co = 0; co < Co; ++co) {
        const std::size_t group = co / Cog;
        for (std::size_t cig = 0; cig < Cig; ++cig) {
          const std::size_t ci = group * Cig + cig;
          for (std::size_t dy = 0; dy < KH; ++dy) {
            for (std::size_t dx = 0; dx < KW; ++dx) {
              const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - PW;
              const std::size_t x_lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -ox));
              const std::size_t x_hi = static_cast<std::size_t>(
                  std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(W),
                                           static_cast<std::ptrdiff_t>(W) - ox));
              if (x_hi <= x_lo) continue;
              const std::size_t w_index = ((co * Cig + cig) * KH + dy) * KW + dx;
              for (std::size_t y = 0; y < H; ++y) {
                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - PH;
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
                const std::size_t out_off = ((n * Co + co) * H + y) * W + x_lo;
                const std::size_t in_off =
                    ((n * Ci + ci) * H + static_cast<std::size_t>(sy)) * W +
                    static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x_lo) + ox);
                fn(out_off, in_off, w_index, x_hi - x_lo);
              }
            }
          }
        }
      }
    }
  };

  Tensor out({N, Co, H, W}, 0.0);
  if (b) {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t co = 0; co < Co; ++co) {
        double* row = out.data() + (n * Co + co) * H * W;
        std::fill(row, row + H * W, b.value()[co]);
      }
    }
  }
  {
    const double* xv = x.value().data();
    const double* wv = w.value().data();
    double* ov = out.data();
    for_each_tap([&](std::size_t o, std::size_t i, std::size_t wi, std::size_t len) {
      K().axpy(wv[wi], xv + i, ov + o, len);
    });
  }

  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  const bool has_bias = static_cast<bool>(b);
  return make_result(std::move(out), parents, [=](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    const double* go = self.grad.data();
    if (px.requires_grad) {
      double* gx = px.grad_buffer().data();
      const double* wv = pw.value.data();
      for_each_tap([&](std::size_t o, std::size_t i, std::size_t wi, std::size_t len) {
        K().axpy(wv[wi], go + o, gx + i, len);
      });
    }
    if (pw.requires_grad) {
      double* gw = pw.grad_buffer().data();
      const double* xv = px.value.data();
      for_each_tap([&](std::size_t o, std::size_t i, std::size_t wi, std::size_t len) {
        gw[wi] += K().dot(go + o, xv + i, len);
      });
    }
    if (has_bias) {
      Node& pb = *self.parents[2];
      if (pb.requires_grad) {
        double* gb = pb.grad_buffer().data();
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t co = 0; co < Co; ++co) {
            gb[co] += K().sum(go + (n * Co + co) * H * W, H * W);
          }
        }
      }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  const std::size_t N = x.shape()[0], D = x.shape()[1], O = w.shape()[0];
  if (w.shape()[1] != D) {
    throw ShapeError("linear: input " + shape_string(x.shape()) + " vs weight " +
                     shape_string(w.shape()));
  }
  if (b && (b.shape().size() != 1 || b.shape()[0] != O)) {
    throw ShapeError("linear: bias shape " + shape_string(b.shape()));
  }
  Tensor out({N, O});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      out[n * O + o] = K().dot(w.value().data() + o * D, x.value().data() + n * D, D) +
                       (b ? b.value()[o] : 0.0);
    }
  }
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  const bool has_bias = static_cast<bool>(b);
  return make_result(std::move(out), parents, [=](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t o = 0; o < O; ++o) {
        const double g = self.grad[n * O + o];
        if (px.requires_grad) {
          K().axpy(g, pw.value.data() + o * D, px.grad_buffer().data() + n * D, D);
        }
        if (pw.requires_grad) {
          K().axpy(g, px.value.data() + n * D, pw.grad_buffer().data() + o * D, D);
        }
      }
    }
    if (has_bias) {
      Node& pb = *self.parents[2];
      if (pb.requires_grad) {
        Tensor& gb = pb.grad_buffer();
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t o = 0; o < O; ++o) gb[o] += self.grad[n * O + o];
        }
      }
    }
  });
}

Var channel_mul(const Var& x, const Var& g) {
  require_rank(x, 4, "channel_mul");
  const std::size_t N = x.shape()[0], C = x.shape()[1],
                    S = x.shape()[2] * x.shape()[3];
  if (g.shape() != Shape{C}) {
    throw ShapeError("channel_mul: scale " + shape_string(g.shape()) + " for input " +
                     shape_string(x.shape()));
  }
  Tensor out = x.value();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) K().scale(g.value()[c], out.data() + (n * C + c) * S, S);
  }
  return make_result(std::move(out), {x, g}, [=](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t off = (n * C + c) * S;
        if (px.requires_grad) {
          K().axpy(pg.value[c], self.grad.data() + off, px.grad_buffer().data() + off, S);
        }
        if (pg.requires_grad) {
          pg.grad_buffer()[c] += K().dot(self.grad.data() + off, px.value.data() + off, S);
        }
      }
    }
  });
}

Var add_channel(const Var& x, const Var& v) {
  require_rank(x, 4, "add_channel");
  const std::size_t N = x.shape()[0], C = x.shape()[1],
                    S = x.shape()[2] * x.shape()[3];
  if (v.shape() != Shape{N, C}) {
    throw ShapeError("add_channel: " + shape_string(v.shape()) + " for input " +
                     shape_string(x.shape()));
  }
  Tensor out = x.value();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    double* row = out.data() + nc * S;
    for (std::size_t s = 0; s < S; ++s) row[s] += v.value()[nc];
  }
  return make_result(std::move(out), {x, v}, [=](Node& self) {
    accumulate(*self.parents[0], self.grad);
    Node& pv = *self.parents[1];
    if (pv.requires_grad) {
      Tensor& gv = pv.grad_buffer();
      for (std::size_t nc = 0; nc < N * C; ++nc) gv[nc] += K().sum(self.grad.data() + nc * S, S);
    }
  });
}

Var spatial_mean(const Var& x) {
  require_rank(x, 4, "spatial_mean");
  const std::size_t N = x.shape()[0], C = x.shape()[1],
                    S = x.shape()[2] * x.shape()[3];
  const double inv = 1.0 / static_cast<double>(S);
  Tensor out({N, C});
  for (std::size_t nc = 0; nc < N * C; ++nc) out[nc] = K().sum(x.value().data() + nc * S, S) * inv;
  return make_result(std::move(out), {x}, [=](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    for (std::size_t nc = 0; nc < N * C; ++nc) {
      const double g = self.grad[nc] * inv;
      for (std::size_t s = 0; s < S; ++s) gx[nc * S + s] += g;
    }
  });
}

Var upsample2(const Var& x, int spatial_rank) {
  require_rank(x, 4, "upsample2");
  const std::size_t NC = x.shape()[0] * x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t fy = spatial_rank == 2 ? 2 : 1;
  const std::size_t OH = H * fy, OW = W * 2;
  Tensor out({x.shape()[0], x.shape()[1], OH, OW});
  const double* in = x.value().data();
  for (std::size_t nc = 0; nc < NC; ++nc) {
    for (std::size_t y = 0; y < OH; ++y) {
      for (std::size_t xo = 0; xo < OW; ++xo) {
        out[(nc * OH + y) * OW + xo] = in[(nc * H + y / fy) * W + xo / 2];
      }
    }
  }
  return make_result(std::move(out), {x}, [=](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    for (std::size_t nc = 0; nc < NC; ++nc) {
      for (std::size_t y = 0; y < OH; ++y) {
        for (std::size_t xo = 0; xo < OW; ++xo) {
          gx[(nc * H + y / fy) * W + xo / 2] += self.grad[(nc * OH + y) * OW + xo];
        }
      }
    }
  });
}

Var downsample2(const Var& x, int spatial_rank) {
  require_rank(x, 4, "downsample2");
  const std::size_t NC = x.shape()[0] * x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t fy = spatial_rank == 2 ? 2 : 1;
  if (W % 2 != 0 || H % fy != 0) {
    throw ShapeError("downsample2: odd extent " + shape_string(x.shape()));
  }
  const std::size_t OH = H / fy, OW = W / 2;
  const double inv = 1.0 / static_cast<double>(fy * 2);
  Tensor out({x.shape()[0], x.shape()[1], OH, OW}, 0.0);
  const double* in = x.value().data();
  for (std::size_t nc = 0; nc < NC; ++nc) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t xi = 0; xi < W; ++xi) {
        out[(nc * OH + y / fy) * OW + xi / 2] += in[(nc * H + y) * W + xi] * inv;
      }
    }
  }
  return make_result(std::move(out), {x}, [=](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    for (std::size_t nc = 0; nc < NC; ++nc) {
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t xi = 0; xi < W; ++xi) {
          gx[(nc * H + y) * W + xi] += self.grad[(nc * OH + y / fy) * OW + xi / 2] * inv;
        }
      }
    }
  });
}

Var resample(const Var& x, int from_log2, int to_log2, int spatial_rank) {
  Var y = x;
  for (int s = from_log2; s < to_log2; ++s) y = upsample2(y, spatial_rank);
  for (int s = from_log2; s > to_log2; --s) y = downsample2(y, spatial_rank);
  return y;
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    K().add(gx.data(), self.grad.data(), gx.data(), gx.size());
  });
}

Var detach(const Var& x) { return Var::constant(x.value()); }

Var sum(const Var& x) {
  const double s = K().sum(x.value().data(), x.size());
  return make_result(Tensor::scalar(s), {x}, [](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var mean(const Var& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Var mean_abs(const Var& x) {
  const Tensor& v = x.value();
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += std::abs(v[i]);
  const double inv = 1.0 / static_cast<double>(v.size());
  return make_result(Tensor::scalar(s * inv), {x}, [inv](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    const double g = self.grad[0] * inv;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double xi = px.value[i];
      gx[i] += xi > 0.0 ? g : (xi < 0.0 ? -g : 0.0);
    }
  });
}

Var mean_square(const Var& x) {
  const Tensor& v = x.value();
  const double inv = 1.0 / static_cast<double>(v.size());
  const double s = K().dot(v.data(), v.data(), v.size());
  return make_result(Tensor::scalar(s * inv), {x}, [inv](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    K().axpy(2.0 * inv * self.grad[0], px.value.data(), px.grad_buffer().data(),
             px.value.size());
  });
}

}  // namespace cfsearch::ops
