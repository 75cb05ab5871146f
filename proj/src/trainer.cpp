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

#include "cfsearch/trainer.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include <Eigen/Dense>

#include "cfsearch/error.hpp"
#include "cfsearch/kernels.hpp"
#include "cfsearch/ops.hpp"
#include "cfsearch/rng.hpp"

namespace cfsearch {
namespace {

constexpr int kRenderPixels = 16;  // 4x4 images and 16-sample signals

double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

void sgd(const std::vector<Var>& params, double lr) {
  const auto& k = kernels::active();
  for (const Var& p : params) {
    if (!p.has_grad()) continue;
    Var v = p;
    k.axpy(-lr, p.grad().data(), v.mutable_value().data(), p.size());
  }
}

void require_finite(const LossTerms& t, std::size_t epoch, std::size_t path,
                    const char* phase) {
  if (std::isfinite(t.total) && std::isfinite(t.gan) && std::isfinite(t.recon) &&
      std::isfinite(t.per)) {
    return;
  }
  std::ostringstream msg;
  msg << "non-finite loss at epoch " << epoch << ", path " << path << " (" << phase
      << "): gan=" << t.gan << " recon=" << t.recon << " per=" << t.per
      << " sp=" << t.sp << " total=" << t.total;
  throw NumericalError(msg.str());
}

double zero_fraction(const ScaleFactorBank& bank) {
  const std::size_t n = bank.size();
  return n == 0 ? 0.0 : static_cast<double>(bank.zero_count()) / static_cast<double>(n);
}

struct Batch {
  Var x, y;
};

Batch batch_for(const ToyDataset& data, const TrainConfig& cfg, std::size_t epoch) {
  const std::size_t n = data.train_size();
  const std::size_t bs = std::min(cfg.batch_size, n);
  const std::size_t first = (epoch * bs) % n;
  return {Var::constant(take_rows(data.train_x, first, bs)),
          Var::constant(take_rows(data.train_y, first, bs))};
}

PerceptualProjection make_projection(const ToyDataset& data, const TrainConfig& cfg) {
  const std::size_t per_sample = data.train_y.size() / data.train_size();
  return PerceptualProjection(per_sample, cfg.feature_dim,
                              derive_seed(cfg.seed, "perceptual"));
}

// Discriminator step on a detached generator output.
double update_discriminator(Supernet& net, std::size_t d, const Var& real,
                            const Var& fake_output, double lr) {
  net.zero_grad();
  const Var fake = ops::detach(fake_output);
  Var dl = discriminator_loss(net.forward_discriminator(real, d),
                              net.forward_discriminator(fake, d));
  backward(dl);
  sgd(net.discriminator_parameters(d), lr);
  return dl.value().item();
}

}  // namespace

std::string_view task_name(TaskKind t) {
  return t == TaskKind::kTranslation ? "translation" : "super_resolution";
}

TaskKind parse_task(std::string_view name) {
  if (name == "translation") return TaskKind::kTranslation;
  if (name == "super_resolution" || name == "sr") return TaskKind::kSuperResolution;
  throw ConfigError("unknown task '" + std::string(name) +
                    "' (expected translation or super_resolution)");
}

std::string_view metric_name(MetricKind m) {
  return m == MetricKind::kFrechet ? "frechet" : "psnr";
}

MetricKind parse_metric(std::string_view name) {
  if (name == "frechet") return MetricKind::kFrechet;
  if (name == "psnr") return MetricKind::kPsnr;
  throw ConfigError("unknown metric '" + std::string(name) + "' (expected frechet or psnr)");
}

MetricKind default_metric(TaskKind t) {
  return t == TaskKind::kTranslation ? MetricKind::kFrechet : MetricKind::kPsnr;
}

void conform_spec_to_task(SupernetSpec& spec, TaskKind task) {
  spec.input_channels = 1;
  spec.output_channels = 1;
  if (task == TaskKind::kTranslation) {
    spec.spatial_rank = 2;
    spec.input_extent = {4, 4};
    spec.output_scale = 0;
  } else {
    spec.spatial_rank = 1;
    spec.input_extent = {1, 4};
    spec.output_scale = 2;
  }
}

ToyDataset make_dataset(const DatasetConfig& cfg) {
  if (cfg.train_size == 0 || cfg.val_size == 0) {
    throw ConfigError("dataset needs non-empty train and validation splits");
  }
  ToyDataset data;
  data.task = cfg.task;
  const std::size_t total = cfg.train_size + cfg.val_size;
  Rng rng(derive_seed(cfg.seed, "samples"));
  std::vector<std::vector<double>> xs, ys;

  if (cfg.task == TaskKind::kTranslation) {
    Rng basis(derive_seed(cfg.seed, "render"));
    auto render_basis = [&]() {
      std::vector<double> a(kRenderPixels * 3);
      for (auto& v : a) v = normal(basis);
      return a;
    };
    const auto in_basis = render_basis();
    const auto out_basis = render_basis();
    auto render = [](const std::vector<double>& b, double z0, double z1) {
      std::vector<double> img(kRenderPixels);
      for (int j = 0; j < kRenderPixels; ++j) {
        img[j] = std::tanh(b[3 * j] * z0 + b[3 * j + 1] * z1 + 0.5 * b[3 * j + 2]);
      }
      return img;
    };
    const double c = std::cos(std::numbers::pi / 4), s = std::sin(std::numbers::pi / 4);
    for (std::size_t i = 0; i < total; ++i) {
      const std::size_t comp = uniform_index(rng, 4);
      const double z0 = (comp % 2 == 0 ? -1.0 : 1.0) + 0.25 * normal(rng);
      const double z1 = (comp / 2 == 0 ? -1.0 : 1.0) + 0.25 * normal(rng);
      const double t0 = 0.8 * (c * z0 - s * z1) + 0.3;
      const double t1 = 0.8 * (s * z0 + c * z1) - 0.2;
      xs.push_back(render(in_basis, z0, z1));
      ys.push_back(render(out_basis, t0, t1));
    }
  } else {
    for (std::size_t i = 0; i < total; ++i) {
      const double a1 = uniform_real(rng, 0.2, 0.5), a2 = uniform_real(rng, 0.2, 0.5);
      const double f1 = uniform_real(rng, 0.25, 1.0), f2 = uniform_real(rng, 0.5, 1.5);
      const double p1 = uniform_real(rng, 0.0, 2 * std::numbers::pi);
      const double p2 = uniform_real(rng, 0.0, 2 * std::numbers::pi);
      std::vector<double> y(kRenderPixels), x;
      for (int k = 0; k < kRenderPixels; ++k) {
        const double u = 2 * std::numbers::pi * k / kRenderPixels;
        y[k] = a1 * std::sin(f1 * u + p1) + a2 * std::sin(f2 * u + p2);
        if (k % 4 == 0) x.push_back(y[k]);
      }
      xs.push_back(std::move(x));
      ys.push_back(std::move(y));
    }
  }

  auto stack = [](const std::vector<std::vector<double>>& rows, std::size_t first,
                  std::size_t count, Shape sample) {
    std::vector<double> flat;
    for (std::size_t i = first; i < first + count; ++i) {
      flat.insert(flat.end(), rows[i].begin(), rows[i].end());
    }
    sample.insert(sample.begin(), count);
    return Tensor(sample, std::move(flat));
  };
  const bool tr = cfg.task == TaskKind::kTranslation;
  const Shape xin = tr ? Shape{1, 4, 4} : Shape{1, 1, 4};
  const Shape yout = tr ? Shape{1, 4, 4} : Shape{1, 1, 16};
  data.train_x = stack(xs, 0, cfg.train_size, xin);
  data.train_y = stack(ys, 0, cfg.train_size, yout);
  data.val_x = stack(xs, cfg.train_size, cfg.val_size, xin);
  data.val_y = stack(ys, cfg.train_size, cfg.val_size, yout);
  return data;
}

Tensor take_rows(const Tensor& stacked, std::size_t first, std::size_t count) {
  if (stacked.rank() == 0 || stacked.dim(0) == 0) throw ShapeError("take_rows on empty tensor");
  const std::size_t n = stacked.dim(0);
  const std::size_t row = stacked.size() / n;
  Shape shape = stacked.shape();
  shape[0] = count;
  std::vector<double> out;
  out.reserve(count * row);
  for (std::size_t i = 0; i < count; ++i) {
    const double* src = stacked.data() + ((first + i) % n) * row;
    out.insert(out.end(), src, src + row);
  }
  return Tensor(shape, std::move(out));
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (lambda_recon < 0 || lambda_per < 0 || lambda_sp < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (!(alpha.initial > 0) || !(eta.initial > 0) || !(alpha.decay > 0) ||
      !(eta.decay > 0)) {
    throw ConfigError("learning-rate schedules must be positive");
  }
  if (feature_dim == 0) throw ConfigError("train.feature_dim must be >= 1");
}

PerceptualProjection::PerceptualProjection(std::size_t input_dim, std::size_t feature_dim,
                                           std::uint64_t seed) {
  Rng rng(seed);
  Tensor m({feature_dim, input_dim});
  const double s = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = s * normal(rng);
  matrix_ = Var::constant(std::move(m));
}

Var PerceptualProjection::features(const Var& y) const {
  const std::size_t n = y.shape().at(0);
  const Var flat = ops::reshape(y, {n, y.size() / n});
  return ops::tanh(ops::linear(flat, matrix_, Var()));
}

LossTerms total_loss(const Var& output, const Var& target, const Var& d_scores,
                     double sp, const PerceptualProjection& proj,
                     const TrainConfig& cfg) {
  if (output.shape() != target.shape()) {
    throw ShapeError("loss: output " + shape_string(output.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  using namespace ops;
  const Var gan = mean(softplus(scale(d_scores, -1.0)));
  const Var recon = mean_abs(sub(output, target));
  const Var per = mean_square(sub(proj.features(output), proj.features(target)));
  LossTerms t;
  t.objective = add(add(gan, scale(recon, cfg.lambda_recon)), scale(per, cfg.lambda_per));
  t.gan = gan.value().item();
  t.recon = recon.value().item();
  t.per = per.value().item();
  t.sp = sp;
  t.total = t.objective.value().item() + cfg.lambda_sp * sp;
  return t;
}

Var discriminator_loss(const Var& real_scores, const Var& fake_scores) {
  using namespace ops;
  return add(mean(softplus(scale(real_scores, -1.0))), mean(softplus(fake_scores)));
}

void write_train_csv(std::ostream& out, const std::vector<TrainRecord>& records) {
  out << "epoch,path,gan,recon,per,sp,total,d_loss,gamma_zero_fraction\n";
  char buf[512];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.epoch, r.path, r.gan, r.recon, r.per, r.sp, r.total, r.d_loss,
                  r.gamma_zero_fraction);
    out << buf;
  }
}

PretrainResult pretrain_supernet(const SupernetSpec& spec_in, const ToyDataset& data,
                                 const TrainConfig& cfg) {
  cfg.validate();
  PretrainResult res{Supernet(spec_in, derive_seed(cfg.seed, "weights")), {}, {}};
  Supernet& net = res.net;
  const SupernetSpec& spec = net.spec();
  net.gammas().eta = cfg.eta;
  net.gammas().lambda_sp = cfg.lambda_sp;
  res.ledger = FairnessLedger(spec);
  const PerceptualProjection proj = make_projection(data, cfg);

  for (std::size_t t = 0; t < cfg.epochs; ++t) {
    const Batch b = batch_for(data, cfg, t);
    const EpochPlan plan = plan_epoch(spec, derive_seed(cfg.seed, "epoch", t));
    const double lr = cfg.alpha.at(t);
    for (std::size_t cycle = 0; cycle < plan.path_order.size(); ++cycle) {
      const std::size_t p = plan.path_order[cycle];
      const std::size_t d = spec.paths[p].matched_discriminator_path;
      const auto& order = plan.operator_order[cycle];
      const std::size_t L = spec.paths[p].num_layers();
      const std::size_t M = spec.paths[p].num_operators();

      net.zero_grad();
      for (std::size_t m = 0; m < M; ++m) {
        std::vector<std::size_t> ops(L);
        for (std::size_t l = 0; l < L; ++l) ops[l] = order[l][m];
        const Var out = net.forward_generator(b.x, SubnetSelection::full_width(p, ops));
        const LossTerms terms = total_loss(out, b.y, net.forward_discriminator(out, d),
                                           net.gammas().l1(p), proj, cfg);
        require_finite(terms, t, p, "operator pass");
        backward(terms.objective);
      }
      sgd(net.generator_parameters(p), lr);
      res.ledger.record_generator_update(p, order);

      net.zero_grad();
      const Var mixed = net.forward_generator(b.x, SubnetSelection::mixed(p));
      const LossTerms terms = total_loss(mixed, b.y, net.forward_discriminator(mixed, d),
                                         net.gammas().l1(p), proj, cfg);
      require_finite(terms, t, p, "scale-factor pass");
      backward(terms.objective);
      net.gammas().step(p, t);

      const double dl = update_discriminator(net, d, b.y, mixed, lr);
      res.ledger.record_discriminator_update(d);

      res.records.push_back({t, p, terms.gan, terms.recon, terms.per, terms.sp, terms.total,
                             dl, zero_fraction(net.gammas())});
    }
  }
  net.zero_grad();
  return res;
}

std::vector<TrainRecord> finetune(Supernet& net, const Genome& g, const ToyDataset& data,
                                  const TrainConfig& cfg_in, std::size_t epochs) {
  TrainConfig cfg = cfg_in;
  cfg.lambda_sp = 0.0;
  cfg.validate();
  const SupernetSpec& spec = net.spec();
  const SubnetSelection sel = SubnetSelection::from_genome(spec, g);
  const std::size_t d = spec.paths[g.path].matched_discriminator_path;
  const PerceptualProjection proj = make_projection(data, cfg);
  const double saved_lambda = net.gammas().lambda_sp;
  net.gammas().lambda_sp = 0.0;

  std::vector<TrainRecord> records;
  for (std::size_t t = 0; t < epochs; ++t) {
    const Batch b = batch_for(data, cfg, t);
    const double lr = cfg.alpha.at(t);
    net.zero_grad();
    const Var out = net.forward_generator(b.x, sel);
    const LossTerms terms = total_loss(out, b.y, net.forward_discriminator(out, d),
                                       net.gammas().l1(g.path), proj, cfg);
    require_finite(terms, t, g.path, "fine-tune");
    backward(terms.objective);
    sgd(net.generator_parameters(g.path), lr);
    net.gammas().step(g.path, t);
    const double dl = update_discriminator(net, d, b.y, out, lr);
    records.push_back({t, g.path, terms.gan, terms.recon, terms.per, terms.sp, terms.total,
                       dl, zero_fraction(net.gammas())});
  }
  net.gammas().lambda_sp = saved_lambda;
  net.zero_grad();
  return records;
}

double frechet_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() == 0 || a.dim(0) < 2) {
    throw ShapeError("frechet_distance needs two equally shaped sets of >= 2 samples");
  }
  const auto n = static_cast<Eigen::Index>(a.dim(0));
  const auto dim = static_cast<Eigen::Index>(a.size() / a.dim(0));
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const Mat> A(a.data(), n, dim), B(b.data(), n, dim);
  const Eigen::RowVectorXd mu_a = A.colwise().mean(), mu_b = B.colwise().mean();
  const Eigen::MatrixXd ca = A.rowwise() - mu_a, cb = B.rowwise() - mu_b;
  const Eigen::MatrixXd sa = ca.transpose() * ca / static_cast<double>(n - 1);
  const Eigen::MatrixXd sb = cb.transpose() * cb / static_cast<double>(n - 1);

  // Tr sqrt(sa sb) through the symmetric form sqrt(sa)^T sb sqrt(sa).
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(sa);
  const Eigen::VectorXd la = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd root_a = ea.eigenvectors() * la.asDiagonal() * ea.eigenvectors().transpose();
  const Eigen::MatrixXd inner = root_a * sb * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(0.5 * (inner + inner.transpose()),
                                                   Eigen::EigenvaluesOnly);
  const double tr_cross = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_cross;
  return std::max(0.0, d);
}

double psnr(const Tensor& output, const Tensor& target) {
  if (output.shape() != target.shape()) throw ShapeError("psnr: shape mismatch");
  double se = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) {
    const double e = output[i] - target[i];
    se += e * e;
  }
  const double mse = se / static_cast<double>(output.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(kPsnrPeak * kPsnrPeak / mse));
}

double fitness_metric(const Tensor& output, const Tensor& target, MetricKind metric) {
  for (double v : output.values()) {
    if (!std::isfinite(v)) throw NumericalError("non-finite generator output in evaluation");
  }
  return metric == MetricKind::kFrechet ? -frechet_distance(output, target)
                                        : psnr(output, target);
}

double evaluate_selection(const Supernet& net, const SubnetSelection& sel,
                          const ToyDataset& data, MetricKind metric) {
  NoGradGuard guard;
  const Var out = net.forward_generator(Var::constant(data.val_x), sel);
  return fitness_metric(out.value(), data.val_y, metric);
}

double evaluate_genome(const Supernet& net, const Genome& g, const ToyDataset& data,
                       MetricKind metric) {
  return evaluate_selection(net, SubnetSelection::from_genome(net.spec(), g), data, metric);
}

}  // namespace cfsearch
