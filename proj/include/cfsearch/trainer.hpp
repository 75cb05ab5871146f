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

// Fair super-GAN pretraining on toy data, subnet fine-tuning and fitness
// evaluation by weight inheritance.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cfsearch/autodiff.hpp"
#include "cfsearch/fair_scheduler.hpp"
#include "cfsearch/network.hpp"
#include "cfsearch/prox.hpp"

namespace cfsearch {

enum class TaskKind {
  kTranslation,      // 2-D mixture samples rendered as 4x4 images, restyled
  kSuperResolution,  // 16-sample signals from their 4-sample decimation
};

enum class MetricKind {
  kFrechet,  // negated Frechet distance of fitted Gaussians
  kPsnr,
};

std::string_view task_name(TaskKind t);
TaskKind parse_task(std::string_view name);
std::string_view metric_name(MetricKind m);
MetricKind parse_metric(std::string_view name);
MetricKind default_metric(TaskKind t);

// Samples are stacked along the first axis.
struct ToyDataset {
  TaskKind task = TaskKind::kTranslation;
  Tensor train_x, train_y;
  Tensor val_x, val_y;

  std::size_t train_size() const { return train_x.empty() ? 0 : train_x.dim(0); }
  std::size_t val_size() const { return val_x.empty() ? 0 : val_x.dim(0); }
};

struct DatasetConfig {
  TaskKind task = TaskKind::kTranslation;
  std::size_t train_size = 64;
  std::size_t val_size = 64;
  std::uint64_t seed = 0;
};

ToyDataset make_dataset(const DatasetConfig& cfg);

// The spec fields a task fixes (channels, extents, rank, output scale).
void conform_spec_to_task(SupernetSpec& spec, TaskKind task);

// Rows [first, first + count) of a stacked tensor, wrapping around.
Tensor take_rows(const Tensor& stacked, std::size_t first, std::size_t count);

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  double lambda_recon = 10.0;
  double lambda_per = 100.0;
  double lambda_sp = 1e-3;
  LearningRate alpha{0.01, 1.0};  // generator and discriminator weights
  LearningRate eta{0.01, 1.0};    // scale factors
  std::size_t feature_dim = 8;    // perceptual projection width
  std::uint64_t seed = 0;

  void validate() const;
};

// Frozen random feature map tanh(P y) standing in for a perceptual network.
class PerceptualProjection {
 public:
  PerceptualProjection() = default;
  PerceptualProjection(std::size_t input_dim, std::size_t feature_dim, std::uint64_t seed);

  Var features(const Var& y) const;

 private:
  Var matrix_;
};

struct LossTerms {
  Var objective;  // gan + lambda_recon * recon + lambda_per * per (differentiable)
  double gan = 0.0;
  double recon = 0.0;
  double per = 0.0;
  double sp = 0.0;
  double total = 0.0;  // objective + lambda_sp * sp
};

// `sp` is the L1 norm of the scale factors in play; it is reported and
// weighted into `total` but left out of `objective` because the proximal step
// applies it.
LossTerms total_loss(const Var& output, const Var& target, const Var& d_scores,
                     double sp, const PerceptualProjection& proj,
                     const TrainConfig& cfg);

// Non-saturating discriminator loss on real and fake logits.
Var discriminator_loss(const Var& real_scores, const Var& fake_scores);

struct TrainRecord {
  std::size_t epoch = 0;
  std::size_t path = 0;
  double gan = 0.0, recon = 0.0, per = 0.0, sp = 0.0, total = 0.0;
  double d_loss = 0.0;
  double gamma_zero_fraction = 0.0;
};

void write_train_csv(std::ostream& out, const std::vector<TrainRecord>& records);

struct PretrainResult {
  Supernet net;
  FairnessLedger ledger;
  std::vector<TrainRecord> records;
};

// Fair pretraining. Per epoch and path cycle: M single-operator passes whose
// generator gradients accumulate into one SGD step, one proximal step on the
// path's scale factors from the mixed-path loss, and one update of the
// matched discriminator.
PretrainResult pretrain_supernet(const SupernetSpec& spec, const ToyDataset& data,
                                 const TrainConfig& cfg);

// Trains only the genome's subnet (and its matched discriminator) with the
// same losses and lambda_sp = 0. Works on `net` in place.
std::vector<TrainRecord> finetune(Supernet& net, const Genome& g, const ToyDataset& data,
                                  const TrainConfig& cfg, std::size_t epochs);

// Peak of the PSNR metric (signals live in [-1, 1]) and the value reported
// for an exact reconstruction.
inline constexpr double kPsnrPeak = 2.0;
inline constexpr double kPsnrCap = 100.0;

// Both metrics are higher-is-better.
double frechet_distance(const Tensor& a, const Tensor& b);
double psnr(const Tensor& output, const Tensor& target);
double fitness_metric(const Tensor& output, const Tensor& target, MetricKind metric);

double evaluate_selection(const Supernet& net, const SubnetSelection& sel,
                          const ToyDataset& data, MetricKind metric);
double evaluate_genome(const Supernet& net, const Genome& g, const ToyDataset& data,
                       MetricKind metric);

}  // namespace cfsearch
