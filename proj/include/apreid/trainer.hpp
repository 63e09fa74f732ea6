// Copyright (C) 2026 the apreid authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance
// with the License. You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express
// or implied. See the License for the specific language governing permissions and limitations under the License.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "apreid/dataset.hpp"
#include "apreid/model.hpp"

namespace apreid {

// Mini-batch SGD with a two-level step learning-rate schedule (the reference
// recipe: 55 epochs at 1e-3, the last 5 at 1e-4, batch 64).
struct TrainConfig {
  std::size_t epochs = 55;
  std::size_t batch_size = 64;
  double lr_initial = 1e-3;
  double lr_final = 1e-4;
  std::size_t lr_switch_epoch = 50;
  double momentum = 0.9;
  double weight_decay = 0.0;  // L2 added to the gradient
  double lambda = 8.0;
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  void validate() const;
};

struct TrainLogRow {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_id = 0.0;
  double loss_att_mean = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
};

// One row per epoch: `epoch,lr,loss_total,loss_id,loss_att_mean,seconds`.
// Wall-clock is suppressed (written as 0) unless include_timing is set, so
// that output files are byte-identical across repeated runs.
std::string train_log_csv(const TrainLog& log, bool include_timing);

// lr_initial before the switch epoch, lr_final from it onward.
double lr_at_epoch(const TrainConfig& config, std::size_t epoch);

// velocity' = momentum*velocity - lr*grad; params' = params + velocity'.
void sgd_step(ModelParams& params, const Gradients& grads, double lr, double momentum,
              std::vector<double>& velocity);

struct TrainResult {
  ModelParams params;
  TrainLog log;
  // Sorted distinct train identities; position = ID-head class index.
  std::vector<int> identity_classes;
};

// Trains on the dataset's train split. The model config's num_identities must
// equal the number of distinct train identities (0 = derive automatically).
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const ReidDataset& dataset);

struct SweepRow {
  double lambda = 0.0;
  double rank1 = 0.0;
  double map = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;     // in grid order
  std::size_t best_index = 0;     // argmax rank-1, ties toward smaller lambda
};

// Retrains once per grid point with identical seeds and scores each model on
// the validation query/gallery splits.
SweepResult sweep_lambda(const ModelConfig& model_config, const TrainConfig& train_config,
                         const ReidDataset& dataset, const std::vector<double>& lambda_grid);

}  // namespace apreid
