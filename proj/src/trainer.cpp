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

#include "apreid/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <set>
#include <stdexcept>

#include "apreid/evaluation.hpp"
#include "apreid/rng.hpp"

namespace apreid {

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  if (!(lr_final > 0.0 && lr_final <= lr_initial))
    throw std::invalid_argument("train: need 0 < lr_final <= lr_initial");
  if (lr_switch_epoch == 0 || lr_switch_epoch > epochs)
    throw std::invalid_argument("train: need 0 < lr_switch_epoch <= epochs");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("train: momentum outside [0,1)");
  if (weight_decay < 0.0) throw std::invalid_argument("train: negative weight decay");
}

double lr_at_epoch(const TrainConfig& config, std::size_t epoch) {
  return epoch < config.lr_switch_epoch ? config.lr_initial : config.lr_final;
}

void sgd_step(ModelParams& params, const Gradients& grads, double lr, double momentum,
              std::vector<double>& velocity) {
  if (velocity.size() != params.values.size())
    throw std::invalid_argument("sgd_step: velocity size mismatch");
  if (grads.values.size() != params.values.size())
    throw std::invalid_argument("sgd_step: gradient size mismatch");
  for (std::size_t k = 0; k < params.values.size(); ++k) {
    velocity[k] = momentum * velocity[k] - lr * grads.values[k];
    params.values[k] += velocity[k];
  }
}

std::string train_log_csv(const TrainLog& log, bool include_timing) {
  std::string out = "epoch,lr,loss_total,loss_id,loss_att_mean,seconds\n";
  char buf[256];
  for (const auto& row : log.rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g,%.12g,%.3f\n", row.epoch, row.lr,
                  row.loss_total, row.loss_id, row.loss_att_mean,
                  include_timing ? row.seconds : 0.0);
    out += buf;
  }
  return out;
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const ReidDataset& dataset) {
  train_config.validate();

  std::vector<std::size_t> train_rows;
  std::set<int> identity_set;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    if (s.split != Split::Train) continue;
    if (s.feature_row < 0) throw std::runtime_error("train: sample without attached features");
    train_rows.push_back(i);
    identity_set.insert(s.identity);
  }
  if (train_rows.empty()) throw std::runtime_error("train: dataset has no train split");
  if (train_config.batch_size > train_rows.size())
    throw std::runtime_error("train: batch size " + std::to_string(train_config.batch_size) +
                             " exceeds training set size " + std::to_string(train_rows.size()));

  std::vector<int> identity_classes(identity_set.begin(), identity_set.end());

  ModelConfig cfg = model_config;
  if (cfg.input_dim == 0) cfg.input_dim = dataset.features.dim;
  if (cfg.num_identities == 0) cfg.num_identities = identity_classes.size();
  if (cfg.num_identities != identity_classes.size())
    throw std::runtime_error("train: config says " + std::to_string(cfg.num_identities) +
                             " identities, train split has " +
                             std::to_string(identity_classes.size()));
  if (cfg.input_dim != dataset.features.dim)
    throw std::runtime_error("train: feature dim mismatch");
  cfg.lambda = train_config.lambda;
  cfg.validate();

  // Per-sample targets, resolved once. The ID-head class of an identity is
  // its position in the sorted distinct-identity list.
  const std::size_t num_attrs = cfg.num_attributes();
  struct Target {
    std::size_t id_class;
    std::vector<int> att;
  };
  std::vector<Target> targets(train_rows.size());
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    const auto& s = dataset.samples[train_rows[i]];
    auto it = std::lower_bound(identity_classes.begin(), identity_classes.end(), s.identity);
    targets[i].id_class = static_cast<std::size_t>(it - identity_classes.begin());
    if (num_attrs > 0) {
      const auto& labels = instance_labels(s, dataset.annotations);
      if (labels.size() < num_attrs)
        throw std::runtime_error("train: identity " + std::to_string(s.identity) +
                                 " has too few attribute labels");
      targets[i].att.assign(labels.begin(), labels.begin() + static_cast<long>(num_attrs));
    }
  }

  ModelParams params = init_params(cfg, derive_seed(train_config.seed, "train.init"));
  std::vector<double> velocity(params.values.size(), 0.0);
  TrainLog log;

  std::vector<std::size_t> order(train_rows.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(train_config, epoch);

    Rng shuffle_rng(derive_seed(train_config.seed, "train.shuffle", epoch));
    shuffle_rng.shuffle(order);

    double sum_total = 0.0, sum_id = 0.0, sum_att = 0.0;
    std::size_t seen = 0;

    for (std::size_t start = 0; start < order.size(); start += train_config.batch_size) {
      std::size_t end = std::min(order.size(), start + train_config.batch_size);
      std::vector<BatchItem> batch;
      batch.reserve(end - start);
      for (std::size_t pos = start; pos < end; ++pos) {
        std::size_t idx = order[pos];
        const auto& s = dataset.samples[train_rows[idx]];
        BatchItem item;
        item.feature = dataset.features.row_span(static_cast<std::size_t>(s.feature_row));
        item.id_target = targets[idx].id_class;
        item.att_targets = targets[idx].att;
        item.dropout_seed = derive_seed(train_config.seed, "train.dropout", epoch, idx);
        batch.push_back(std::move(item));
      }
      auto [loss, grads] = batch_loss_and_grad(params, batch, train_config.lambda, true,
                                               train_config.threads);
      if (train_config.weight_decay > 0.0)
        for (std::size_t k = 0; k < grads.values.size(); ++k)
          grads.values[k] += train_config.weight_decay * params.values[k];
      sgd_step(params, grads, lr, train_config.momentum, velocity);

      const auto bsz = static_cast<double>(batch.size());
      sum_total += loss.total * bsz;
      sum_id += loss.l_id * bsz;
      sum_att += loss.att_mean() * bsz;
      seen += batch.size();
    }

    TrainLogRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.loss_total = sum_total / static_cast<double>(seen);
    row.loss_id = sum_id / static_cast<double>(seen);
    row.loss_att_mean = sum_att / static_cast<double>(seen);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.rows.push_back(row);
  }

  return {std::move(params), std::move(log), std::move(identity_classes)};
}

namespace {

// Embeds every sample of the two splits through the trained transform; other
// rows are left zero and never touched by the evaluator.
EmbeddingMatrix embed_splits(const ModelParams& params, const ReidDataset& dataset, Split a,
                             Split b) {
  EmbeddingMatrix out;
  out.rows = dataset.features.rows;
  out.dim = params.config.embedding_dim();
  out.data.assign(out.rows * out.dim, 0.0f);
  for (const auto& s : dataset.samples) {
    if (s.split != a && s.split != b) continue;
    auto row = static_cast<std::size_t>(s.feature_row);
    auto emb = extract_embedding(params, dataset.features.row_span(row));
    for (std::size_t k = 0; k < out.dim; ++k)
      out.data[row * out.dim + k] = static_cast<float>(emb[k]);
  }
  return out;
}

}  // namespace

SweepResult sweep_lambda(const ModelConfig& model_config, const TrainConfig& train_config,
                         const ReidDataset& dataset, const std::vector<double>& lambda_grid) {
  if (lambda_grid.empty()) throw std::invalid_argument("sweep: empty lambda grid");

  SweepResult result;
  EvalOptions options;
  options.threads = train_config.threads;
  for (double lambda : lambda_grid) {
    TrainConfig tc = train_config;
    tc.lambda = lambda;
    auto trained = train(model_config, tc, dataset);
    auto embedded = embed_splits(trained.params, dataset, Split::ValQuery, Split::ValGallery);
    auto report =
        evaluate_reid(embedded, dataset.samples, Split::ValQuery, Split::ValGallery, options);
    result.rows.push_back({lambda, report.rank_k(1), report.map});
  }
  result.best_index = 0;
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    const auto& cur = result.rows[i];
    const auto& best = result.rows[result.best_index];
    if (cur.rank1 > best.rank1 || (cur.rank1 == best.rank1 && cur.lambda < best.lambda))
      result.best_index = i;
  }
  return result;
}

}  // namespace apreid
