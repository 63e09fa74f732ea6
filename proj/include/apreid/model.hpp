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
#include <span>
#include <string>
#include <vector>

namespace apreid {

// The attribute-person recognition head: a pluggable feature transform
// (optional tanh MLP over precomputed features) feeding one identity softmax
// head and M attribute softmax heads. The joint objective is
//
//     L = lambda * L_ID + (1/M) * sum_i L_att_i
//
// with every L a softmax cross entropy. lambda = 0 is the attributes-only
// baseline; an empty attribute_class_counts is the identity-only baseline.
// All arithmetic is double precision; checkpoints store float32.

struct ModelConfig {
  std::size_t input_dim = 0;                    // D
  std::vector<std::size_t> hidden_dims;         // tanh layers; empty = identity transform
  std::size_t num_identities = 0;               // K >= 2
  std::vector<std::size_t> attribute_class_counts;  // m_1..m_M, each >= 2; may be empty
  double dropout_rate = 0.0;                    // [0, 1), shared over all heads
  double lambda = 1.0;                          // >= 0, finite

  std::size_t num_attributes() const { return attribute_class_counts.size(); }
  // Width of the retrieval embedding (last hidden width, or D when no hidden).
  std::size_t embedding_dim() const {
    return hidden_dims.empty() ? input_dim : hidden_dims.back();
  }
  void validate() const;
};

// One dense layer's slice of the flat parameter vector.
struct ParamBlock {
  std::size_t out = 0, in = 0;
  std::size_t w = 0;  // offset of the out*in row-major weight matrix
  std::size_t b = 0;  // offset of the out-dim bias
};

// Declaration order (also the checkpoint order): hidden layers, then the
// identity head, then the attribute heads.
struct ParamLayout {
  std::vector<ParamBlock> hidden;
  ParamBlock id_head;
  std::vector<ParamBlock> att_heads;
  std::size_t total = 0;

  static ParamLayout build(const ModelConfig& config);
};

struct ModelParams {
  ModelConfig config;
  ParamLayout layout;
  std::vector<double> values;
};

struct Gradients {
  std::vector<double> values;  // same layout as the owning ModelParams
};

struct LossBreakdown {
  double l_id = 0.0;
  std::vector<double> l_att;  // M per-attribute losses
  double lambda = 0.0;
  double total = 0.0;         // lambda*l_id + mean(l_att), exactly as computed

  double att_mean() const;
};

// Logits for every head: index 0 is the identity head, 1..M the attributes.
struct ForwardResult {
  std::vector<double> embedding;            // pre-dropout final feature
  std::vector<double> id_logits;            // K
  std::vector<std::vector<double>> att_logits;  // M, each m_i
};

// Weights uniform on [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Numerically stabilized: exponentials are taken after subtracting max(z).
std::vector<double> softmax(const std::vector<double>& logits);

// -log(max(p[target], 1e-12)); target must index into p.
double cross_entropy(const std::vector<double>& p, std::size_t target);

// Inverted dropout in train mode (mask from dropout_seed, scaled 1/(1-rate));
// eval mode applies no dropout and ignores the seed.
ForwardResult forward(const ModelParams& params, std::span<const float> feature,
                      bool train_mode, std::uint64_t dropout_seed);

LossBreakdown joint_loss(const ModelParams& params, std::span<const float> feature,
                         std::size_t id_target, const std::vector<int>& att_targets, double lambda,
                         bool train_mode, std::uint64_t dropout_seed);

// Reverse-mode gradient of LossBreakdown::total with respect to every
// parameter, using the identical dropout mask as the paired forward.
std::pair<LossBreakdown, Gradients> backward(const ModelParams& params,
                                             std::span<const float> feature,
                                             std::size_t id_target,
                                             const std::vector<int>& att_targets, double lambda,
                                             bool train_mode, std::uint64_t dropout_seed);

struct BatchItem {
  std::span<const float> feature;
  std::size_t id_target = 0;
  std::vector<int> att_targets;
  std::uint64_t dropout_seed = 0;
};

// Arithmetic mean of per-sample losses and gradients. Work may be spread over
// `threads` workers; chunk sums are reduced in a fixed order so the result is
// independent of the thread count.
std::pair<LossBreakdown, Gradients> batch_loss_and_grad(const ModelParams& params,
                                                        const std::vector<BatchItem>& batch,
                                                        double lambda, bool train_mode,
                                                        std::size_t threads);

// Final pre-head activation in eval mode; the identity map when no hidden layers.
std::vector<double> extract_embedding(const ModelParams& params,
                                      std::span<const float> feature);

struct Prediction {
  std::size_t id_class = 0;
  std::vector<std::size_t> att_classes;
  std::vector<double> id_probs;
  std::vector<std::vector<double>> att_probs;
};

// Eval-mode argmax per head; ties break toward the lowest index.
Prediction predict(const ModelParams& params, std::span<const float> feature);

// APRM checkpoint: magic, config block, then parameters as little-endian f32.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace apreid
