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

#include "apreid/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "apreid/binio.hpp"
#include "apreid/rng.hpp"
#include "apreid/threading.hpp"

namespace apreid {

namespace {

constexpr double kLogEps = 1e-12;

void matvec(const double* w, std::size_t out, std::size_t in, const double* x, const double* b,
            double* y) {
  for (std::size_t r = 0; r < out; ++r) {
    double acc = b[r];
    const double* wr = w + r * in;
    for (std::size_t k = 0; k < in; ++k) acc += wr[k] * x[k];
    y[r] = acc;
  }
}

// y += W^T g
void matvec_t_acc(const double* w, std::size_t out, std::size_t in, const double* g, double* y) {
  for (std::size_t r = 0; r < out; ++r) {
    const double* wr = w + r * in;
    double gr = g[r];
    for (std::size_t k = 0; k < in; ++k) y[k] += wr[k] * gr;
  }
}

std::vector<double> dropout_mask(std::size_t n, double rate, std::uint64_t seed) {
  std::vector<double> mask(n, 1.0);
  if (rate <= 0.0) return mask;
  const double keep = 1.0 - rate;
  Rng rng(seed);
  for (std::size_t k = 0; k < n; ++k) mask[k] = rng.uniform01() < keep ? 1.0 / keep : 0.0;
  return mask;
}

struct Activations {
  // hidden[l] = tanh output of layer l; hidden.back() is the embedding.
  std::vector<std::vector<double>> hidden;
  std::vector<double> dropped;  // embedding after the (possibly unit) dropout mask
  std::vector<double> mask;
};

Activations run_transform(const ModelParams& params, std::span<const float> feature,
                          bool train_mode, std::uint64_t dropout_seed) {
  const auto& cfg = params.config;
  if (feature.size() != cfg.input_dim)
    throw std::invalid_argument("model: feature has dimension " + std::to_string(feature.size()) +
                                ", expected " + std::to_string(cfg.input_dim));
  Activations acts;
  std::vector<double> cur(cfg.input_dim);
  for (std::size_t k = 0; k < cfg.input_dim; ++k) cur[k] = static_cast<double>(feature[k]);
  for (const auto& blk : params.layout.hidden) {
    std::vector<double> next(blk.out);
    matvec(params.values.data() + blk.w, blk.out, blk.in, cur.data(),
           params.values.data() + blk.b, next.data());
    for (auto& v : next) v = std::tanh(v);
    acts.hidden.push_back(next);
    cur = std::move(next);
  }
  if (acts.hidden.empty()) acts.hidden.push_back(cur);

  const auto& emb = acts.hidden.back();
  if (train_mode && cfg.dropout_rate > 0.0) {
    acts.mask = dropout_mask(emb.size(), cfg.dropout_rate, dropout_seed);
    acts.dropped.resize(emb.size());
    for (std::size_t k = 0; k < emb.size(); ++k) acts.dropped[k] = emb[k] * acts.mask[k];
  } else {
    acts.mask.assign(emb.size(), 1.0);
    acts.dropped = emb;
  }
  return acts;
}

std::vector<double> head_logits(const ModelParams& params, const ParamBlock& blk,
                                const std::vector<double>& feat) {
  std::vector<double> z(blk.out);
  matvec(params.values.data() + blk.w, blk.out, blk.in, feat.data(),
         params.values.data() + blk.b, z.data());
  return z;
}

}  // namespace

void ModelConfig::validate() const {
  if (input_dim == 0) throw std::invalid_argument("model: input_dim must be positive");
  if (num_identities < 2) throw std::invalid_argument("model: need at least 2 identities");
  for (auto m : attribute_class_counts)
    if (m < 2) throw std::invalid_argument("model: every attribute head needs >= 2 classes");
  for (auto h : hidden_dims)
    if (h == 0) throw std::invalid_argument("model: zero-width hidden layer");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw std::invalid_argument("model: dropout rate outside [0,1)");
  if (!std::isfinite(lambda) || lambda < 0.0)
    throw std::invalid_argument("model: lambda must be finite and >= 0");
}

ParamLayout ParamLayout::build(const ModelConfig& config) {
  ParamLayout layout;
  std::size_t off = 0;
  auto add = [&off](std::size_t out, std::size_t in) {
    ParamBlock blk{out, in, off, off + out * in};
    off += out * in + out;
    return blk;
  };
  std::size_t width = config.input_dim;
  for (auto h : config.hidden_dims) {
    layout.hidden.push_back(add(h, width));
    width = h;
  }
  layout.id_head = add(config.num_identities, width);
  for (auto m : config.attribute_class_counts) layout.att_heads.push_back(add(m, width));
  layout.total = off;
  return layout;
}

double LossBreakdown::att_mean() const {
  if (l_att.empty()) return 0.0;
  double sum = 0.0;
  for (double v : l_att) sum += v;
  return sum / static_cast<double>(l_att.size());
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams params;
  params.config = config;
  params.layout = ParamLayout::build(config);
  params.values.assign(params.layout.total, 0.0);
  Rng rng(derive_seed(seed, "model.init"));
  auto fill = [&](const ParamBlock& blk) {
    double bound = 1.0 / std::sqrt(static_cast<double>(blk.in));
    for (std::size_t i = 0; i < blk.out * blk.in; ++i)
      params.values[blk.w + i] = rng.uniform(-bound, bound);
    // biases stay zero
  };
  for (const auto& blk : params.layout.hidden) fill(blk);
  fill(params.layout.id_head);
  for (const auto& blk : params.layout.att_heads) fill(blk);
  return params;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  double zmax = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - zmax);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

double cross_entropy(const std::vector<double>& p, std::size_t target) {
  if (target >= p.size()) throw std::out_of_range("cross_entropy: target out of range");
  return -std::log(std::max(p[target], kLogEps));
}

ForwardResult forward(const ModelParams& params, std::span<const float> feature,
                      bool train_mode, std::uint64_t dropout_seed) {
  auto acts = run_transform(params, feature, train_mode, dropout_seed);
  ForwardResult out;
  out.embedding = acts.hidden.back();
  out.id_logits = head_logits(params, params.layout.id_head, acts.dropped);
  for (const auto& blk : params.layout.att_heads)
    out.att_logits.push_back(head_logits(params, blk, acts.dropped));
  return out;
}

namespace {

LossBreakdown losses_from(const ForwardResult& fwd, std::size_t id_target,
                          const std::vector<int>& att_targets, double lambda) {
  if (att_targets.size() != fwd.att_logits.size())
    throw std::invalid_argument("joint_loss: expected " + std::to_string(fwd.att_logits.size()) +
                                " attribute targets, got " + std::to_string(att_targets.size()));
  LossBreakdown loss;
  loss.lambda = lambda;
  loss.l_id = cross_entropy(softmax(fwd.id_logits), id_target);
  for (std::size_t a = 0; a < fwd.att_logits.size(); ++a) {
    if (att_targets[a] < 0) throw std::out_of_range("joint_loss: negative attribute target");
    loss.l_att.push_back(
        cross_entropy(softmax(fwd.att_logits[a]), static_cast<std::size_t>(att_targets[a])));
  }
  loss.total = lambda * loss.l_id + loss.att_mean();
  return loss;
}

}  // namespace

LossBreakdown joint_loss(const ModelParams& params, std::span<const float> feature,
                         std::size_t id_target, const std::vector<int>& att_targets, double lambda,
                         bool train_mode, std::uint64_t dropout_seed) {
  return losses_from(forward(params, feature, train_mode, dropout_seed), id_target, att_targets,
                     lambda);
}

std::pair<LossBreakdown, Gradients> backward(const ModelParams& params,
                                             std::span<const float> feature,
                                             std::size_t id_target,
                                             const std::vector<int>& att_targets, double lambda,
                                             bool train_mode, std::uint64_t dropout_seed) {
  const auto& layout = params.layout;
  auto acts = run_transform(params, feature, train_mode, dropout_seed);

  ForwardResult fwd;
  fwd.embedding = acts.hidden.back();
  fwd.id_logits = head_logits(params, layout.id_head, acts.dropped);
  for (const auto& blk : layout.att_heads)
    fwd.att_logits.push_back(head_logits(params, blk, acts.dropped));
  LossBreakdown loss = losses_from(fwd, id_target, att_targets, lambda);

  Gradients grads;
  grads.values.assign(layout.total, 0.0);
  std::vector<double> dfeat(acts.dropped.size(), 0.0);

  // Softmax + cross entropy: dL/dz = weight * (p - onehot). The epsilon floor
  // inside the log makes the loss locally constant once p[target] < eps, so
  // the gradient is zero there.
  auto head_backward = [&](const ParamBlock& blk, const std::vector<double>& logits,
                           std::size_t target, double weight) {
    auto p = softmax(logits);
    std::vector<double> dz(p.size());
    bool floored = p[target] < kLogEps;
    for (std::size_t i = 0; i < p.size(); ++i)
      dz[i] = floored ? 0.0 : weight * (p[i] - (i == target ? 1.0 : 0.0));
    for (std::size_t r = 0; r < blk.out; ++r) {
      grads.values[blk.b + r] += dz[r];
      double* gw = grads.values.data() + blk.w + r * blk.in;
      for (std::size_t k = 0; k < blk.in; ++k) gw[k] += dz[r] * acts.dropped[k];
    }
    matvec_t_acc(params.values.data() + blk.w, blk.out, blk.in, dz.data(), dfeat.data());
  };

  head_backward(layout.id_head, fwd.id_logits, id_target, lambda);
  const double att_weight =
      layout.att_heads.empty() ? 0.0 : 1.0 / static_cast<double>(layout.att_heads.size());
  for (std::size_t a = 0; a < layout.att_heads.size(); ++a)
    head_backward(layout.att_heads[a], fwd.att_logits[a],
                  static_cast<std::size_t>(att_targets[a]), att_weight);

  // Back through dropout, then through the tanh stack.
  std::vector<double> delta(dfeat.size());
  for (std::size_t k = 0; k < dfeat.size(); ++k) delta[k] = dfeat[k] * acts.mask[k];

  for (std::size_t li = layout.hidden.size(); li-- > 0;) {
    const auto& blk = layout.hidden[li];
    const auto& h = acts.hidden[li];
    for (std::size_t r = 0; r < blk.out; ++r) delta[r] *= 1.0 - h[r] * h[r];

    std::vector<double> prev(blk.in);
    if (li == 0)
      for (std::size_t k = 0; k < blk.in; ++k) prev[k] = static_cast<double>(feature[k]);
    else
      prev = acts.hidden[li - 1];

    for (std::size_t r = 0; r < blk.out; ++r) {
      grads.values[blk.b + r] += delta[r];
      double* gw = grads.values.data() + blk.w + r * blk.in;
      for (std::size_t k = 0; k < blk.in; ++k) gw[k] += delta[r] * prev[k];
    }
    std::vector<double> down(blk.in, 0.0);
    matvec_t_acc(params.values.data() + blk.w, blk.out, blk.in, delta.data(), down.data());
    delta = std::move(down);
  }

  return {loss, std::move(grads)};
}

std::pair<LossBreakdown, Gradients> batch_loss_and_grad(const ModelParams& params,
                                                        const std::vector<BatchItem>& batch,
                                                        double lambda, bool train_mode,
                                                        std::size_t threads) {
  if (batch.empty()) throw std::invalid_argument("batch_loss_and_grad: empty batch");
  const std::size_t n = batch.size();
  const std::size_t num_attrs = params.config.num_attributes();

  // Fixed-size chunks independent of the thread count; chunk partials are
  // reduced sequentially in chunk order so results are bit-reproducible.
  constexpr std::size_t kChunk = 16;
  const std::size_t num_chunks = (n + kChunk - 1) / kChunk;

  struct Partial {
    double l_id = 0.0, total = 0.0;
    std::vector<double> l_att;
    std::vector<double> grad;
  };
  std::vector<Partial> partials(num_chunks);

  parallel_for(num_chunks, threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      Partial& part = partials[c];
      part.l_att.assign(num_attrs, 0.0);
      part.grad.assign(params.layout.total, 0.0);
      std::size_t end = std::min(n, (c + 1) * kChunk);
      for (std::size_t i = c * kChunk; i < end; ++i) {
        auto [loss, grad] = backward(params, batch[i].feature, batch[i].id_target,
                                     batch[i].att_targets, lambda, train_mode,
                                     batch[i].dropout_seed);
        part.l_id += loss.l_id;
        part.total += loss.total;
        for (std::size_t a = 0; a < num_attrs; ++a) part.l_att[a] += loss.l_att[a];
        for (std::size_t k = 0; k < grad.values.size(); ++k) part.grad[k] += grad.values[k];
      }
    }
  });

  LossBreakdown mean;
  mean.lambda = lambda;
  mean.l_att.assign(num_attrs, 0.0);
  Gradients grads;
  grads.values.assign(params.layout.total, 0.0);
  for (const auto& part : partials) {
    mean.l_id += part.l_id;
    mean.total += part.total;
    for (std::size_t a = 0; a < num_attrs; ++a) mean.l_att[a] += part.l_att[a];
    for (std::size_t k = 0; k < grads.values.size(); ++k) grads.values[k] += part.grad[k];
  }
  const double inv = 1.0 / static_cast<double>(n);
  mean.l_id *= inv;
  mean.total *= inv;
  for (auto& v : mean.l_att) v *= inv;
  for (auto& v : grads.values) v *= inv;
  return {mean, std::move(grads)};
}

std::vector<double> extract_embedding(const ModelParams& params,
                                      std::span<const float> feature) {
  auto acts = run_transform(params, feature, false, 0);
  return acts.hidden.back();
}

Prediction predict(const ModelParams& params, std::span<const float> feature) {
  auto fwd = forward(params, feature, false, 0);
  Prediction pred;
  auto argmax = [](const std::vector<double>& p) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
      if (p[i] > p[best]) best = i;
    return best;
  };
  pred.id_probs = softmax(fwd.id_logits);
  pred.id_class = argmax(pred.id_probs);
  for (const auto& z : fwd.att_logits) {
    pred.att_probs.push_back(softmax(z));
    pred.att_classes.push_back(argmax(pred.att_probs.back()));
  }
  return pred;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  const auto& cfg = params.config;
  write_magic(os, "APRM");
  write_u64(os, cfg.input_dim);
  write_u64(os, cfg.hidden_dims.size());
  for (auto h : cfg.hidden_dims) write_u64(os, h);
  write_u64(os, cfg.num_identities);
  write_u64(os, cfg.attribute_class_counts.size());
  for (auto m : cfg.attribute_class_counts) write_u64(os, m);
  write_f64(os, cfg.dropout_rate);
  write_f64(os, cfg.lambda);
  for (double v : params.values) write_f32(os, static_cast<float>(v));
  if (!os) throw std::runtime_error("short write: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  expect_magic(is, "APRM", "APRM checkpoint");
  ModelConfig cfg;
  cfg.input_dim = read_u64(is);
  cfg.hidden_dims.resize(read_u64(is));
  for (auto& h : cfg.hidden_dims) h = read_u64(is);
  cfg.num_identities = read_u64(is);
  cfg.attribute_class_counts.resize(read_u64(is));
  for (auto& m : cfg.attribute_class_counts) m = read_u64(is);
  cfg.dropout_rate = read_f64(is);
  cfg.lambda = read_f64(is);
  cfg.validate();
  ModelParams params;
  params.config = cfg;
  params.layout = ParamLayout::build(cfg);
  params.values.resize(params.layout.total);
  for (auto& v : params.values) v = static_cast<double>(read_f32(is));
  return params;
}

}  // namespace apreid
