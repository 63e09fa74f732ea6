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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "apreid/model.hpp"
#include "apreid/rng.hpp"
#include "doctest.h"
#include "gradient_check.hpp"

using namespace apreid;

namespace {

std::vector<float> random_feature(Rng& rng, std::size_t dim) {
  std::vector<float> f(dim);
  for (auto& v : f) v = static_cast<float>(rng.normal());
  return f;
}

}  // namespace

TEST_CASE("softmax: uniform, stability, high-precision oracle") {
  auto uniform = softmax({0.0, 0.0, 0.0});
  for (double p : uniform) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-15));

  auto extreme = softmax({1000.0, 0.0});
  CHECK(std::isfinite(extreme[0]));
  CHECK(extreme[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(extreme[1] == doctest::Approx(0.0).epsilon(1e-12));

  // frozen from an arbitrary-precision evaluation of exp(z_k)/sum exp(z_i)
  auto p = softmax({1.0, 2.0, 3.0});
  CHECK(std::abs(p[0] - 0.090030573170380458) < 1e-12);
  CHECK(std::abs(p[1] - 0.24472847105479765) < 1e-12);
  CHECK(std::abs(p[2] - 0.66524095577482189) < 1e-12);
}

TEST_CASE("softmax: sums to one and is shift invariant") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 2 + rng.bounded(10);
    std::vector<double> z(n);
    for (auto& v : z) v = rng.uniform(-30, 30);
    auto p = softmax(z);
    double sum = 0;
    for (double v : p) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);

    double shift = rng.uniform(-100, 100);
    std::vector<double> zs = z;
    for (auto& v : zs) v += shift;
    auto ps = softmax(zs);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p[i] - ps[i]) < 1e-9);
  }
}

TEST_CASE("cross entropy: closed forms and range") {
  std::vector<double> uniform(5, 0.2);
  CHECK(cross_entropy(uniform, 3) == doctest::Approx(std::log(5.0)).epsilon(1e-15));

  std::vector<double> delta{0.0, 1.0, 0.0};
  CHECK(cross_entropy(delta, 1) == 0.0);

  // -log 0.2, frozen from the direct formula
  CHECK(std::abs(cross_entropy({0.7, 0.2, 0.1}, 1) - 1.6094379124341004) < 1e-15);

  CHECK_THROWS(cross_entropy(uniform, 5));

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = softmax({rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20)});
    auto t = rng.bounded(3);
    double ce = cross_entropy(p, t);
    CHECK(ce >= 0.0);
    CHECK((ce == 0.0) == (p[t] >= 1.0 - 1e-12));
  }
}

TEST_CASE("init: deterministic per seed, bounded by fan-in, zero biases") {
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden_dims = {4};
  cfg.num_identities = 3;
  cfg.attribute_class_counts = {2, 3};
  cfg.lambda = 1.0;

  auto a = init_params(cfg, 9);
  auto b = init_params(cfg, 9);
  CHECK(a.values == b.values);
  auto c = init_params(cfg, 10);
  CHECK(a.values != c.values);

  double bound = 1.0 / std::sqrt(6.0);
  const auto& blk = a.layout.hidden[0];
  for (std::size_t i = 0; i < blk.out * blk.in; ++i) {
    CHECK(a.values[blk.w + i] <= bound);
    CHECK(a.values[blk.w + i] >= -bound);
  }
  for (std::size_t r = 0; r < blk.out; ++r) CHECK(a.values[blk.b + r] == 0.0);
}

TEST_CASE("joint loss: lambda extremes and an independent straight-line recomputation") {
  ModelConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden_dims = {};
  cfg.num_identities = 3;
  cfg.attribute_class_counts = {2, 4};
  cfg.lambda = 1.0;
  auto params = init_params(cfg, 123);
  Rng rng(77);
  auto feat = random_feature(rng, 4);
  std::vector<int> att{1, 2};

  // straight-line oracle: logits by hand, softmax/log by direct formula
  auto logits_of = [&](const ParamBlock& blk) {
    std::vector<double> z(blk.out);
    for (std::size_t r = 0; r < blk.out; ++r) {
      double acc = params.values[blk.b + r];
      for (std::size_t k = 0; k < blk.in; ++k)
        acc += params.values[blk.w + r * blk.in + k] * static_cast<double>(feat[k]);
      z[r] = acc;
    }
    return z;
  };
  auto nll = [](const std::vector<double>& z, std::size_t t) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double sum = 0;
    for (double v : z) sum += std::exp(v - m);
    return -((z[t] - m) - std::log(sum));
  };
  double l_id = nll(logits_of(params.layout.id_head), 1);
  double l0 = nll(logits_of(params.layout.att_heads[0]), 1);
  double l1 = nll(logits_of(params.layout.att_heads[1]), 2);

  auto loss = joint_loss(params, feat, 1, att, 2.5, false, 0);
  CHECK(std::abs(loss.l_id - l_id) < 1e-12);
  CHECK(std::abs(loss.l_att[0] - l0) < 1e-12);
  CHECK(std::abs(loss.l_att[1] - l1) < 1e-12);
  CHECK(std::abs(loss.total - (2.5 * l_id + (l0 + l1) / 2.0)) < 1e-12);

  // lambda = 0 reduces to the attributes-only objective, exactly
  auto b2 = joint_loss(params, feat, 1, att, 0.0, false, 0);
  CHECK(b2.total == b2.att_mean());

  // M = 1, lambda = 1: total = l_id + l_att[0]
  ModelConfig cfg1 = cfg;
  cfg1.attribute_class_counts = {2};
  auto params1 = init_params(cfg1, 123);
  auto single = joint_loss(params1, feat, 0, {1}, 1.0, false, 0);
  CHECK(single.total == doctest::Approx(single.l_id + single.l_att[0]).epsilon(1e-15));
}

TEST_CASE("joint loss: total is linear in lambda") {
  Rng rng(321);
  ModelConfig cfg;
  cfg.input_dim = 5;
  cfg.hidden_dims = {4};
  cfg.num_identities = 4;
  cfg.attribute_class_counts = {3, 2};
  cfg.dropout_rate = 0.3;
  auto params = init_params(cfg, 5);
  for (int trial = 0; trial < 50; ++trial) {
    auto feat = random_feature(rng, 5);
    std::vector<int> att{static_cast<int>(rng.bounded(3)), static_cast<int>(rng.bounded(2))};
    auto id = rng.bounded(4);
    double c0 = 0;
    int i = 0;
    for (double lambda : {0.0, 1.0, 8.0}) {
      auto loss = joint_loss(params, feat, id, att, lambda, true, 99);
      double c = loss.total - lambda * loss.l_id;
      if (i++ == 0)
        c0 = c;
      else
        CHECK(std::abs(c - c0) < 1e-9);
    }
  }
}

TEST_CASE("backward: closed form at zero weights") {
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.num_identities = 4;
  cfg.attribute_class_counts = {2};
  auto params = init_params(cfg, 1);
  std::fill(params.values.begin(), params.values.end(), 0.0);

  std::vector<float> feat{0.5f, -1.0f, 2.0f};
  const double lambda = 3.0;
  auto [loss, grads] = backward(params, feat, 2, {1}, lambda, false, 0);

  // uniform predictions: ID-head bias gradient = lambda * (1/K - onehot)
  const auto& id_head = params.layout.id_head;
  for (std::size_t k = 0; k < 4; ++k) {
    double expect = lambda * (0.25 - (k == 2 ? 1.0 : 0.0));
    CHECK(grads.values[id_head.b + k] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(loss.l_id == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("backward: lambda 0 disconnects the ID head") {
  Rng rng(55);
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden_dims = {5};
  cfg.num_identities = 3;
  cfg.attribute_class_counts = {2, 3};
  auto params = init_params(cfg, 2);
  auto feat = random_feature(rng, 6);
  auto [loss, grads] = backward(params, feat, 1, {0, 2}, 0.0, false, 0);
  const auto& id_head = params.layout.id_head;
  for (std::size_t i = 0; i < id_head.out * id_head.in; ++i)
    CHECK(grads.values[id_head.w + i] == 0.0);
  for (std::size_t r = 0; r < id_head.out; ++r) CHECK(grads.values[id_head.b + r] == 0.0);
}

TEST_CASE("backward: matches central finite differences on random instances") {
  Rng rng(20260809);
  int instances = 0;
  while (instances < 120) {
    auto cfg = gradcheck::random_config(rng);
    auto params = init_params(cfg, rng.next_u64());
    auto instance = gradcheck::random_instance(rng, cfg);
    double rel = gradcheck::max_rel_error(params, instance);
    CHECK(rel < 1e-4);
    ++instances;
  }
}

TEST_CASE("batch: mean of per-sample losses and gradients, any thread count") {
  Rng rng(4242);
  ModelConfig cfg;
  cfg.input_dim = 7;
  cfg.hidden_dims = {6};
  cfg.num_identities = 5;
  cfg.attribute_class_counts = {2, 3};
  cfg.dropout_rate = 0.2;
  auto params = init_params(cfg, 3);

  std::vector<std::vector<float>> feats;
  std::vector<BatchItem> batch;
  const std::size_t bsz = 37;  // deliberately not a multiple of the chunk size
  for (std::size_t i = 0; i < bsz; ++i) {
    feats.push_back(random_feature(rng, 7));
    BatchItem item;
    item.feature = feats.back();
    item.id_target = rng.bounded(5);
    item.att_targets = {static_cast<int>(rng.bounded(2)), static_cast<int>(rng.bounded(3))};
    item.dropout_seed = rng.next_u64();
    batch.push_back(item);
  }

  auto [mean1, grad1] = batch_loss_and_grad(params, batch, 2.0, true, 1);

  // sequential oracle
  double total = 0;
  std::vector<double> acc(params.layout.total, 0.0);
  for (const auto& item : batch) {
    auto [loss, grad] = backward(params, item.feature, item.id_target, item.att_targets, 2.0,
                                 true, item.dropout_seed);
    total += loss.total;
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += grad.values[k];
  }
  CHECK(std::abs(mean1.total - total / bsz) < 1e-12);
  for (std::size_t k = 0; k < acc.size(); ++k)
    CHECK(std::abs(grad1.values[k] - acc[k] / bsz) < 1e-12);

  // bit-identical across thread counts
  for (std::size_t threads : {2, 3, 8}) {
    auto [meanN, gradN] = batch_loss_and_grad(params, batch, 2.0, true, threads);
    CHECK(meanN.total == mean1.total);
    CHECK(gradN.values == grad1.values);
  }
}

TEST_CASE("embedding: identity map without hidden layers, deterministic in eval mode") {
  ModelConfig cfg;
  cfg.input_dim = 4;
  cfg.num_identities = 2;
  cfg.dropout_rate = 0.9;
  auto params = init_params(cfg, 8);
  std::vector<float> feat{1.0f, -2.0f, 0.5f, 3.0f};
  auto emb = extract_embedding(params, feat);
  REQUIRE(emb.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(emb[k] == static_cast<double>(feat[k]));
  CHECK(extract_embedding(params, feat) == emb);
}

TEST_CASE("embedding: one hidden layer matches a hand computation") {
  ModelConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dims = {2};
  cfg.num_identities = 2;
  auto params = init_params(cfg, 0);
  const auto& blk = params.layout.hidden[0];
  // W = [[0.5, -0.25], [1.0, 0.75]], b = [0.1, -0.2]
  params.values[blk.w + 0] = 0.5;
  params.values[blk.w + 1] = -0.25;
  params.values[blk.w + 2] = 1.0;
  params.values[blk.w + 3] = 0.75;
  params.values[blk.b + 0] = 0.1;
  params.values[blk.b + 1] = -0.2;

  std::vector<float> feat{2.0f, -1.0f};
  auto emb = extract_embedding(params, feat);
  // tanh(0.5*2 + (-0.25)*(-1) + 0.1) = tanh(1.35); tanh(1*2 + 0.75*(-1) - 0.2) = tanh(1.05)
  CHECK(emb[0] == doctest::Approx(std::tanh(1.35)).epsilon(1e-15));
  CHECK(emb[1] == doctest::Approx(std::tanh(1.05)).epsilon(1e-15));
}

TEST_CASE("forward: train-mode dropout is deterministic per seed and rescales") {
  ModelConfig cfg;
  cfg.input_dim = 32;
  cfg.num_identities = 2;
  cfg.dropout_rate = 0.5;
  auto params = init_params(cfg, 4);
  Rng rng(6);
  auto feat = random_feature(rng, 32);

  auto a = forward(params, feat, true, 1234);
  auto b = forward(params, feat, true, 1234);
  CHECK(a.id_logits == b.id_logits);
  auto c = forward(params, feat, true, 1235);
  CHECK(a.id_logits != c.id_logits);

  auto eval1 = forward(params, feat, false, 1234);
  auto eval2 = forward(params, feat, false, 999);
  CHECK(eval1.id_logits == eval2.id_logits);

  std::vector<float> short_feat(31, 0.0f);
  CHECK_THROWS(forward(params, short_feat, true, 0));
}

TEST_CASE("predict: argmax with low-index tie break, invariant to head rescaling") {
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.num_identities = 3;
  cfg.attribute_class_counts = {2};
  auto params = init_params(cfg, 9);
  std::fill(params.values.begin(), params.values.end(), 0.0);

  std::vector<float> feat{1.0f, 1.0f, 1.0f};
  auto pred = predict(params, feat);
  CHECK(pred.id_class == 0);  // all logits tie at zero
  CHECK(pred.att_classes[0] == 0);

  Rng rng(77);
  for (auto& v : params.values) v = rng.uniform(-1, 1);
  auto base = predict(params, feat);
  ModelParams scaled = params;
  const auto& head = scaled.layout.id_head;
  for (std::size_t i = 0; i < head.out * head.in; ++i) scaled.values[head.w + i] *= 7.5;
  for (std::size_t r = 0; r < head.out; ++r) scaled.values[head.b + r] *= 7.5;
  CHECK(predict(scaled, feat).id_class == base.id_class);
}

TEST_CASE("checkpoint: round trip through float32") {
  namespace fs = std::filesystem;
  ModelConfig cfg;
  cfg.input_dim = 5;
  cfg.hidden_dims = {4, 3};
  cfg.num_identities = 6;
  cfg.attribute_class_counts = {2, 3, 4};
  cfg.dropout_rate = 0.25;
  cfg.lambda = 8.0;
  auto params = init_params(cfg, 31);

  auto dir = fs::temp_directory_path() / "apreid_test_ckpt";
  fs::create_directories(dir);
  auto path = (dir / "m.aprm").string();
  save_checkpoint(path, params);
  auto loaded = load_checkpoint(path);

  CHECK(loaded.config.input_dim == cfg.input_dim);
  CHECK(loaded.config.hidden_dims == cfg.hidden_dims);
  CHECK(loaded.config.num_identities == cfg.num_identities);
  CHECK(loaded.config.attribute_class_counts == cfg.attribute_class_counts);
  CHECK(loaded.config.dropout_rate == cfg.dropout_rate);
  CHECK(loaded.config.lambda == cfg.lambda);
  REQUIRE(loaded.values.size() == params.values.size());
  for (std::size_t k = 0; k < params.values.size(); ++k)
    CHECK(loaded.values[k] == static_cast<double>(static_cast<float>(params.values[k])));

  // saving the loaded params again is byte-stable
  auto path2 = (dir / "m2.aprm").string();
  save_checkpoint(path2, loaded);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  fs::remove_all(dir);
}

TEST_CASE("config validation") {
  ModelConfig cfg;
  cfg.input_dim = 4;
  cfg.num_identities = 1;
  CHECK_THROWS(init_params(cfg, 0));
  cfg.num_identities = 2;
  cfg.attribute_class_counts = {1};
  CHECK_THROWS(init_params(cfg, 0));
  cfg.attribute_class_counts = {2};
  cfg.dropout_rate = 1.0;
  CHECK_THROWS(init_params(cfg, 0));
  cfg.dropout_rate = 0.0;
  cfg.lambda = -1.0;
  CHECK_THROWS(init_params(cfg, 0));
}
