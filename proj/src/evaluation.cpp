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

#include "apreid/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "apreid/rng.hpp"
#include "apreid/threading.hpp"

namespace apreid {

namespace {

// f64-accumulating dot product. Norms and cross terms both go through this
// kernel so that dist(x, x) cancels to exactly zero.
double dot_f64(const float* a, const float* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += static_cast<double>(a[k]) * static_cast<double>(b[k]);
    s1 += static_cast<double>(a[k + 1]) * static_cast<double>(b[k + 1]);
    s2 += static_cast<double>(a[k + 2]) * static_cast<double>(b[k + 2]);
    s3 += static_cast<double>(a[k + 3]) * static_cast<double>(b[k + 3]);
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; k < n; ++k) s += static_cast<double>(a[k]) * static_cast<double>(b[k]);
  return s;
}

}  // namespace

DistanceMatrix pairwise_distances(const EmbeddingMatrix& queries, const EmbeddingMatrix& gallery,
                                  std::size_t tile, std::size_t threads) {
  if (queries.dim != gallery.dim)
    throw std::invalid_argument("pairwise_distances: dimension mismatch (" +
                                std::to_string(queries.dim) + " vs " +
                                std::to_string(gallery.dim) + ")");
  if (tile == 0) tile = 256;
  const std::size_t nq = queries.rows, ng = gallery.rows, dim = queries.dim;

  std::vector<double> qnorm(nq), gnorm(ng);
  for (std::size_t i = 0; i < nq; ++i) qnorm[i] = dot_f64(queries.row(i), queries.row(i), dim);
  for (std::size_t j = 0; j < ng; ++j) gnorm[j] = dot_f64(gallery.row(j), gallery.row(j), dim);

  DistanceMatrix dist;
  dist.rows = nq;
  dist.cols = ng;
  dist.d.assign(nq * ng, 0.0f);

  const std::size_t qblocks = (nq + tile - 1) / tile;
  parallel_for(qblocks, threads, [&](std::size_t blo, std::size_t bhi) {
    for (std::size_t qb = blo; qb < bhi; ++qb) {
      const std::size_t q0 = qb * tile, q1 = std::min(nq, q0 + tile);
      for (std::size_t g0 = 0; g0 < ng; g0 += tile) {
        const std::size_t g1 = std::min(ng, g0 + tile);
        for (std::size_t i = q0; i < q1; ++i) {
          const float* qi = queries.row(i);
          float* out = dist.d.data() + i * ng;
          for (std::size_t j = g0; j < g1; ++j) {
            double d2 = qnorm[i] + gnorm[j] - 2.0 * dot_f64(qi, gallery.row(j), dim);
            if (d2 < 0.0) d2 = 0.0;
            out[j] = static_cast<float>(std::sqrt(d2));
          }
        }
      }
    }
  });
  return dist;
}

RankList build_ranklist(int query_sample_id, const std::vector<int>& gallery_sample_ids,
                        const float* distances, std::size_t n) {
  if (gallery_sample_ids.size() != n)
    throw std::invalid_argument("build_ranklist: id/distance length mismatch");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (distances[a] != distances[b]) return distances[a] < distances[b];
    return gallery_sample_ids[a] < gallery_sample_ids[b];
  });
  RankList out;
  out.query_sample_id = query_sample_id;
  out.gallery_sample_ids.reserve(n);
  out.distances.reserve(n);
  for (auto idx : order) {
    out.gallery_sample_ids.push_back(gallery_sample_ids[idx]);
    out.distances.push_back(distances[idx]);
  }
  return out;
}

GoodJunk good_junk_partition(const Sample& query, const std::vector<Sample>& gallery) {
  GoodJunk gj;
  for (const auto& g : gallery) {
    if (g.is_junk()) {
      gj.junk.push_back(g.sample_id);
    } else if (g.has_real_identity() && g.identity == query.identity) {
      if (g.camera != query.camera)
        gj.good.push_back(g.sample_id);
      else
        gj.junk.push_back(g.sample_id);
    }
    // distractors and other identities stay ranked negatives
  }
  return gj;
}

QueryScore evaluate_query(const RankList& ranklist, const GoodJunk& partition) {
  if (partition.good.empty())
    throw std::invalid_argument("evaluate_query: empty good set (query should be skipped)");

  std::vector<int> good_sorted = partition.good;
  std::vector<int> junk_sorted = partition.junk;
  std::sort(good_sorted.begin(), good_sorted.end());
  std::sort(junk_sorted.begin(), junk_sorted.end());
  auto is_in = [](const std::vector<int>& v, int id) {
    return std::binary_search(v.begin(), v.end(), id);
  };

  QueryScore score;
  std::size_t rank = 0;   // position in the junk-cleaned list
  std::size_t hits = 0;
  double ap_sum = 0.0;
  for (int id : ranklist.gallery_sample_ids) {
    if (is_in(junk_sorted, id)) continue;
    ++rank;
    if (is_in(good_sorted, id)) {
      ++hits;
      if (hits == 1) score.first_good_rank = rank;
      ap_sum += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  if (hits != good_sorted.size())
    throw std::invalid_argument("evaluate_query: good ids missing from the rank list");
  score.ap = ap_sum / static_cast<double>(good_sorted.size());
  return score;
}

namespace {

struct SplitView {
  std::vector<std::size_t> sample_index;   // into the full sample vector
  std::vector<int> sample_ids;
  EmbeddingMatrix rows;                    // gathered embedding rows
};

SplitView gather_split(const EmbeddingMatrix& embeddings, const std::vector<Sample>& samples,
                       Split split) {
  SplitView view;
  view.rows.dim = embeddings.dim;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split != split) continue;
    if (samples[i].feature_row < 0)
      throw std::runtime_error("evaluate: sample without attached embedding row");
    view.sample_index.push_back(i);
    view.sample_ids.push_back(samples[i].sample_id);
    const float* r = embeddings.row(static_cast<std::size_t>(samples[i].feature_row));
    view.rows.data.insert(view.rows.data.end(), r, r + embeddings.dim);
  }
  view.rows.rows = view.sample_index.size();
  return view;
}

EvalReport score_queries(const std::vector<Sample>& samples, const SplitView& queries,
                         const SplitView& gallery, const DistanceMatrix& dist,
                         const EvalOptions& options) {
  EvalReport report;
  report.num_queries = queries.sample_index.size();
  report.num_gallery = gallery.sample_index.size();

  std::vector<Sample> gallery_samples;
  gallery_samples.reserve(gallery.sample_index.size());
  for (auto gi : gallery.sample_index) {
    gallery_samples.push_back(samples[gi]);
    if (gallery_samples.back().is_junk()) ++report.num_junk_samples;
    if (gallery_samples.back().is_distractor()) ++report.num_distractor_samples;
  }

  const std::size_t max_rank =
      std::min(options.max_rank == 0 ? gallery_samples.size() : options.max_rank,
               std::max<std::size_t>(gallery_samples.size(), 1));
  std::vector<std::size_t> first_good_histogram(max_rank + 1, 0);

  for (std::size_t qi = 0; qi < queries.sample_index.size(); ++qi) {
    const Sample& q = samples[queries.sample_index[qi]];
    auto partition = good_junk_partition(q, gallery_samples);
    if (partition.good.empty()) {
      report.skipped_query_ids.push_back(q.sample_id);
      continue;
    }
    auto ranklist = build_ranklist(q.sample_id, gallery.sample_ids,
                                   dist.d.data() + qi * dist.cols, dist.cols);
    auto score = evaluate_query(ranklist, partition);
    report.per_query_ap.push_back(score.ap);
    report.scored_query_ids.push_back(q.sample_id);
    if (score.first_good_rank <= max_rank) ++first_good_histogram[score.first_good_rank];
  }

  const std::size_t scored = report.per_query_ap.size();
  if (scored > 0) {
    double sum = 0.0;
    for (double ap : report.per_query_ap) sum += ap;
    report.map = sum / static_cast<double>(scored);

    report.cmc.values.resize(max_rank);
    std::size_t cum = 0;
    for (std::size_t r = 1; r <= max_rank; ++r) {
      cum += first_good_histogram[r];
      report.cmc.values[r - 1] = static_cast<double>(cum) / static_cast<double>(scored);
    }
  }
  return report;
}

}  // namespace

EvalReport evaluate_reid(const EmbeddingMatrix& embeddings, const std::vector<Sample>& samples,
                         Split query_split, Split gallery_split, const EvalOptions& options) {
  auto queries = gather_split(embeddings, samples, query_split);
  auto gallery = gather_split(embeddings, samples, gallery_split);
  if (queries.sample_index.empty()) throw std::runtime_error("evaluate: no query samples");
  if (gallery.sample_index.empty()) throw std::runtime_error("evaluate: no gallery samples");
  auto dist = pairwise_distances(queries.rows, gallery.rows, options.tile, options.threads);
  return score_queries(samples, queries, gallery, dist, options);
}

CameraPairReport camera_pair_eval(const EmbeddingMatrix& embeddings,
                                  const std::vector<Sample>& samples, Split query_split,
                                  Split gallery_split, const EvalOptions& options) {
  CameraPairReport report;
  {
    std::vector<int> cams;
    for (const auto& s : samples)
      if (s.split == query_split || s.split == gallery_split) cams.push_back(s.camera);
    std::sort(cams.begin(), cams.end());
    cams.erase(std::unique(cams.begin(), cams.end()), cams.end());
    report.cameras = std::move(cams);
  }
  const std::size_t nc = report.cameras.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  report.map.assign(nc * nc, nan);
  report.rank1.assign(nc * nc, nan);

  double sum_map = 0.0, sum_rank1 = 0.0;
  std::size_t defined = 0;
  for (std::size_t i = 0; i < nc; ++i) {
    for (std::size_t j = 0; j < nc; ++j) {
      if (i == j) continue;  // same-camera retrieval is junk by protocol
      std::vector<Sample> restricted;
      restricted.reserve(samples.size());
      for (const auto& s : samples) {
        if (s.split == query_split && s.camera == report.cameras[i])
          restricted.push_back(s);
        else if (s.split == gallery_split && s.camera == report.cameras[j])
          restricted.push_back(s);
      }
      EvalReport sub;
      try {
        sub = evaluate_reid(embeddings, restricted, query_split, gallery_split, options);
      } catch (const std::runtime_error&) {
        continue;  // no queries or no gallery under this camera pair
      }
      if (sub.per_query_ap.empty()) continue;
      report.map[i * nc + j] = sub.map;
      report.rank1[i * nc + j] = sub.rank_k(1);
      sum_map += sub.map;
      sum_rank1 += sub.rank_k(1);
      ++defined;
    }
  }
  if (defined > 0) {
    report.cross_camera_avg_map = sum_map / static_cast<double>(defined);
    report.cross_camera_avg_rank1 = sum_rank1 / static_cast<double>(defined);
  }
  return report;
}

AttributeAccuracy attribute_accuracy(const ModelParams& params, const EmbeddingMatrix& features,
                                     const std::vector<Sample>& samples,
                                     const AnnotationTable& annotations) {
  const std::size_t num_attrs = params.config.num_attributes();
  if (num_attrs == 0)
    throw std::invalid_argument("attribute_accuracy: model has no attribute heads");

  AttributeAccuracy acc;
  std::vector<std::size_t> correct(num_attrs, 0);
  for (const auto& s : samples) {
    if (s.split != Split::Gallery) continue;
    if (!s.has_real_identity()) continue;  // distractors/junk carry no labels
    const auto& labels = instance_labels(s, annotations);
    auto pred = predict(params, features.row_span(static_cast<std::size_t>(s.feature_row)));
    for (std::size_t a = 0; a < num_attrs; ++a)
      if (pred.att_classes[a] == static_cast<std::size_t>(labels[a])) ++correct[a];
    ++acc.num_test_samples;
  }
  if (acc.num_test_samples == 0)
    throw std::runtime_error("attribute_accuracy: no labeled gallery samples");
  for (std::size_t a = 0; a < num_attrs; ++a)
    acc.per_attribute.push_back(static_cast<double>(correct[a]) /
                                static_cast<double>(acc.num_test_samples));
  acc.mean = mean_attribute_accuracy(acc.per_attribute);
  return acc;
}

double mean_attribute_accuracy(const std::vector<double>& per_attribute) {
  if (per_attribute.empty()) return 0.0;
  double sum = 0.0;
  for (double v : per_attribute) sum += v;
  return sum / static_cast<double>(per_attribute.size());
}

std::vector<ScalingRow> distractor_scaling(const EmbeddingMatrix& embeddings,
                                           const std::vector<Sample>& samples,
                                           const EmbeddingMatrix& distractor_embeddings,
                                           const std::vector<Sample>& distractor_samples,
                                           const std::vector<std::size_t>& sizes,
                                           std::uint64_t seed, const EvalOptions& options) {
  for (auto s : sizes)
    if (s > distractor_samples.size())
      throw std::invalid_argument("distractor_scaling: requested " + std::to_string(s) +
                                  " distractors, pool has " +
                                  std::to_string(distractor_samples.size()));

  auto queries = gather_split(embeddings, samples, Split::Query);
  auto gallery = gather_split(embeddings, samples, Split::Gallery);
  if (queries.sample_index.empty()) throw std::runtime_error("distractor_scaling: no queries");

  // One fixed shuffle per seed; size-s galleries are then nested prefixes.
  std::vector<std::size_t> pool_order(distractor_samples.size());
  std::iota(pool_order.begin(), pool_order.end(), 0);
  Rng rng(derive_seed(seed, "distractor-order"));
  rng.shuffle(pool_order);

  auto base_dist = pairwise_distances(queries.rows, gallery.rows, options.tile, options.threads);

  SplitView pool;
  pool.rows.dim = distractor_embeddings.dim;
  for (auto pi : pool_order) {
    pool.sample_index.push_back(pi);
    pool.sample_ids.push_back(distractor_samples[pi].sample_id);
    const float* r =
        distractor_embeddings.row(static_cast<std::size_t>(distractor_samples[pi].feature_row));
    pool.rows.data.insert(pool.rows.data.end(), r, r + distractor_embeddings.dim);
  }
  pool.rows.rows = pool.sample_index.size();
  DistanceMatrix pool_dist;
  if (pool.rows.rows > 0)
    pool_dist = pairwise_distances(queries.rows, pool.rows, options.tile, options.threads);

  std::vector<ScalingRow> rows;
  for (auto size : sizes) {
    // Merged view: base gallery followed by the first `size` shuffled distractors.
    std::vector<Sample> merged_samples = samples;
    SplitView merged = gallery;
    DistanceMatrix dist;
    dist.rows = queries.rows.rows;
    dist.cols = gallery.rows.rows + size;
    dist.d.resize(dist.rows * dist.cols);
    for (std::size_t size_index = 0; size_index < size; ++size_index) {
      std::size_t pi = pool.sample_index[size_index];
      merged.sample_index.push_back(merged_samples.size());
      merged.sample_ids.push_back(distractor_samples[pi].sample_id);
      merged_samples.push_back(distractor_samples[pi]);
    }
    for (std::size_t q = 0; q < dist.rows; ++q) {
      float* out = dist.d.data() + q * dist.cols;
      const float* base = base_dist.d.data() + q * base_dist.cols;
      std::copy(base, base + base_dist.cols, out);
      const float* extra = pool_dist.d.empty() ? nullptr : pool_dist.d.data() + q * pool_dist.cols;
      for (std::size_t k = 0; k < size; ++k) out[base_dist.cols + k] = extra[k];
    }
    auto report = score_queries(merged_samples, queries, merged, dist, options);
    rows.push_back({size, report.rank_k(1), report.map});
  }
  return rows;
}

std::vector<AblationRow> ablate_attributes(const ModelConfig& model_config,
                                           const TrainConfig& train_config,
                                           const ReidDataset& dataset,
                                           const EvalOptions& options) {
  const std::size_t num_attrs = dataset.schema.num_attributes();
  if (num_attrs < 2)
    throw std::invalid_argument("ablate: need at least 2 attributes to remove one at a time");

  auto run = [&](const ReidDataset& ds, const ModelConfig& mc) {
    auto trained = train(mc, train_config, ds);
    EmbeddingMatrix embedded;
    embedded.rows = ds.features.rows;
    embedded.dim = trained.params.config.embedding_dim();
    embedded.data.assign(embedded.rows * embedded.dim, 0.0f);
    for (const auto& s : ds.samples) {
      if (s.split != Split::Query && s.split != Split::Gallery) continue;
      auto row = static_cast<std::size_t>(s.feature_row);
      auto emb = extract_embedding(trained.params, ds.features.row_span(row));
      for (std::size_t k = 0; k < embedded.dim; ++k)
        embedded.data[row * embedded.dim + k] = static_cast<float>(emb[k]);
    }
    return evaluate_reid(embedded, ds.samples, Split::Query, Split::Gallery, options);
  };

  std::vector<AblationRow> rows;
  auto full = run(dataset, model_config);
  rows.push_back({"", full.rank_k(1), full.map, 0.0});

  for (std::size_t removed = 0; removed < num_attrs; ++removed) {
    ReidDataset reduced;
    reduced.samples = dataset.samples;
    reduced.features = dataset.features;
    for (std::size_t a = 0; a < num_attrs; ++a)
      if (a != removed) reduced.schema.attributes.push_back(dataset.schema.attributes[a]);
    for (const auto& [id, labels] : dataset.annotations.rows) {
      std::vector<int> keep;
      for (std::size_t a = 0; a < labels.size(); ++a)
        if (a != removed) keep.push_back(labels[a]);
      reduced.annotations.rows.emplace(id, std::move(keep));
    }
    ModelConfig mc = model_config;
    mc.attribute_class_counts.clear();
    for (std::size_t a = 0; a < num_attrs; ++a)
      if (a != removed) mc.attribute_class_counts.push_back(dataset.schema.class_count(a));

    auto report = run(reduced, mc);
    rows.push_back({dataset.schema.attributes[removed].name, report.rank_k(1), report.map,
                    report.rank_k(1) - full.rank_k(1)});
  }
  return rows;
}

RankList attribute_rerank(const RankList& ranklist,
                          const std::vector<std::vector<double>>& query_att_probs,
                          const std::vector<std::vector<std::size_t>>& gallery_att_classes,
                          double weight) {
  const std::size_t n = ranklist.gallery_sample_ids.size();
  if (gallery_att_classes.size() != n)
    throw std::invalid_argument("attribute_rerank: per-item predictions length mismatch");
  const std::size_t num_attrs = query_att_probs.size();

  std::vector<float> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    double disagreement = 0.0;
    for (std::size_t a = 0; a < num_attrs; ++a) {
      std::size_t cls = gallery_att_classes[i][a];
      if (cls >= query_att_probs[a].size())
        throw std::out_of_range("attribute_rerank: gallery class out of range");
      disagreement += 1.0 - query_att_probs[a][cls];
    }
    if (num_attrs > 0) disagreement /= static_cast<double>(num_attrs);
    scores[i] =
        static_cast<float>(static_cast<double>(ranklist.distances[i]) + weight * disagreement);
  }
  return build_ranklist(ranklist.query_sample_id, ranklist.gallery_sample_ids, scores.data(), n);
}

}  // namespace apreid
