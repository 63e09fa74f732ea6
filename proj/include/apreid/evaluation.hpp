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
#include <optional>
#include <string>
#include <vector>

#include "apreid/dataset.hpp"
#include "apreid/model.hpp"
#include "apreid/trainer.hpp"

namespace apreid {

// Cross-camera retrieval protocol: for each query, gallery images of the same
// identity seen by a different camera are "good"; same identity and same
// camera, or junk-labeled images, are "junk" and ignored by the metrics;
// everything else (distractors included) is a ranked negative.

struct EvalOptions {
  std::size_t max_rank = 50;                       // CMC length (clamped to gallery size)
  std::vector<std::size_t> report_ranks = {1, 5, 10, 20};
  std::size_t tile = 256;                          // distance kernel tile edge
  std::size_t threads = 1;
};

struct DistanceMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<float> d;

  float at(std::size_t r, std::size_t c) const { return d[r * cols + c]; }
};

// Euclidean distances via the norm-expansion identity in blocked tiles with
// f64 accumulation, clamped at zero before the square root. Query blocks run
// in parallel; every cell is computed independently so the result does not
// depend on the thread count.
DistanceMatrix pairwise_distances(const EmbeddingMatrix& queries, const EmbeddingMatrix& gallery,
                                  std::size_t tile = 256, std::size_t threads = 1);

struct RankList {
  int query_sample_id = 0;
  std::vector<int> gallery_sample_ids;  // ascending (distance, sample id)
  std::vector<float> distances;
};

// Sorts one query's gallery by (distance, sample id).
RankList build_ranklist(int query_sample_id, const std::vector<int>& gallery_sample_ids,
                        const float* distances, std::size_t n);

struct GoodJunk {
  std::vector<int> good;  // gallery sample ids, cross-camera true matches
  std::vector<int> junk;  // same id+camera, plus junk-labeled samples
};

GoodJunk good_junk_partition(const Sample& query, const std::vector<Sample>& gallery);

struct QueryScore {
  double ap = 0.0;
  std::size_t first_good_rank = 0;  // 1-based, in the junk-cleaned list
};

// Average precision over the junk-cleaned rank list:
// AP = (1/|good|) * sum of precision@k at each good hit. |good| must be > 0.
QueryScore evaluate_query(const RankList& ranklist, const GoodJunk& partition);

struct CmcCurve {
  std::vector<double> values;  // values[r-1] = P(first good match within rank r)
};

struct EvalReport {
  CmcCurve cmc;
  double map = 0.0;
  std::vector<double> per_query_ap;       // scored queries, in query order
  std::vector<int> scored_query_ids;
  std::vector<int> skipped_query_ids;     // queries with no cross-camera match
  std::size_t num_queries = 0;
  std::size_t num_gallery = 0;
  std::size_t num_junk_samples = 0;
  std::size_t num_distractor_samples = 0;

  double rank_k(std::size_t k) const {
    return k == 0 || cmc.values.empty() ? 0.0
                                        : cmc.values[std::min(k, cmc.values.size()) - 1];
  }
};

// Full retrieval evaluation between two splits. `embeddings` must hold one
// row per sample, indexed by Sample::feature_row.
EvalReport evaluate_reid(const EmbeddingMatrix& embeddings, const std::vector<Sample>& samples,
                         Split query_split, Split gallery_split, const EvalOptions& options);

struct CameraPairReport {
  std::vector<int> cameras;         // sorted camera ids present
  std::vector<double> map;          // CxC, row = probe camera, NaN diagonal
  std::vector<double> rank1;        // CxC, NaN diagonal
  double cross_camera_avg_map = 0.0;    // off-diagonal mean over defined entries
  double cross_camera_avg_rank1 = 0.0;
};

CameraPairReport camera_pair_eval(const EmbeddingMatrix& embeddings,
                                  const std::vector<Sample>& samples, Split query_split,
                                  Split gallery_split, const EvalOptions& options);

struct AttributeAccuracy {
  std::vector<double> per_attribute;
  double mean = 0.0;
  std::size_t num_test_samples = 0;
};

// Classification accuracy on the gallery split against ID-level labels;
// distractor and junk samples carry no labels and are excluded.
AttributeAccuracy attribute_accuracy(const ModelParams& params, const EmbeddingMatrix& features,
                                     const std::vector<Sample>& samples,
                                     const AnnotationTable& annotations);

// Mean of per-attribute accuracies; the mean reported everywhere else.
double mean_attribute_accuracy(const std::vector<double>& per_attribute);

struct ScalingRow {
  std::size_t gallery_size = 0;  // distractors appended
  double rank1 = 0.0;
  double map = 0.0;
};

// Appends the first `size` distractors (one fixed seeded shuffle, so galleries
// are nested) to the base gallery and re-evaluates. Query-to-base and
// query-to-distractor distances are each computed once and reused.
std::vector<ScalingRow> distractor_scaling(const EmbeddingMatrix& embeddings,
                                           const std::vector<Sample>& samples,
                                           const EmbeddingMatrix& distractor_embeddings,
                                           const std::vector<Sample>& distractor_samples,
                                           const std::vector<std::size_t>& sizes,
                                           std::uint64_t seed, const EvalOptions& options);

struct AblationRow {
  std::string removed_attribute;  // empty = the all-attributes reference run
  double rank1 = 0.0;
  double map = 0.0;
  double delta_rank1 = 0.0;       // rank1(without attribute) - rank1(full)
};

// Leave-one-attribute-out: retrains with that head removed (M -> M-1) using
// identical seeds and evaluates on the test query/gallery splits.
std::vector<AblationRow> ablate_attributes(const ModelConfig& model_config,
                                           const TrainConfig& train_config,
                                           const ReidDataset& dataset,
                                           const EvalOptions& options);

// Re-scores the list as distance + w * mean attribute disagreement, where the
// disagreement of attribute i is 1 - q_i[predicted gallery class]. w = 0
// returns the input ranking unchanged.
RankList attribute_rerank(const RankList& ranklist,
                          const std::vector<std::vector<double>>& query_att_probs,
                          const std::vector<std::vector<std::size_t>>& gallery_att_classes,
                          double weight);

}  // namespace apreid
