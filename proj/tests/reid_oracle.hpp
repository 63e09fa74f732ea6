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

// Brute-force definitional oracle for AP / CMC / mAP. Deliberately naive: the
// ranking is produced by repeated minimum selection, junk is removed by
// rebuilding the list, and precision@k recounts the hits from scratch at
// every position. Shares nothing with the production scoring path.

#include <cstddef>
#include <limits>
#include <vector>

namespace reid_oracle {

struct Item {
  int sample_id = 0;
  float distance = 0.0f;
  bool good = false;
  bool junk = false;
};

// selection "sort" by (distance, sample_id)
inline std::vector<Item> rank_items(std::vector<Item> items) {
  std::vector<Item> ranked;
  while (!items.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < items.size(); ++i) {
      if (items[i].distance < items[best].distance ||
          (items[i].distance == items[best].distance &&
           items[i].sample_id < items[best].sample_id))
        best = i;
    }
    ranked.push_back(items[best]);
    items.erase(items.begin() + static_cast<long>(best));
  }
  return ranked;
}

struct QueryResult {
  double ap = 0.0;
  std::size_t first_good_rank = 0;
  std::size_t num_good = 0;
};

inline QueryResult score_query(const std::vector<Item>& gallery) {
  auto ranked = rank_items(gallery);
  std::vector<Item> cleaned;
  for (const auto& it : ranked)
    if (!it.junk) cleaned.push_back(it);

  QueryResult res;
  for (const auto& it : cleaned)
    if (it.good) ++res.num_good;
  if (res.num_good == 0) return res;

  double ap_sum = 0.0;
  for (std::size_t k = 1; k <= cleaned.size(); ++k) {
    if (!cleaned[k - 1].good) continue;
    std::size_t hits = 0;
    for (std::size_t j = 0; j < k; ++j)
      if (cleaned[j].good) ++hits;
    if (res.first_good_rank == 0) res.first_good_rank = k;
    ap_sum += static_cast<double>(hits) / static_cast<double>(k);
  }
  res.ap = ap_sum / static_cast<double>(res.num_good);
  return res;
}

struct SetResult {
  double map = 0.0;
  std::vector<double> cmc;
  std::size_t num_scored = 0;
};

// queries with no good match are skipped, exactly as in the protocol
inline SetResult score_set(const std::vector<std::vector<Item>>& queries, std::size_t max_rank) {
  SetResult res;
  std::vector<std::size_t> first_good;
  double ap_sum = 0.0;
  for (const auto& gallery : queries) {
    auto q = score_query(gallery);
    if (q.num_good == 0) continue;
    ++res.num_scored;
    ap_sum += q.ap;
    first_good.push_back(q.first_good_rank);
  }
  if (res.num_scored == 0) return res;
  res.map = ap_sum / static_cast<double>(res.num_scored);
  res.cmc.resize(max_rank);
  for (std::size_t r = 1; r <= max_rank; ++r) {
    std::size_t cum = 0;
    for (auto fg : first_good)
      if (fg <= r) ++cum;
    res.cmc[r - 1] = static_cast<double>(cum) / static_cast<double>(res.num_scored);
  }
  return res;
}

}  // namespace reid_oracle
