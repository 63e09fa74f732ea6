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

#include "json.hpp"

namespace apreid::cli {

// Flat key=value run configuration. A config file assigns one key per line
// (`#` comments); `--set key=value` overrides individual keys afterwards, so
// any run is reproducible from its echoed run.json alone.
struct RunConfig {
  // paths
  std::string schema;
  std::string annotations;
  std::string manifest;
  std::string embeddings;
  std::string distractor_manifest;
  std::string distractor_embeddings;
  std::string checkpoint;
  std::string out = "out";

  // model
  std::vector<std::size_t> hidden_dims = {32};
  double dropout = 0.1;
  std::string mode = "apr";  // apr | baseline1 (ID head only) | baseline2 (lambda = 0)

  // training
  std::size_t epochs = 55;
  std::size_t batch_size = 64;
  double lr_initial = 1e-3;
  double lr_final = 1e-4;
  std::size_t lr_switch_epoch = 50;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double lambda = 8.0;
  bool emit_timing = false;  // wall-clock in train_log.csv breaks byte-reproducibility

  // synthesis
  std::size_t synth_ids = 100;
  std::size_t synth_cameras = 4;
  std::size_t synth_samples_per_id_per_camera = 4;
  std::size_t synth_dim = 64;
  std::vector<std::size_t> synth_classes = {2, 2, 2, 2, 2, 2, 2, 2};
  double synth_sigma = 0.6;
  double synth_coupling = 2.0;
  double synth_camera_offset = 1.0;
  double synth_camera_offset_semantic = 0.25;
  std::size_t synth_train_ids = 50;
  std::size_t synth_val_ids = 20;
  std::size_t synth_distractors = 0;

  // evaluation
  std::size_t max_rank = 50;
  std::vector<std::size_t> report_ranks = {1, 5, 10, 20};
  bool camera_pairs = false;
  std::size_t tile = 256;

  // experiment drivers
  std::vector<double> lambda_grid = {0, 0.5, 1, 2, 4, 8, 16, 32};
  std::vector<std::size_t> distractor_sizes = {0, 1000, 5000, 20000};

  std::uint64_t seed = 1;
  std::size_t threads = 1;

  void set(const std::string& key, const std::string& value);
  void load_file(const std::string& path);
  void apply_overrides(const std::vector<std::string>& key_value_pairs);
  nlohmann::json to_json() const;
};

}  // namespace apreid::cli
