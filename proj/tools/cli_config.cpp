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

#include "cli_config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace apreid::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos != v.size()) throw std::invalid_argument("config: bad number for " + key + ": " + v);
  return d;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long u = 0;
  try {
    u = std::stoull(v, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos != v.size()) throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  return static_cast<std::size_t>(u);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

template <typename T, typename Conv>
std::vector<T> to_list(const std::string& key, const std::string& v, Conv conv) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(conv(key, trim(tok)));
  return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "schema") schema = value;
  else if (key == "annotations") annotations = value;
  else if (key == "manifest") manifest = value;
  else if (key == "embeddings") embeddings = value;
  else if (key == "distractor_manifest") distractor_manifest = value;
  else if (key == "distractor_embeddings") distractor_embeddings = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "out") out = value;
  else if (key == "hidden_dims") hidden_dims = to_list<std::size_t>(key, value, to_size);
  else if (key == "dropout") dropout = to_double(key, value);
  else if (key == "mode") {
    if (value != "apr" && value != "baseline1" && value != "baseline2")
      throw std::invalid_argument("config: mode must be apr, baseline1 or baseline2");
    mode = value;
  }
  else if (key == "epochs") epochs = to_size(key, value);
  else if (key == "batch_size") batch_size = to_size(key, value);
  else if (key == "lr_initial") lr_initial = to_double(key, value);
  else if (key == "lr_final") lr_final = to_double(key, value);
  else if (key == "lr_switch_epoch") lr_switch_epoch = to_size(key, value);
  else if (key == "momentum") momentum = to_double(key, value);
  else if (key == "weight_decay") weight_decay = to_double(key, value);
  else if (key == "lambda") lambda = to_double(key, value);
  else if (key == "emit_timing") emit_timing = to_bool(key, value);
  else if (key == "synth_ids") synth_ids = to_size(key, value);
  else if (key == "synth_cameras") synth_cameras = to_size(key, value);
  else if (key == "synth_samples_per_id_per_camera")
    synth_samples_per_id_per_camera = to_size(key, value);
  else if (key == "synth_dim") synth_dim = to_size(key, value);
  else if (key == "synth_classes") synth_classes = to_list<std::size_t>(key, value, to_size);
  else if (key == "synth_sigma") synth_sigma = to_double(key, value);
  else if (key == "synth_coupling") synth_coupling = to_double(key, value);
  else if (key == "synth_camera_offset") synth_camera_offset = to_double(key, value);
  else if (key == "synth_camera_offset_semantic")
    synth_camera_offset_semantic = to_double(key, value);
  else if (key == "synth_train_ids") synth_train_ids = to_size(key, value);
  else if (key == "synth_val_ids") synth_val_ids = to_size(key, value);
  else if (key == "synth_distractors") synth_distractors = to_size(key, value);
  else if (key == "max_rank") max_rank = to_size(key, value);
  else if (key == "report_ranks") report_ranks = to_list<std::size_t>(key, value, to_size);
  else if (key == "camera_pairs") camera_pairs = to_bool(key, value);
  else if (key == "tile") tile = to_size(key, value);
  else if (key == "lambda_grid") lambda_grid = to_list<double>(key, value, to_double);
  else if (key == "distractor_sizes")
    distractor_sizes = to_list<std::size_t>(key, value, to_size);
  else if (key == "seed") seed = to_size(key, value);
  else if (key == "threads") threads = to_size(key, value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
}

void RunConfig::apply_overrides(const std::vector<std::string>& key_value_pairs) {
  for (const auto& kv : key_value_pairs) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["schema"] = schema;
  j["annotations"] = annotations;
  j["manifest"] = manifest;
  j["embeddings"] = embeddings;
  j["distractor_manifest"] = distractor_manifest;
  j["distractor_embeddings"] = distractor_embeddings;
  j["checkpoint"] = checkpoint;
  j["out"] = out;
  j["hidden_dims"] = hidden_dims;
  j["dropout"] = dropout;
  j["mode"] = mode;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr_initial"] = lr_initial;
  j["lr_final"] = lr_final;
  j["lr_switch_epoch"] = lr_switch_epoch;
  j["momentum"] = momentum;
  j["weight_decay"] = weight_decay;
  j["lambda"] = lambda;
  j["emit_timing"] = emit_timing;
  j["synth_ids"] = synth_ids;
  j["synth_cameras"] = synth_cameras;
  j["synth_samples_per_id_per_camera"] = synth_samples_per_id_per_camera;
  j["synth_dim"] = synth_dim;
  j["synth_classes"] = synth_classes;
  j["synth_sigma"] = synth_sigma;
  j["synth_coupling"] = synth_coupling;
  j["synth_camera_offset"] = synth_camera_offset;
  j["synth_camera_offset_semantic"] = synth_camera_offset_semantic;
  j["synth_train_ids"] = synth_train_ids;
  j["synth_val_ids"] = synth_val_ids;
  j["synth_distractors"] = synth_distractors;
  j["max_rank"] = max_rank;
  j["report_ranks"] = report_ranks;
  j["camera_pairs"] = camera_pairs;
  j["tile"] = tile;
  j["lambda_grid"] = lambda_grid;
  j["distractor_sizes"] = distractor_sizes;
  j["seed"] = seed;
  j["threads"] = threads;
  return j;
}

}  // namespace apreid::cli
