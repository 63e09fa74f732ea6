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

#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "apreid/dataset.hpp"
#include "apreid/evaluation.hpp"
#include "apreid/model.hpp"
#include "apreid/rng.hpp"
#include "apreid/synth.hpp"
#include "apreid/trainer.hpp"

namespace fs = std::filesystem;

namespace apreid::cli {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << content;
  if (!os) throw std::runtime_error("short write: " + path.string());
}

fs::path out_dir(const RunConfig& config) {
  fs::path dir(config.out);
  fs::create_directories(dir);
  return dir;
}

void write_run_json(const RunConfig& config, const std::string& command) {
  nlohmann::json j = config.to_json();
  j["command"] = command;
  write_file(out_dir(config) / "run.json", j.dump(2) + "\n");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

double effective_lambda(const RunConfig& config) {
  if (config.mode == "baseline2") return 0.0;
  if (config.mode == "baseline1") return 1.0;
  return config.lambda;
}

ReidDataset load_dataset(const RunConfig& config) {
  ReidDataset ds;
  ds.schema = parse_schema(read_file(config.schema));
  ds.annotations = parse_annotations(read_file(config.annotations), ds.schema);
  ds.samples = parse_manifest(read_file(config.manifest));
  ds.features = load_embeddings(config.embeddings, ds.samples.size(), 0);
  attach_features(ds.samples, ds.features);
  return ds;
}

ModelConfig model_config_from(const RunConfig& config, const ReidDataset& ds) {
  ModelConfig mc;
  mc.input_dim = ds.features.dim;
  mc.hidden_dims = config.hidden_dims;
  mc.num_identities = 0;  // derived from the train split
  mc.dropout_rate = config.dropout;
  if (config.mode != "baseline1")
    for (std::size_t a = 0; a < ds.schema.num_attributes(); ++a)
      mc.attribute_class_counts.push_back(ds.schema.class_count(a));
  mc.lambda = effective_lambda(config);
  return mc;
}

TrainConfig train_config_from(const RunConfig& config) {
  TrainConfig tc;
  tc.epochs = config.epochs;
  tc.batch_size = config.batch_size;
  tc.lr_initial = config.lr_initial;
  tc.lr_final = config.lr_final;
  tc.lr_switch_epoch = config.lr_switch_epoch;
  tc.momentum = config.momentum;
  tc.weight_decay = config.weight_decay;
  tc.lambda = effective_lambda(config);
  tc.seed = derive_seed(config.seed, "train");
  tc.threads = config.threads;
  return tc;
}

EvalOptions eval_options_from(const RunConfig& config) {
  EvalOptions opts;
  opts.max_rank = config.max_rank;
  opts.report_ranks = config.report_ranks;
  opts.tile = config.tile;
  opts.threads = config.threads;
  return opts;
}

const char* mode_label(const ModelConfig& mc) {
  if (mc.num_attributes() == 0) return "baseline-1";
  if (mc.lambda == 0.0) return "baseline-2";
  return "apr";
}

// Embeds the listed splits through the trained transform; rows for all other
// samples stay zero and are never read.
EmbeddingMatrix embed_for_eval(const ModelParams& params, const ReidDataset& ds,
                               std::initializer_list<Split> splits) {
  EmbeddingMatrix out;
  out.rows = ds.features.rows;
  out.dim = params.config.embedding_dim();
  out.data.assign(out.rows * out.dim, 0.0f);
  for (const auto& s : ds.samples) {
    bool wanted = false;
    for (auto sp : splits) wanted = wanted || s.split == sp;
    if (!wanted) continue;
    auto row = static_cast<std::size_t>(s.feature_row);
    auto emb = extract_embedding(params, ds.features.row_span(row));
    for (std::size_t k = 0; k < out.dim; ++k)
      out.data[row * out.dim + k] = static_cast<float>(emb[k]);
  }
  return out;
}

}  // namespace

void cmd_synth(const RunConfig& config) {
  SynthConfig sc;
  sc.ids = config.synth_ids;
  sc.cameras = config.synth_cameras;
  sc.samples_per_id_per_camera = config.synth_samples_per_id_per_camera;
  sc.dim = config.synth_dim;
  sc.attribute_class_counts = config.synth_classes;
  sc.noise_sigma = config.synth_sigma;
  sc.coupling = config.synth_coupling;
  sc.camera_offset = config.synth_camera_offset;
  sc.camera_offset_semantic = config.synth_camera_offset_semantic;
  sc.train_ids = config.synth_train_ids;
  sc.val_ids = config.synth_val_ids;
  sc.distractors = config.synth_distractors;

  auto ds = synth_dataset(sc, derive_seed(config.seed, "synth"));

  auto dir = out_dir(config);
  write_run_json(config, "synth");
  write_file(dir / "schema.txt", serialize_schema(ds.schema));
  write_file(dir / "annotations.txt", serialize_annotations(ds.annotations, ds.schema));
  write_file(dir / "manifest.txt", serialize_manifest(ds.samples));
  save_embeddings((dir / "embeddings.apre").string(), ds.features);
  if (!ds.distractor_samples.empty()) {
    write_file(dir / "distractors.txt", serialize_manifest(ds.distractor_samples));
    save_embeddings((dir / "distractors.apre").string(), ds.distractor_features);
  }
  std::cout << "synth: " << ds.samples.size() << " samples, " << ds.distractor_samples.size()
            << " distractors -> " << dir.string() << "\n";
}

void cmd_stats(const RunConfig& config) {
  auto schema = parse_schema(read_file(config.schema));
  auto annotations = parse_annotations(read_file(config.annotations), schema);
  auto stats = attribute_correlation(annotations, schema);

  auto dir = out_dir(config);
  write_run_json(config, "stats");

  std::string dist_csv = "attribute,class,positive_ids\n";
  for (std::size_t a = 0; a < schema.num_attributes(); ++a)
    for (std::size_t c = 0; c < schema.class_count(a); ++c)
      dist_csv += schema.attributes[a].name + "," + schema.attributes[a].classes[c] + "," +
                  std::to_string(stats.positives[a][c]) + "\n";
  write_file(dir / "distribution.csv", dist_csv);

  std::string corr_csv = "indicator";
  for (const auto& name : stats.indicator_names) corr_csv += "," + name;
  corr_csv += "\n";
  for (std::size_t i = 0; i < stats.num_indicators; ++i) {
    corr_csv += stats.indicator_names[i];
    for (std::size_t j = 0; j < stats.num_indicators; ++j)
      corr_csv += "," + fmt(stats.corr(i, j));
    corr_csv += "\n";
  }
  write_file(dir / "correlation.csv", corr_csv);

  nlohmann::json j;
  j["correlation_measure"] = "phi";
  j["num_identities"] = annotations.size();
  j["indicators"] = stats.indicator_names;
  j["correlation"] = stats.correlation;
  j["warnings"] = stats.warnings;
  write_file(dir / "stats.json", j.dump(2) + "\n");
  std::cout << "stats: " << annotations.size() << " identities, " << stats.num_indicators
            << " indicators -> " << dir.string() << "\n";
}

void cmd_train(const RunConfig& config) {
  auto ds = load_dataset(config);
  auto mc = model_config_from(config, ds);
  auto tc = train_config_from(config);

  auto result = train(mc, tc, ds);

  auto dir = out_dir(config);
  write_run_json(config, "train");
  save_checkpoint((dir / "checkpoint.aprm").string(), result.params);
  write_file(dir / "train_log.csv", train_log_csv(result.log, config.emit_timing));

  const auto& last = result.log.rows.back();
  std::cout << "train[" << mode_label(result.params.config) << "]: " << result.log.rows.size()
            << " epochs, final loss " << fmt(last.loss_total) << " (id " << fmt(last.loss_id)
            << ", att " << fmt(last.loss_att_mean) << "), "
            << fmt(std::accumulate(result.log.rows.begin(), result.log.rows.end(), 0.0,
                                   [](double s, const TrainLogRow& r) { return s + r.seconds; }))
            << "s -> " << dir.string() << "\n";
}

namespace {

nlohmann::json report_to_json(const EvalReport& report, const EvalOptions& opts) {
  nlohmann::json j;
  j["map"] = report.map;
  nlohmann::json ranks;
  for (auto r : opts.report_ranks) ranks["rank" + std::to_string(r)] = report.rank_k(r);
  j["cmc_at"] = ranks;
  j["cmc"] = report.cmc.values;
  j["per_query_ap"] = report.per_query_ap;
  j["scored_query_ids"] = report.scored_query_ids;
  j["skipped_query_ids"] = report.skipped_query_ids;
  j["num_queries"] = report.num_queries;
  j["num_gallery"] = report.num_gallery;
  j["num_junk"] = report.num_junk_samples;
  j["num_distractors"] = report.num_distractor_samples;
  return j;
}

}  // namespace

void cmd_eval(const RunConfig& config) {
  auto ds = load_dataset(config);
  if (config.checkpoint.empty()) throw std::runtime_error("eval: checkpoint path required");
  auto params = load_checkpoint(config.checkpoint);
  if (params.config.input_dim != ds.features.dim)
    throw std::runtime_error("eval: checkpoint input dim does not match dataset features");
  auto opts = eval_options_from(config);

  auto embedded = embed_for_eval(params, ds, {Split::Query, Split::Gallery});
  auto report = evaluate_reid(embedded, ds.samples, Split::Query, Split::Gallery, opts);

  auto dir = out_dir(config);
  write_run_json(config, "eval");

  nlohmann::json j = report_to_json(report, opts);
  j["mode"] = mode_label(params.config);
  j["lambda"] = params.config.lambda;
  j["embedding_dim"] = params.config.embedding_dim();

  std::string summary = "key,value\n";
  summary += "mode," + std::string(mode_label(params.config)) + "\n";
  summary += "map," + fmt(report.map) + "\n";
  for (auto r : opts.report_ranks)
    summary += "rank" + std::to_string(r) + "," + fmt(report.rank_k(r)) + "\n";

  if (params.config.num_attributes() > 0) {
    auto acc = attribute_accuracy(params, ds.features, ds.samples, ds.annotations);
    nlohmann::json ja;
    for (std::size_t a = 0; a < acc.per_attribute.size(); ++a)
      ja[ds.schema.attributes[a].name] = acc.per_attribute[a];
    j["attribute_accuracy"] = ja;
    j["attribute_accuracy_mean"] = acc.mean;
    summary += "attribute_accuracy_mean," + fmt(acc.mean) + "\n";
  }

  if (config.camera_pairs) {
    auto pairs = camera_pair_eval(embedded, ds.samples, Split::Query, Split::Gallery, opts);
    nlohmann::json jp;
    jp["cameras"] = pairs.cameras;
    auto matrix_json = [&](const std::vector<double>& m) {
      nlohmann::json rows = nlohmann::json::array();
      const std::size_t nc = pairs.cameras.size();
      for (std::size_t i = 0; i < nc; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t k = 0; k < nc; ++k) {
          double v = m[i * nc + k];
          if (std::isnan(v))
            row.push_back(nullptr);
          else
            row.push_back(v);
        }
        rows.push_back(row);
      }
      return rows;
    };
    jp["map"] = matrix_json(pairs.map);
    jp["rank1"] = matrix_json(pairs.rank1);
    jp["cross_camera_avg_map"] = pairs.cross_camera_avg_map;
    jp["cross_camera_avg_rank1"] = pairs.cross_camera_avg_rank1;
    j["camera_pairs"] = jp;
    summary += "cross_camera_avg_map," + fmt(pairs.cross_camera_avg_map) + "\n";
    summary += "cross_camera_avg_rank1," + fmt(pairs.cross_camera_avg_rank1) + "\n";
  }

  write_file(dir / "eval_report.json", j.dump(2) + "\n");
  write_file(dir / "summary.csv", summary);

  std::string cmc_csv = "rank,accuracy\n";
  for (std::size_t r = 0; r < report.cmc.values.size(); ++r)
    cmc_csv += std::to_string(r + 1) + "," + fmt(report.cmc.values[r]) + "\n";
  write_file(dir / "cmc.csv", cmc_csv);

  std::cout << "eval[" << mode_label(params.config) << "]: rank1 " << fmt(report.rank_k(1))
            << ", mAP " << fmt(report.map) << " (" << report.per_query_ap.size() << "/"
            << report.num_queries << " queries scored) -> " << dir.string() << "\n";
}

void cmd_sweep(const RunConfig& config) {
  auto ds = load_dataset(config);
  auto mc = model_config_from(config, ds);
  auto tc = train_config_from(config);

  auto sweep = sweep_lambda(mc, tc, ds, config.lambda_grid);

  auto dir = out_dir(config);
  write_run_json(config, "sweep");

  std::string csv = "lambda,rank1,map,best\n";
  for (std::size_t i = 0; i < sweep.rows.size(); ++i)
    csv += fmt(sweep.rows[i].lambda) + "," + fmt(sweep.rows[i].rank1) + "," +
           fmt(sweep.rows[i].map) + "," + (i == sweep.best_index ? "1" : "0") + "\n";
  write_file(dir / "sweep.csv", csv);

  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : sweep.rows)
    j["rows"].push_back({{"lambda", row.lambda}, {"rank1", row.rank1}, {"map", row.map}});
  j["best_lambda"] = sweep.rows[sweep.best_index].lambda;
  j["best_rank1"] = sweep.rows[sweep.best_index].rank1;
  write_file(dir / "sweep.json", j.dump(2) + "\n");

  std::cout << "sweep: best lambda " << fmt(sweep.rows[sweep.best_index].lambda) << " (rank1 "
            << fmt(sweep.rows[sweep.best_index].rank1) << ") -> " << dir.string() << "\n";
}

void cmd_ablate(const RunConfig& config) {
  auto ds = load_dataset(config);
  auto mc = model_config_from(config, ds);
  if (mc.num_attributes() == 0)
    throw std::runtime_error("ablate: mode baseline1 has no attribute heads to remove");
  auto tc = train_config_from(config);

  auto rows = ablate_attributes(mc, tc, ds, eval_options_from(config));

  auto dir = out_dir(config);
  write_run_json(config, "ablate");

  std::string csv = "removed_attribute,rank1,map,delta_rank1\n";
  for (const auto& row : rows)
    csv += (row.removed_attribute.empty() ? "(none)" : row.removed_attribute) + "," +
           fmt(row.rank1) + "," + fmt(row.map) + "," + fmt(row.delta_rank1) + "\n";
  write_file(dir / "ablation.csv", csv);

  nlohmann::json j = nlohmann::json::array();
  for (const auto& row : rows)
    j.push_back({{"removed_attribute", row.removed_attribute},
                 {"rank1", row.rank1},
                 {"map", row.map},
                 {"delta_rank1", row.delta_rank1}});
  write_file(dir / "ablation.json", j.dump(2) + "\n");

  std::cout << "ablate: " << rows.size() - 1 << " attribute groups -> " << dir.string() << "\n";
}

void cmd_scale(const RunConfig& config) {
  auto ds = load_dataset(config);
  if (config.checkpoint.empty()) throw std::runtime_error("scale: checkpoint path required");
  if (config.distractor_manifest.empty() || config.distractor_embeddings.empty())
    throw std::runtime_error("scale: distractor manifest and embeddings required");
  auto params = load_checkpoint(config.checkpoint);

  auto pool_samples = parse_manifest(read_file(config.distractor_manifest));
  auto pool_features =
      load_embeddings(config.distractor_embeddings, pool_samples.size(), ds.features.dim);
  attach_features(pool_samples, pool_features);

  auto opts = eval_options_from(config);
  auto embedded = embed_for_eval(params, ds, {Split::Query, Split::Gallery});

  EmbeddingMatrix pool_embedded;
  pool_embedded.rows = pool_features.rows;
  pool_embedded.dim = params.config.embedding_dim();
  pool_embedded.data.reserve(pool_embedded.rows * pool_embedded.dim);
  for (std::size_t r = 0; r < pool_features.rows; ++r) {
    auto emb = extract_embedding(params, pool_features.row_span(r));
    for (double v : emb) pool_embedded.data.push_back(static_cast<float>(v));
  }

  auto rows = distractor_scaling(embedded, ds.samples, pool_embedded, pool_samples,
                                 config.distractor_sizes, derive_seed(config.seed, "scale"),
                                 opts);

  auto dir = out_dir(config);
  write_run_json(config, "scale");

  std::string csv = "distractors,rank1,map\n";
  for (const auto& row : rows)
    csv += std::to_string(row.gallery_size) + "," + fmt(row.rank1) + "," + fmt(row.map) + "\n";
  write_file(dir / "scale.csv", csv);

  nlohmann::json j = nlohmann::json::array();
  for (const auto& row : rows)
    j.push_back({{"distractors", row.gallery_size}, {"rank1", row.rank1}, {"map", row.map}});
  write_file(dir / "scale.json", j.dump(2) + "\n");

  std::cout << "scale: " << rows.size() << " gallery sizes -> " << dir.string() << "\n";
}

}  // namespace apreid::cli
