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

#include "apreid/synth.hpp"

#include <stdexcept>
#include <string>

#include "apreid/rng.hpp"

namespace apreid {

namespace {

void validate(const SynthConfig& c) {
  if (c.ids < 2) throw std::invalid_argument("synth: need at least 2 identities");
  if (c.cameras < 2)
    throw std::invalid_argument("synth: need at least 2 cameras for cross-camera retrieval");
  if (c.samples_per_id_per_camera < 1)
    throw std::invalid_argument("synth: samples_per_id_per_camera must be >= 1");
  if (c.attribute_class_counts.empty())
    throw std::invalid_argument("synth: need at least one attribute");
  for (auto m : c.attribute_class_counts)
    if (m < 2) throw std::invalid_argument("synth: every attribute needs >= 2 classes");
  if (c.dim < c.attribute_class_counts.size())
    throw std::invalid_argument("synth: dim must be >= number of attributes");
  if (c.train_ids + c.val_ids >= c.ids)
    throw std::invalid_argument("synth: train_ids + val_ids must leave at least one test id");
  if (c.train_ids < 2 || c.val_ids < 1)
    throw std::invalid_argument("synth: need >= 2 train ids and >= 1 validation id");
  if (c.noise_sigma < 0) throw std::invalid_argument("synth: negative noise sigma");
}

}  // namespace

SynthDataset synth_dataset(const SynthConfig& config, std::uint64_t seed) {
  validate(config);

  const std::size_t num_attrs = config.attribute_class_counts.size();
  const std::size_t dim = config.dim;

  SynthDataset out;

  for (std::size_t a = 0; a < num_attrs; ++a) {
    AttributeDef def;
    def.name = "attr" + std::to_string(a);
    for (std::size_t c = 0; c < config.attribute_class_counts[a]; ++c)
      def.classes.push_back("c" + std::to_string(c));
    out.schema.attributes.push_back(std::move(def));
  }

  // Per-camera offsets, damped on the semantic block.
  Rng cam_rng(derive_seed(seed, "synth.camera"));
  std::vector<std::vector<double>> cam_offsets(config.cameras, std::vector<double>(dim));
  for (std::size_t c = 0; c < config.cameras; ++c)
    for (std::size_t k = 0; k < dim; ++k) {
      double scale = k < num_attrs ? config.camera_offset_semantic : config.camera_offset;
      cam_offsets[c][k] = scale * cam_rng.normal();
    }

  // Identity prototypes. The semantic coordinate and the attribute label come
  // from the same uniform draw (label = quantile bucket, value = probit), so
  // labels are exactly the thresholded coordinates.
  std::vector<std::vector<double>> prototypes(config.ids, std::vector<double>(dim));
  for (std::size_t id = 0; id < config.ids; ++id) {
    Rng rng(derive_seed(seed, "synth.proto", id));
    std::vector<int> labels(num_attrs);
    for (std::size_t a = 0; a < num_attrs; ++a) {
      double u = rng.uniform01();
      auto m = static_cast<double>(config.attribute_class_counts[a]);
      auto cls = static_cast<int>(u * m);
      if (cls >= static_cast<int>(m)) cls = static_cast<int>(m) - 1;
      labels[a] = cls;
      prototypes[id][a] = config.coupling * inverse_normal_cdf(u);
    }
    for (std::size_t k = num_attrs; k < dim; ++k) prototypes[id][k] = rng.normal();
    out.annotations.rows.emplace(static_cast<int>(id), std::move(labels));
  }

  Rng noise_rng(derive_seed(seed, "synth.noise"));
  Rng pick_rng(derive_seed(seed, "synth.query-pick"));

  int next_sample_id = 0;
  auto emit = [&](int identity, std::size_t camera, Split split) {
    Sample s;
    s.sample_id = next_sample_id++;
    s.identity = identity;
    s.camera = static_cast<int>(camera) + 1;
    s.split = split;
    s.feature_row = static_cast<int>(out.samples.size());
    out.samples.push_back(s);
    const auto& proto =
        identity >= 0 ? prototypes[static_cast<std::size_t>(identity)] : prototypes[0];
    for (std::size_t k = 0; k < dim; ++k) {
      double v = proto[k] + cam_offsets[camera][k] + config.noise_sigma * noise_rng.normal();
      out.features.data.push_back(static_cast<float>(v));
    }
  };

  const std::size_t spc = config.samples_per_id_per_camera;
  for (std::size_t id = 0; id < config.ids; ++id) {
    bool is_train = id < config.train_ids;
    bool is_val = !is_train && id < config.train_ids + config.val_ids;
    for (std::size_t cam = 0; cam < config.cameras; ++cam) {
      // One seeded-random probe image per identity per camera; the rest are gallery.
      std::size_t probe = pick_rng.bounded(spc);
      for (std::size_t k = 0; k < spc; ++k) {
        Split split = Split::Train;
        if (!is_train) {
          bool is_probe = (k == probe);
          if (is_val)
            split = is_probe ? Split::ValQuery : Split::ValGallery;
          else
            split = is_probe ? Split::Query : Split::Gallery;
        }
        emit(static_cast<int>(id), cam, split);
      }
    }
  }
  out.features.rows = out.samples.size();
  out.features.dim = dim;

  // Distractor pool: fresh prototypes drawn from the same generative law,
  // one sample each, never annotated.
  Rng dis_rng(derive_seed(seed, "synth.distractor"));
  for (std::size_t d = 0; d < config.distractors; ++d) {
    Sample s;
    s.sample_id = next_sample_id++;
    s.identity = kDistractorId;
    s.camera = static_cast<int>(dis_rng.bounded(config.cameras)) + 1;
    s.split = Split::Gallery;
    s.feature_row = static_cast<int>(out.distractor_samples.size());
    out.distractor_samples.push_back(s);
    for (std::size_t k = 0; k < dim; ++k) {
      double proto = k < num_attrs ? config.coupling * dis_rng.normal() : dis_rng.normal();
      double scale = k < num_attrs ? config.camera_offset_semantic : config.camera_offset;
      double v = proto + scale * dis_rng.normal() + config.noise_sigma * dis_rng.normal();
      out.distractor_features.data.push_back(static_cast<float>(v));
    }
  }
  out.distractor_features.rows = out.distractor_samples.size();
  out.distractor_features.dim = dim;

  return out;
}

}  // namespace apreid
