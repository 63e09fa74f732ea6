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
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace apreid {

// Thrown by the text parsers; carries the 1-based line number of the offender.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct AttributeDef {
  std::string name;
  std::vector<std::string> classes;  // length m >= 2
};

// Ordered list of M attributes. M >= 1; names unique; class names unique
// within an attribute.
struct AttributeSchema {
  std::vector<AttributeDef> attributes;

  std::size_t num_attributes() const { return attributes.size(); }
  std::size_t class_count(std::size_t i) const { return attributes[i].classes.size(); }
  // Index of a class given by name or by decimal index; throws on unknown.
  std::size_t class_index(std::size_t attr, const std::string& label) const;
};

// Identity-level labels: identity -> M class indices. Attributes are never
// annotated per image; every instance of an identity inherits this row.
struct AnnotationTable {
  std::map<int, std::vector<int>> rows;

  std::size_t size() const { return rows.size(); }
  bool contains(int identity) const { return rows.count(identity) != 0; }
};

// Sentinel identities for gallery-only samples.
inline constexpr int kDistractorId = -1;
inline constexpr int kJunkId = -2;

enum class Split { Train, ValQuery, ValGallery, Query, Gallery };

const char* split_name(Split s);
bool is_gallery_split(Split s);

struct Sample {
  int sample_id = 0;
  int identity = 0;  // >= 0, or kDistractorId / kJunkId
  int camera = 0;    // small positive integer
  Split split = Split::Train;
  int feature_row = -1;  // row in the attached EmbeddingMatrix, -1 if detached

  bool is_distractor() const { return identity == kDistractorId; }
  bool is_junk() const { return identity == kJunkId; }
  bool has_real_identity() const { return identity >= 0; }
};

// Dense row-major float32 matrix of per-sample feature vectors.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> data;  // rows * dim

  const float* row(std::size_t r) const { return data.data() + r * dim; }
  float* row(std::size_t r) { return data.data() + r * dim; }
  std::span<const float> row_span(std::size_t r) const { return {row(r), dim}; }
};

struct DatasetStats {
  // positives[a][c] = number of annotated identities whose attribute a is class c.
  std::vector<std::vector<std::int64_t>> positives;
  // Phi coefficients over binarized attributes, one indicator per class of
  // every attribute (M' = sum of class counts). Symmetric, unit diagonal.
  std::size_t num_indicators = 0;
  std::vector<std::string> indicator_names;  // "attr=class"
  std::vector<double> correlation;           // num_indicators^2, row-major
  std::vector<std::string> warnings;         // e.g. constant indicators

  double corr(std::size_t i, std::size_t j) const { return correlation[i * num_indicators + j]; }
};

// A fully loaded dataset as consumed by the trainer and the evaluators.
struct ReidDataset {
  AttributeSchema schema;
  AnnotationTable annotations;
  std::vector<Sample> samples;
  EmbeddingMatrix features;
};

// --- parsing / serialization -------------------------------------------------

// Schema file: one `name: class0,class1[,...]` per line, `#` comments.
AttributeSchema parse_schema(const std::string& text);
std::string serialize_schema(const AttributeSchema& schema);

// Annotation file: `identity_id label_1 ... label_M`, labels by class name or index.
AnnotationTable parse_annotations(const std::string& text, const AttributeSchema& schema);
std::string serialize_annotations(const AnnotationTable& table, const AttributeSchema& schema);

// Manifest file: `sample_id identity camera split` per line, identity -1 for
// distractors and -2 for junk, split in {train, vquery, vgallery, query, gallery}.
std::vector<Sample> parse_manifest(const std::string& text);
std::string serialize_manifest(const std::vector<Sample>& samples);

// APRE file: magic "APRE", u64 rows, u64 dim, then rows*dim little-endian f32.
// An expectation of 0 accepts whatever the header declares.
EmbeddingMatrix load_embeddings(const std::string& path, std::size_t expected_rows,
                                std::size_t expected_dim);
void save_embeddings(const std::string& path, const EmbeddingMatrix& m);

// Binds features.row(i) to samples[i]; row counts must match.
void attach_features(std::vector<Sample>& samples, const EmbeddingMatrix& features);

// --- per-sample and whole-table operations ----------------------------------

// The identity's attribute vector, verbatim. Distractor/junk samples and
// unannotated identities are errors.
const std::vector<int>& instance_labels(const Sample& sample, const AnnotationTable& table);

std::vector<std::vector<std::int64_t>> attribute_distribution(const AnnotationTable& table,
                                                              const AttributeSchema& schema);

// Phi coefficient matrix over one-indicator-per-class binarization. Constant
// indicators get correlation 0 off-diagonal plus a warning; needs >= 2 rows.
DatasetStats attribute_correlation(const AnnotationTable& table, const AttributeSchema& schema);

}  // namespace apreid
