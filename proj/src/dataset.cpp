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

#include "apreid/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "apreid/binio.hpp"

namespace apreid {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_int(const std::string& s, long& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stol(s, &pos);
  } catch (...) {
    return false;
  }
  return pos == s.size();
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::ValQuery: return "vquery";
    case Split::ValGallery: return "vgallery";
    case Split::Query: return "query";
    case Split::Gallery: return "gallery";
  }
  return "?";
}

bool is_gallery_split(Split s) { return s == Split::Gallery || s == Split::ValGallery; }

std::size_t AttributeSchema::class_index(std::size_t attr, const std::string& label) const {
  const auto& classes = attributes[attr].classes;
  for (std::size_t c = 0; c < classes.size(); ++c)
    if (classes[c] == label) return c;
  long idx = 0;
  if (parse_int(label, idx) && idx >= 0 && static_cast<std::size_t>(idx) < classes.size())
    return static_cast<std::size_t>(idx);
  throw std::runtime_error("unknown class label '" + label + "' for attribute '" +
                           attributes[attr].name + "'");
}

AttributeSchema parse_schema(const std::string& text) {
  AttributeSchema schema;
  std::set<std::string> seen;
  std::istringstream iss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(iss, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t colon = s.find(':');
    if (colon == std::string::npos)
      throw ParseError(lineno, "expected 'name: class0,class1[,...]'");
    AttributeDef def;
    def.name = trim(s.substr(0, colon));
    if (def.name.empty()) throw ParseError(lineno, "empty attribute name");
    if (!seen.insert(def.name).second)
      throw ParseError(lineno, "duplicate attribute name '" + def.name + "'");
    for (const auto& cls : split_on(s.substr(colon + 1), ',')) {
      if (cls.empty()) throw ParseError(lineno, "empty class name in '" + def.name + "'");
      if (std::find(def.classes.begin(), def.classes.end(), cls) != def.classes.end())
        throw ParseError(lineno, "duplicate class '" + cls + "' in '" + def.name + "'");
      def.classes.push_back(cls);
    }
    if (def.classes.size() < 2)
      throw ParseError(lineno, "attribute '" + def.name + "' needs at least 2 classes");
    schema.attributes.push_back(std::move(def));
  }
  if (schema.attributes.empty())
    throw ParseError(lineno, "schema declares no attributes");
  return schema;
}

std::string serialize_schema(const AttributeSchema& schema) {
  std::string out;
  for (const auto& def : schema.attributes) {
    out += def.name + ": ";
    for (std::size_t c = 0; c < def.classes.size(); ++c) {
      if (c) out += ",";
      out += def.classes[c];
    }
    out += "\n";
  }
  return out;
}

AnnotationTable parse_annotations(const std::string& text, const AttributeSchema& schema) {
  AnnotationTable table;
  const std::size_t m = schema.num_attributes();
  std::istringstream iss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(iss, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    auto toks = split_ws(s);
    if (toks.size() != m + 1)
      throw ParseError(lineno, "expected identity plus " + std::to_string(m) + " labels, got " +
                                   std::to_string(toks.size() > 0 ? toks.size() - 1 : 0));
    long id = 0;
    if (!parse_int(toks[0], id) || id < 0)
      throw ParseError(lineno, "identity must be a non-negative integer, got '" + toks[0] + "'");
    if (table.contains(static_cast<int>(id)))
      throw ParseError(lineno, "duplicate identity row " + std::to_string(id));
    std::vector<int> labels(m);
    for (std::size_t a = 0; a < m; ++a) {
      try {
        labels[a] = static_cast<int>(schema.class_index(a, toks[a + 1]));
      } catch (const std::exception& e) {
        throw ParseError(lineno, e.what());
      }
    }
    table.rows.emplace(static_cast<int>(id), std::move(labels));
  }
  return table;
}

std::string serialize_annotations(const AnnotationTable& table, const AttributeSchema& schema) {
  std::string out;
  for (const auto& [id, labels] : table.rows) {
    out += std::to_string(id);
    for (std::size_t a = 0; a < labels.size(); ++a) {
      out += " ";
      out += schema.attributes[a].classes[labels[a]];
    }
    out += "\n";
  }
  return out;
}

namespace {

Split parse_split_token(const std::string& tok, std::size_t lineno) {
  if (tok == "train") return Split::Train;
  if (tok == "vquery") return Split::ValQuery;
  if (tok == "vgallery") return Split::ValGallery;
  if (tok == "query") return Split::Query;
  if (tok == "gallery") return Split::Gallery;
  throw ParseError(lineno, "unknown split token '" + tok + "'");
}

}  // namespace

std::vector<Sample> parse_manifest(const std::string& text) {
  std::vector<Sample> samples;
  std::set<int> seen_ids;
  std::istringstream iss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(iss, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    auto toks = split_ws(s);
    if (toks.size() != 4)
      throw ParseError(lineno, "expected 'sample_id identity camera split'");
    long sid = 0, ident = 0, cam = 0;
    if (!parse_int(toks[0], sid))
      throw ParseError(lineno, "bad sample id '" + toks[0] + "'");
    if (!parse_int(toks[1], ident) || ident < kJunkId)
      throw ParseError(lineno, "bad identity '" + toks[1] + "'");
    if (!parse_int(toks[2], cam) || cam <= 0)
      throw ParseError(lineno, "camera must be a positive integer, got '" + toks[2] + "'");
    Sample sample;
    sample.sample_id = static_cast<int>(sid);
    sample.identity = static_cast<int>(ident);
    sample.camera = static_cast<int>(cam);
    sample.split = parse_split_token(toks[3], lineno);
    if (!sample.has_real_identity() && !is_gallery_split(sample.split))
      throw ParseError(lineno, std::string(sample.is_junk() ? "junk" : "distractor") +
                                   " sample in non-gallery split '" + toks[3] + "'");
    if (!seen_ids.insert(sample.sample_id).second)
      throw ParseError(lineno, "duplicate sample id " + std::to_string(sample.sample_id));
    samples.push_back(sample);
  }
  return samples;
}

std::string serialize_manifest(const std::vector<Sample>& samples) {
  std::string out;
  char buf[96];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof(buf), "%d %d %d %s\n", s.sample_id, s.identity, s.camera,
                  split_name(s.split));
    out += buf;
  }
  return out;
}

EmbeddingMatrix load_embeddings(const std::string& path, std::size_t expected_rows,
                                std::size_t expected_dim) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open embedding file: " + path);
  expect_magic(is, "APRE", "APRE embedding");
  EmbeddingMatrix m;
  m.rows = read_u64(is);
  m.dim = read_u64(is);
  if (expected_rows == 0) expected_rows = m.rows;
  if (expected_dim == 0) expected_dim = m.dim;
  if (m.rows != expected_rows || m.dim != expected_dim)
    throw std::runtime_error("embedding shape mismatch: file is " + std::to_string(m.rows) + "x" +
                             std::to_string(m.dim) + ", expected " + std::to_string(expected_rows) +
                             "x" + std::to_string(expected_dim));
  m.data.resize(m.rows * m.dim);
  if (!is.read(reinterpret_cast<char*>(m.data.data()),
               static_cast<std::streamsize>(m.data.size() * sizeof(float))))
    throw std::runtime_error("embedding file truncated: " + path);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t k = 0; k < m.dim; ++k)
      if (!std::isfinite(m.data[r * m.dim + k]))
        throw std::runtime_error("non-finite embedding value at row " + std::to_string(r));
  return m;
}

void save_embeddings(const std::string& path, const EmbeddingMatrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write embedding file: " + path);
  write_magic(os, "APRE");
  write_u64(os, m.rows);
  write_u64(os, m.dim);
  os.write(reinterpret_cast<const char*>(m.data.data()),
           static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (!os) throw std::runtime_error("short write: " + path);
}

void attach_features(std::vector<Sample>& samples, const EmbeddingMatrix& features) {
  if (samples.size() != features.rows)
    throw std::runtime_error("cannot attach features: " + std::to_string(features.rows) +
                             " rows for " + std::to_string(samples.size()) + " samples");
  for (std::size_t i = 0; i < samples.size(); ++i)
    samples[i].feature_row = static_cast<int>(i);
}

const std::vector<int>& instance_labels(const Sample& sample, const AnnotationTable& table) {
  if (!sample.has_real_identity())
    throw std::runtime_error("sample " + std::to_string(sample.sample_id) +
                             " is a distractor/junk image and carries no attributes");
  auto it = table.rows.find(sample.identity);
  if (it == table.rows.end())
    throw std::runtime_error("identity " + std::to_string(sample.identity) +
                             " missing from annotation table");
  return it->second;
}

std::vector<std::vector<std::int64_t>> attribute_distribution(const AnnotationTable& table,
                                                              const AttributeSchema& schema) {
  std::vector<std::vector<std::int64_t>> counts(schema.num_attributes());
  for (std::size_t a = 0; a < schema.num_attributes(); ++a)
    counts[a].assign(schema.class_count(a), 0);
  for (const auto& [id, labels] : table.rows)
    for (std::size_t a = 0; a < labels.size(); ++a)
      counts[a][labels[a]] += 1;
  return counts;
}

DatasetStats attribute_correlation(const AnnotationTable& table, const AttributeSchema& schema) {
  const std::size_t n = table.size();
  if (n < 2) throw std::runtime_error("attribute correlation needs at least 2 identities");

  DatasetStats stats;
  stats.positives = attribute_distribution(table, schema);

  for (std::size_t a = 0; a < schema.num_attributes(); ++a)
    for (const auto& cls : schema.attributes[a].classes)
      stats.indicator_names.push_back(schema.attributes[a].name + "=" + cls);
  const std::size_t mp = stats.indicator_names.size();
  stats.num_indicators = mp;

  // 0/1 indicator columns, one per (attribute, class).
  std::vector<std::vector<std::uint8_t>> ind(mp, std::vector<std::uint8_t>(n, 0));
  std::size_t row = 0;
  for (const auto& [id, labels] : table.rows) {
    std::size_t base = 0;
    for (std::size_t a = 0; a < labels.size(); ++a) {
      ind[base + labels[a]][row] = 1;
      base += schema.class_count(a);
    }
    ++row;
  }

  std::vector<std::int64_t> ones(mp, 0);
  for (std::size_t i = 0; i < mp; ++i)
    for (std::size_t r = 0; r < n; ++r) ones[i] += ind[i][r];

  for (std::size_t i = 0; i < mp; ++i)
    if (ones[i] == 0 || ones[i] == static_cast<std::int64_t>(n))
      stats.warnings.push_back("indicator '" + stats.indicator_names[i] +
                               "' is constant; correlations set to 0");

  stats.correlation.assign(mp * mp, 0.0);
  const auto nn = static_cast<std::int64_t>(n);
  for (std::size_t i = 0; i < mp; ++i) {
    stats.correlation[i * mp + i] = 1.0;
    for (std::size_t j = i + 1; j < mp; ++j) {
      std::int64_t n11 = 0;
      for (std::size_t r = 0; r < n; ++r) n11 += ind[i][r] & ind[j][r];
      // phi = (n*n11 - ones_i*ones_j) / sqrt(ones_i*(n-ones_i)*ones_j*(n-ones_j))
      double denom = std::sqrt(static_cast<double>(ones[i]) * static_cast<double>(nn - ones[i]) *
                               static_cast<double>(ones[j]) * static_cast<double>(nn - ones[j]));
      double phi = 0.0;
      if (denom > 0.0)
        phi = (static_cast<double>(nn) * static_cast<double>(n11) -
               static_cast<double>(ones[i]) * static_cast<double>(ones[j])) /
              denom;
      stats.correlation[i * mp + j] = phi;
      stats.correlation[j * mp + i] = phi;
    }
  }
  return stats;
}

}  // namespace apreid
