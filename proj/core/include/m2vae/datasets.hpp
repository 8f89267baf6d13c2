// Copyright 2026 The m2vae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "m2vae/tensor.hpp"

namespace m2vae {

/// Seeded stream used by every sampler. Single definition so that a
/// checkpoint can serialize it.
using Rng = std::mt19937_64;

/// Token <-> dense index map, indices assigned in first-seen order.
class Vocabulary {
 public:
  std::uint32_t get_or_add(std::string_view token);
  std::optional<std::uint32_t> find(std::string_view token) const;
  const std::string& token(std::uint32_t index) const { return tokens_[index]; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  friend bool operator==(const Interaction&, const Interaction&) = default;
  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

struct InteractionLog {
  std::vector<Interaction> entries;
  std::size_t user_count = 0;
  std::size_t item_count = 0;
  Vocabulary users;
  Vocabulary items;

  /// Throws DataError if an index is out of range or a pair repeats.
  void validate() const;
};

/// Multi-hot attribute rows stored as the sorted indices of their set bits.
struct AttributeMatrix {
  std::size_t attribute_count = 0;
  std::vector<std::vector<std::uint32_t>> rows;
  Vocabulary vocab;
  /// Items whose row has no set bit (absent from the file or empty list).
  std::vector<std::uint32_t> flagged;

  std::vector<double> dense_row(std::size_t item) const;
};

struct Catalog {
  AttributeMatrix attributes;
  /// N x d_img, all finite.
  Tensor image_features;

  std::size_t item_count() const { return attributes.rows.size(); }
  std::size_t attribute_count() const { return attributes.attribute_count; }
  std::size_t image_dim() const { return image_features.cols; }

  void validate() const;
};

/// Rows are `user<TAB>item[<TAB>ignored...]`.
InteractionLog load_interactions(const std::filesystem::path& path);
/// Rows are `item<TAB>attr[,attr...]`. Items not listed get a zero row.
AttributeMatrix load_attributes(const std::filesystem::path& path, const Vocabulary& item_vocab);
/// Binary `M2VF` container or text `item<TAB>v1,v2,...`, detected by magic.
Tensor load_image_features(const std::filesystem::path& path, const Vocabulary& item_vocab,
                           std::size_t d_img);

void write_interactions(const std::filesystem::path& path, const InteractionLog& log);
void write_attributes(const std::filesystem::path& path, const AttributeMatrix& attributes,
                      const Vocabulary& item_vocab);
/// Values are narrowed to float32 little-endian.
void write_image_features_binary(const std::filesystem::path& path, const Tensor& features);
void write_image_features_text(const std::filesystem::path& path, const Tensor& features,
                               const Vocabulary& item_vocab);

/// Brings image features to width d: a seeded Gaussian random projection
/// when wider, zero padding when narrower, identity when equal.
Tensor project_image_features(const Tensor& features, std::size_t d, std::uint64_t seed);

struct ColdSplit {
  std::size_t user_count = 0;
  std::size_t item_count = 0;
  std::vector<std::uint32_t> warm_items;  // sorted
  std::vector<std::uint32_t> cold_items;  // sorted
  std::vector<bool> is_cold;
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
  /// user -> sorted warm items the user interacted with in train.
  std::vector<std::vector<std::uint32_t>> user_histories;
  /// warm item -> sorted users that interacted with it in train.
  std::vector<std::vector<std::uint32_t>> item_users;

  bool in_history(std::uint32_t user, std::uint32_t item) const;
  bool interacted(std::uint32_t item, std::uint32_t user) const;
  /// Stable text encoding; equal splits serialize to equal bytes.
  std::string serialize() const;
};

ColdSplit make_cold_split(const InteractionLog& log, const Catalog& catalog, double cold_fraction,
                          std::uint64_t seed);

struct TrainTriple {
  std::uint32_t item = 0;
  std::uint32_t user = 0;
  std::uint32_t neg_user = 0;
  std::vector<std::uint32_t> co_pos;
  std::vector<std::uint32_t> co_neg;
};

/// Builds the (item, user, negative user, co-occurrence) training triples.
class TripleSampler {
 public:
  explicit TripleSampler(const ColdSplit& split);

  TrainTriple make_triple(const Interaction& positive, std::size_t c_p, std::size_t c_n, Rng& rng) const;

  static constexpr int kMaxRejections = 100;

 private:
  const ColdSplit* split_;
};

/// Draws batch_size train interactions uniformly and expands each one.
std::vector<TrainTriple> sample_batch(const ColdSplit& split, std::size_t batch_size, std::size_t c_p,
                                      std::size_t c_n, Rng& seed_stream);

struct SyntheticSpec {
  std::size_t clusters = 4;
  std::size_t users = 200;
  std::size_t items = 100;
  std::size_t attributes = 24;
  std::size_t feature_dim = 16;
  std::size_t interactions_per_user = 20;
  double noise_scale = 0.1;
  std::uint64_t seed = 7;

  double p_in = 0.8;
  double p_out = 0.05;
  /// Attribute slots reserved per cluster.
  std::size_t cluster_bits = 2;
  /// Number of modality-specific subtypes carried by each content channel.
  std::size_t subtypes = 3;
  /// Scale of the image subtype prototypes.
  double unique_scale = 0.5;
  /// Probability that an unassigned attribute slot is switched on.
  double attribute_noise = 0.05;
  /// Same-cluster items that miss a user's preferred subtype have their
  /// interaction weight multiplied by (1 - unique_affinity).
  double unique_affinity = 0.5;

  void validate() const;
};

/// Ground truth kept alongside generated data, for tests and diagnostics.
struct SyntheticTruth {
  std::vector<std::uint32_t> item_cluster;
  std::vector<std::uint32_t> user_cluster;
  std::vector<std::uint32_t> item_attr_subtype;
  std::vector<std::uint32_t> item_image_subtype;
  /// 0 = attribute-driven user, 1 = image-driven user.
  std::vector<std::uint32_t> user_view;
  std::vector<std::uint32_t> user_subtype;
  Tensor centroids;
  Tensor prototypes;
};

struct SyntheticData {
  InteractionLog log;
  Catalog catalog;
  SyntheticTruth truth;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace m2vae
