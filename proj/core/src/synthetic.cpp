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
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "m2vae/datasets.hpp"
#include "m2vae/errors.hpp"

namespace m2vae {

void SyntheticSpec::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("synthetic: ") + name + " must be positive");
  };
  positive(clusters, "clusters");
  positive(users, "users");
  positive(items, "items");
  positive(attributes, "attributes");
  positive(feature_dim, "feature_dim");
  positive(interactions_per_user, "interactions_per_user");
  positive(subtypes, "subtypes");
  if (!(noise_scale >= 0.0)) throw ConfigError("synthetic: noise_scale must be >= 0");
  if (!(unique_scale >= 0.0)) throw ConfigError("synthetic: unique_scale must be >= 0");
  if (!(p_in >= 0.0 && p_in <= 1.0 && p_out >= 0.0 && p_out <= 1.0)) {
    throw ConfigError("synthetic: p_in and p_out must lie in [0, 1]");
  }
  if (!(attribute_noise >= 0.0 && attribute_noise <= 1.0)) {
    throw ConfigError("synthetic: attribute_noise must lie in [0, 1]");
  }
  if (!(unique_affinity >= 0.0 && unique_affinity <= 1.0)) {
    throw ConfigError("synthetic: unique_affinity must lie in [0, 1]");
  }
  if (attributes < clusters * cluster_bits + subtypes) {
    throw ConfigError("synthetic: need at least clusters * cluster_bits + subtypes = " +
                      std::to_string(clusters * cluster_bits + subtypes) + " attribute slots");
  }
}

namespace {

// Balanced assignment: label i % k, then shuffled.
std::vector<std::uint32_t> balanced_labels(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::uint32_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::uint32_t>(i % k);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n_items = spec.items;
  const std::size_t n_users = spec.users;
  const std::size_t d = spec.feature_dim;
  const std::size_t k = spec.clusters;
  const std::size_t s = spec.subtypes;

  SyntheticData out;
  SyntheticTruth& truth = out.truth;
  truth.item_cluster = balanced_labels(n_items, k, rng);
  truth.user_cluster = balanced_labels(n_users, k, rng);
  truth.item_attr_subtype.resize(n_items);
  truth.item_image_subtype.resize(n_items);
  std::uniform_int_distribution<std::uint32_t> pick_subtype(0, static_cast<std::uint32_t>(s - 1));
  for (std::size_t i = 0; i < n_items; ++i) {
    truth.item_attr_subtype[i] = pick_subtype(rng);
    truth.item_image_subtype[i] = pick_subtype(rng);
  }
  truth.user_view.resize(n_users);
  truth.user_subtype.resize(n_users);
  for (std::size_t u = 0; u < n_users; ++u) {
    truth.user_view[u] = unit(rng) < 0.5 ? 0u : 1u;
    truth.user_subtype[u] = pick_subtype(rng);
  }

  truth.centroids = Tensor(k, d);
  for (auto& v : truth.centroids.data) v = normal(rng);
  truth.prototypes = Tensor(s, d);
  for (auto& v : truth.prototypes.data) v = spec.unique_scale * normal(rng);

  // Attribute slots: [cluster bits | subtype bits | noise-only bits].
  AttributeMatrix& attrs = out.catalog.attributes;
  for (std::size_t j = 0; j < spec.attributes; ++j) attrs.vocab.get_or_add("a" + std::to_string(j));
  attrs.attribute_count = spec.attributes;
  attrs.rows.resize(n_items);
  const std::size_t subtype_base = k * spec.cluster_bits;
  for (std::size_t i = 0; i < n_items; ++i) {
    std::vector<bool> on(spec.attributes, false);
    for (std::size_t b = 0; b < spec.cluster_bits; ++b) on[truth.item_cluster[i] * spec.cluster_bits + b] = true;
    on[subtype_base + truth.item_attr_subtype[i]] = true;
    for (std::size_t j = 0; j < spec.attributes; ++j) {
      const bool assigned = on[j];
      if (!assigned && unit(rng) < spec.attribute_noise) on[j] = true;
    }
    for (std::size_t j = 0; j < spec.attributes; ++j) {
      if (on[j]) attrs.rows[i].push_back(static_cast<std::uint32_t>(j));
    }
    if (attrs.rows[i].empty()) attrs.flagged.push_back(static_cast<std::uint32_t>(i));
  }

  // Features pass through float32 so that every on-disk encoding reproduces them.
  Tensor& feats = out.catalog.image_features;
  feats = Tensor(n_items, d);
  for (std::size_t i = 0; i < n_items; ++i) {
    const auto c = truth.centroids.row(truth.item_cluster[i]);
    const auto p = truth.prototypes.row(truth.item_image_subtype[i]);
    for (std::size_t j = 0; j < d; ++j) {
      const double noise = spec.noise_scale > 0.0 ? spec.noise_scale * normal(rng) : 0.0;
      feats(i, j) = static_cast<float>(c[j] + p[j] + noise);
    }
  }

  // Weighted sampling without replacement (exponential keys), per user.
  InteractionLog& log = out.log;
  for (std::size_t u = 0; u < n_users; ++u) log.users.get_or_add("u" + std::to_string(u));
  for (std::size_t i = 0; i < n_items; ++i) log.items.get_or_add("i" + std::to_string(i));
  log.user_count = n_users;
  log.item_count = n_items;
  std::vector<std::pair<double, std::uint32_t>> keys;
  for (std::size_t u = 0; u < n_users; ++u) {
    keys.clear();
    for (std::size_t i = 0; i < n_items; ++i) {
      double w = spec.p_out;
      if (truth.item_cluster[i] == truth.user_cluster[u]) {
        const std::uint32_t item_subtype =
            truth.user_view[u] == 0 ? truth.item_attr_subtype[i] : truth.item_image_subtype[i];
        w = spec.p_in * (item_subtype == truth.user_subtype[u] ? 1.0 : 1.0 - spec.unique_affinity);
      }
      const double r = unit(rng);
      if (w <= 0.0) continue;
      keys.emplace_back(std::log(std::max(r, 1e-300)) / w, static_cast<std::uint32_t>(i));
    }
    const std::size_t take = std::min(spec.interactions_per_user, keys.size());
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(take), keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    std::vector<std::uint32_t> chosen;
    for (std::size_t t = 0; t < take; ++t) chosen.push_back(keys[t].second);
    std::sort(chosen.begin(), chosen.end());
    for (auto i : chosen) log.entries.push_back({static_cast<std::uint32_t>(u), i});
  }
  return out;
}

}  // namespace m2vae
