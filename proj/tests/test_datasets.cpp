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
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "m2vae/datasets.hpp"
#include "m2vae/errors.hpp"
#include "test_util.hpp"

using namespace m2vae;

namespace {

Catalog blank_catalog(std::size_t items, std::size_t d = 2) {
  Catalog c;
  c.attributes.rows.resize(items);
  c.image_features = Tensor(items, d, 0.25);
  return c;
}

InteractionLog dense_log(std::size_t users, std::size_t items, std::uint64_t seed, double p = 0.4) {
  InteractionLog log;
  log.user_count = users;
  log.item_count = items;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(p);
  for (std::uint32_t u = 0; u < users; ++u) {
    for (std::uint32_t i = 0; i < items; ++i) {
      if (keep(rng)) log.entries.push_back({u, i});
    }
  }
  return log;
}

}  // namespace

TEST(Ingestion, ThreeRowsGiveTwoUsersTwoItems) {
  testutil::TempDir dir;
  auto log = load_interactions(dir.write("x.tsv", "u1\ti1\nu1\ti2\nu2\ti1\n"));
  EXPECT_EQ(log.user_count, 2u);
  EXPECT_EQ(log.item_count, 2u);
  ASSERT_EQ(log.entries.size(), 3u);
  EXPECT_EQ(log.users.token(0), "u1");
  EXPECT_EQ(log.items.token(1), "i2");
  EXPECT_EQ(log.entries[2], (Interaction{1, 0}));
}

TEST(Ingestion, DuplicatesAreDropped) {
  testutil::TempDir dir;
  auto log = load_interactions(dir.write("x.tsv", "u1\ti1\nu1\ti2\nu1\ti1\nu2\ti1\textra\n"));
  EXPECT_EQ(log.entries.size(), 3u);
  EXPECT_NO_THROW(log.validate());
}

TEST(Ingestion, MalformedRowNamesItsLine) {
  testutil::TempDir dir;
  auto p = dir.write("x.tsv", "u1\ti1\nu1\n");
  try {
    load_interactions(p);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_interactions(dir.write("empty.tsv", "")), DataError);
  EXPECT_THROW(load_interactions(dir / "absent.tsv"), DataError);
}

TEST(Ingestion, AttributesEncodeAndFlagMissingItems) {
  testutil::TempDir dir;
  auto log = load_interactions(dir.write("x.tsv", "u\ti1\nu\ti2\nu\ti3\n"));
  auto attrs = load_attributes(dir.write("a.tsv", "i1\ta,b\ni3\tc\n"), log.items);
  ASSERT_EQ(attrs.attribute_count, 3u);
  EXPECT_EQ(attrs.dense_row(0), (std::vector<double>{1, 1, 0}));
  EXPECT_EQ(attrs.dense_row(1), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(attrs.flagged, (std::vector<std::uint32_t>{1}));

  auto empty_list = load_attributes(dir.write("b.tsv", "i1\t\ni2\ta\ni3\ta\n"), log.items);
  EXPECT_EQ(empty_list.flagged, (std::vector<std::uint32_t>{0}));

  EXPECT_THROW(load_attributes(dir.write("c.tsv", "iX\ta\n"), log.items), DataError);
}

TEST(Ingestion, BinaryFeaturesRoundTripExactly) {
  testutil::TempDir dir;
  Vocabulary items;
  items.get_or_add("i1");
  items.get_or_add("i2");
  Tensor f(2, 4);
  for (std::size_t k = 0; k < f.size(); ++k) f.data[k] = static_cast<float>(0.1 * static_cast<double>(k) - 0.35);
  write_image_features_binary(dir / "f.m2vf", f);
  Tensor back = load_image_features(dir / "f.m2vf", items, 4);
  EXPECT_EQ(back.rows, 2u);
  EXPECT_EQ(back.cols, 4u);
  EXPECT_EQ(back.data, f.data);

  write_image_features_text(dir / "f.tsv", f, items);
  Tensor text = load_image_features(dir / "f.tsv", items, 4);
  EXPECT_EQ(text.data, back.data);

  EXPECT_THROW(load_image_features(dir / "f.m2vf", items, 3), DataError);
}

TEST(Ingestion, BinaryHeaderLayout) {
  testutil::TempDir dir;
  Tensor f(2, 4, 1.5);
  write_image_features_binary(dir / "f.m2vf", f);
  const std::string bytes = testutil::read_file(dir / "f.m2vf");
  ASSERT_EQ(bytes.size(), 4u + 4u + 8u + 4u + 2u * 4u * 4u);
  EXPECT_EQ(bytes.substr(0, 4), "M2VF");
  std::uint64_t n = 0;
  std::uint32_t d = 0;
  std::memcpy(&n, bytes.data() + 8, 8);
  std::memcpy(&d, bytes.data() + 16, 4);
  EXPECT_EQ(n, 2u);
  EXPECT_EQ(d, 4u);
  float first = 0;
  std::memcpy(&first, bytes.data() + 20, 4);
  EXPECT_EQ(first, 1.5f);
}

TEST(Ingestion, BadFeatureRowsAreRejectedByItem) {
  testutil::TempDir dir;
  Vocabulary items;
  items.get_or_add("i1");
  items.get_or_add("i2");
  try {
    load_image_features(dir.write("nan.tsv", "i1\t1,2\ni2\tnan,1\n"), items, 2);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("nan"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_image_features(dir.write("w.tsv", "i1\t1,2\ni2\t1,2,3\n"), items, 2), DataError);
  try {
    load_image_features(dir.write("m.tsv", "i1\t1,2\n"), items, 2);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("i2"), std::string::npos) << e.what();
  }
}

TEST(Split, TenItemsThirtyPercentCold) {
  auto log = dense_log(6, 10, 1, 0.6);
  auto split = make_cold_split(log, blank_catalog(10), 0.3, 5);
  EXPECT_EQ(split.cold_items.size(), 3u);
  EXPECT_EQ(split.warm_items.size(), 7u);
}

TEST(Split, ColdCountIsCeilingOfFraction) {
  for (std::size_t n : {3u, 7u, 10u, 11u, 99u, 100u}) {
    for (double f : {0.1, 0.25, 0.3, 0.5, 0.7}) {
      auto log = dense_log(3, n, n, 0.5);
      const auto expected = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9));
      if (expected == 0 || expected >= n) continue;
      EXPECT_EQ(make_cold_split(log, blank_catalog(n), f, 2).cold_items.size(), expected) << n << " " << f;
    }
  }
}

TEST(Split, PartitionInvariantsHold) {
  auto log = dense_log(30, 40, 3);
  auto split = make_cold_split(log, blank_catalog(40), 0.3, 9);
  std::set<std::uint32_t> warm(split.warm_items.begin(), split.warm_items.end());
  std::set<std::uint32_t> cold(split.cold_items.begin(), split.cold_items.end());
  EXPECT_EQ(warm.size() + cold.size(), 40u);
  for (auto c : cold) EXPECT_EQ(warm.count(c), 0u);
  for (const auto& e : split.train) EXPECT_TRUE(warm.count(e.item));
  for (const auto& e : split.validation) EXPECT_TRUE(cold.count(e.item));
  for (const auto& e : split.test) EXPECT_TRUE(cold.count(e.item));
  EXPECT_EQ(split.train.size() + split.validation.size() + split.test.size(), log.entries.size());
  const auto eval = split.validation.size() + split.test.size();
  EXPECT_EQ(split.validation.size(), eval / 2);
  for (std::uint32_t u = 0; u < 30; ++u) {
    for (auto i : split.user_histories[u]) EXPECT_TRUE(warm.count(i));
  }
}

TEST(Split, SameSeedSameBytes) {
  auto log = dense_log(20, 30, 4);
  auto cat = blank_catalog(30);
  auto a = make_cold_split(log, cat, 0.3, 77).serialize();
  auto b = make_cold_split(log, cat, 0.3, 77).serialize();
  auto c = make_cold_split(log, cat, 0.3, 78).serialize();
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Split, DegenerateFractionsAreErrors) {
  auto log = dense_log(3, 2, 1, 1.0);
  EXPECT_THROW(make_cold_split(log, blank_catalog(2), 0.999, 1), DataError);
  EXPECT_THROW(make_cold_split(log, blank_catalog(2), 0.0, 1), DataError);
  EXPECT_THROW(make_cold_split(log, blank_catalog(2), 1.0, 1), DataError);
  EXPECT_THROW(make_cold_split(log, blank_catalog(3), 0.5, 1), DataError);
}

TEST(Sampler, ShortHistoryUsesMinRule) {
  InteractionLog log;
  log.user_count = 3;
  log.item_count = 40;
  for (std::uint32_t i = 0; i < 40; ++i) log.entries.push_back({1, i});
  for (std::uint32_t i = 0; i < 3; ++i) log.entries.push_back({0, i});
  auto split = make_cold_split(log, blank_catalog(40), 0.05, 1);
  ASSERT_EQ(split.cold_items.size(), 2u);
  TripleSampler sampler(split);
  Rng rng(3);
  const std::uint32_t warm = split.user_histories[0].front();
  auto t = sampler.make_triple({0, warm}, 5, 20, rng);
  EXPECT_EQ(t.co_pos.size(), split.user_histories[0].size());
  EXPECT_LE(t.co_pos.size(), 3u);
  EXPECT_EQ(t.co_neg.size(), 20u);
  std::set<std::uint32_t> distinct(t.co_neg.begin(), t.co_neg.end());
  EXPECT_EQ(distinct.size(), 20u);
  EXPECT_EQ(t.neg_user, 2u);  // user 1 saw everything, user 0 saw the item
}

TEST(Sampler, TenThousandTriplesSatisfyMembership) {
  auto log = dense_log(60, 140, 8, 0.15);
  auto split = make_cold_split(log, blank_catalog(140), 0.3, 2);
  Rng rng(11);
  std::set<Interaction> train(split.train.begin(), split.train.end());
  std::set<std::uint32_t> warm(split.warm_items.begin(), split.warm_items.end());
  std::size_t seen = 0;
  while (seen < 10000) {
    for (const auto& t : sample_batch(split, 100, 5, 20, rng)) {
      ++seen;
      ASSERT_TRUE(train.count({t.user, t.item}));
      ASSERT_FALSE(train.count({t.neg_user, t.item}));
      const auto& h = split.user_histories[t.user];
      ASSERT_EQ(t.co_pos.size(), std::min<std::size_t>(5, h.size()));
      std::set<std::uint32_t> pos(t.co_pos.begin(), t.co_pos.end());
      ASSERT_EQ(pos.size(), t.co_pos.size());
      for (auto i : t.co_pos) ASSERT_TRUE(std::binary_search(h.begin(), h.end(), i));
      ASSERT_EQ(t.co_neg.size(), 20u);
      for (auto i : t.co_neg) {
        ASSERT_TRUE(warm.count(i));
        ASSERT_FALSE(std::binary_search(h.begin(), h.end(), i));
      }
    }
  }
}

TEST(Sampler, SameStreamPositionSameBatch) {
  auto log = dense_log(20, 30, 4);
  auto split = make_cold_split(log, blank_catalog(30), 0.3, 1);
  Rng a(99), b(99);
  auto x = sample_batch(split, 32, 5, 10, a);
  auto y = sample_batch(split, 32, 5, 10, b);
  ASSERT_EQ(x.size(), y.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    EXPECT_EQ(x[k].item, y[k].item);
    EXPECT_EQ(x[k].user, y[k].user);
    EXPECT_EQ(x[k].neg_user, y[k].neg_user);
    EXPECT_EQ(x[k].co_pos, y[k].co_pos);
    EXPECT_EQ(x[k].co_neg, y[k].co_neg);
  }
}

TEST(Sampler, ItemSeenByEveryUserExhaustsRejections) {
  InteractionLog log;
  log.user_count = 3;
  log.item_count = 10;
  for (std::uint32_t u = 0; u < 3; ++u) {
    for (std::uint32_t i = 0; i < 10; ++i) {
      if (i == 0 || (i + u) % 2 == 0) log.entries.push_back({u, i});
    }
  }
  auto cat = blank_catalog(10);
  // Find a seed where item 0 stays warm.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto split = make_cold_split(log, cat, 0.2, seed);
    if (split.is_cold[0]) continue;
    TripleSampler sampler(split);
    Rng rng(1);
    EXPECT_THROW(sampler.make_triple({0, 0}, 2, 1, rng), DataError);
    return;
  }
  FAIL() << "no seed kept item 0 warm";
}

TEST(Synthetic, ZeroNoiseGivesIdenticalCentroidsWithinCluster) {
  SyntheticSpec spec;
  spec.noise_scale = 0.0;
  spec.unique_scale = 0.0;
  auto data = generate_synthetic(spec);
  const auto& f = data.catalog.image_features;
  const auto& cl = data.truth.item_cluster;
  for (std::size_t i = 0; i < f.rows; ++i) {
    for (std::size_t j = i + 1; j < f.rows; ++j) {
      if (cl[i] != cl[j]) continue;
      for (std::size_t k = 0; k < f.cols; ++k) ASSERT_EQ(f(i, k), f(j, k)) << i << " " << j;
    }
  }
}

TEST(Synthetic, NoCrossClusterInteractionsWhenPOutIsZero) {
  SyntheticSpec spec;
  spec.p_out = 0.0;
  auto data = generate_synthetic(spec);
  ASSERT_FALSE(data.log.entries.empty());
  for (const auto& e : data.log.entries) {
    ASSERT_EQ(data.truth.user_cluster[e.user], data.truth.item_cluster[e.item]);
  }
}

TEST(Synthetic, NearestCentroidPurityAboveNinetyFivePercent) {
  SyntheticSpec spec;
  spec.clusters = 4;
  spec.users = 200;
  spec.items = 100;
  spec.noise_scale = 0.1;
  auto data = generate_synthetic(spec);
  const auto& f = data.catalog.image_features;
  const auto& cl = data.truth.item_cluster;
  // Class means estimated from the features themselves, then each item is
  // assigned to the closest mean.
  std::vector<std::vector<double>> mean(spec.clusters, std::vector<double>(f.cols, 0.0));
  std::vector<double> count(spec.clusters, 0.0);
  for (std::size_t i = 0; i < f.rows; ++i) {
    count[cl[i]] += 1;
    for (std::size_t k = 0; k < f.cols; ++k) mean[cl[i]][k] += f(i, k);
  }
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    for (auto& v : mean[c]) v /= std::max(count[c], 1.0);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < f.rows; ++i) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < spec.clusters; ++c) {
      double d2 = 0;
      for (std::size_t k = 0; k < f.cols; ++k) d2 += (f(i, k) - mean[c][k]) * (f(i, k) - mean[c][k]);
      if (d2 < best_d) best_d = d2, best = c;
    }
    correct += best == cl[i];
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(f.rows), 0.95);
}

TEST(Synthetic, SpecValidation) {
  SyntheticSpec spec;
  spec.clusters = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = {};
  spec.noise_scale = -0.1;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Synthetic, SameSeedSameData) {
  SyntheticSpec spec;
  auto a = generate_synthetic(spec);
  auto b = generate_synthetic(spec);
  EXPECT_EQ(a.log.entries, b.log.entries);
  EXPECT_EQ(a.catalog.image_features.data, b.catalog.image_features.data);
  EXPECT_EQ(a.catalog.attributes.rows, b.catalog.attributes.rows);
  EXPECT_NO_THROW(a.log.validate());
  EXPECT_NO_THROW(a.catalog.validate());
}

TEST(Projection, IdentityWhenWidthsMatchAndDeterministicOtherwise) {
  Tensor f(3, 4);
  for (std::size_t k = 0; k < f.size(); ++k) f.data[k] = static_cast<double>(k);
  EXPECT_EQ(project_image_features(f, 4, 1).data, f.data);
  auto p1 = project_image_features(f, 2, 1);
  auto p2 = project_image_features(f, 2, 1);
  EXPECT_EQ(p1.cols, 2u);
  EXPECT_EQ(p1.data, p2.data);
}
