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

#include <random>

#include "m2vae/datasets.hpp"
#include "m2vae/params.hpp"
#include "m2vae/training.hpp"

namespace fixture {

// Every parameter drawn uniformly from [-scale, scale]; independent of the
// library initializer.
inline m2vae::ModelParams random_params(const m2vae::ModelDims& dims, m2vae::Variant variant,
                                        std::uint64_t seed, double scale = 0.8) {
  auto p = m2vae::ModelParams::allocate(dims, variant);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  p.visit_mutable([&](std::string_view, m2vae::Tensor& t) {
    for (auto& v : t.data) v = u(rng);
  });
  return p;
}

inline m2vae::ModelDims tiny_dims(std::size_t d = 3, std::size_t hidden = 4) {
  return {.users = 5, .items = 6, .attributes = 4, .d = d, .hidden = hidden};
}

// Items with a mix of attribute counts, including one without attributes.
inline m2vae::Catalog tiny_catalog(std::size_t items, std::size_t attributes, std::size_t d,
                                   std::uint64_t seed) {
  m2vae::Catalog c;
  c.attributes.attribute_count = attributes;
  c.attributes.rows.resize(items);
  c.image_features = m2vae::Tensor(items, d);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t i = 0; i < items; ++i) {
    for (std::uint32_t a = 0; a < attributes; ++a) {
      if ((i + a) % 3 != 0 && i != 1) c.attributes.rows[i].push_back(a);
    }
    for (std::size_t k = 0; k < d; ++k) c.image_features(i, k) = u(rng);
  }
  return c;
}

inline std::vector<double> normal_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = z(rng);
  return v;
}

// A synthetic instance small enough for a full training run in well under a
// second: d = 4, 12 users, 10 items.
struct Problem {
  m2vae::SyntheticData data;
  m2vae::Catalog catalog;
  m2vae::ColdSplit split;
  m2vae::TrainConfig config;
  m2vae::ModelDims dims;
};

inline Problem small_problem(m2vae::Variant variant = m2vae::Variant::kFull, std::uint64_t seed = 3) {
  Problem p;
  m2vae::SyntheticSpec spec;
  spec.clusters = 2;
  spec.users = 12;
  spec.items = 10;
  spec.attributes = 6;
  spec.feature_dim = 4;
  spec.interactions_per_user = 4;
  spec.cluster_bits = 1;
  spec.subtypes = 2;
  spec.seed = seed;
  p.data = m2vae::generate_synthetic(spec);
  p.config.d = 4;
  p.config.hidden = 6;
  p.config.batch_size = 8;
  p.config.epochs = 3;
  p.config.c_p = 3;
  p.config.c_n = 4;
  p.config.learning_rate = 1e-2;
  p.config.variant = variant;
  p.catalog = m2vae::prepare_catalog(p.data.catalog, p.config.d);
  p.split = m2vae::make_cold_split(p.data.log, p.catalog, 0.3, seed);
  p.dims = m2vae::model_dims(p.config, p.split, p.catalog);
  return p;
}

}  // namespace fixture
