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

// Run configuration for the command-line tool: a JSON object with the
// data source, split settings, output directory, training config and
// ablation/sweep selections. Unknown keys at any level are rejected.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "m2vae/datasets.hpp"
#include "m2vae/training.hpp"

namespace m2vae::cli {

struct DataSource {
  std::optional<SyntheticSpec> synthetic;
  std::filesystem::path interactions;
  std::filesystem::path attributes;
  std::filesystem::path features;
  /// Width of the feature file; required for text features.
  std::size_t feature_dim = 0;
};

struct SweepSpec {
  std::string parameter;
  std::vector<double> values;
};

struct RunConfig {
  DataSource data;
  double cold_fraction = 0.3;
  std::uint64_t split_seed = 0;
  std::uint64_t projection_seed = 0;
  std::filesystem::path output_dir;
  TrainConfig train;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  SweepSpec sweep;

  /// Relative data paths are resolved against base_dir.
  static RunConfig from_json(const std::string& text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
  /// Fully resolved form, with absolute paths.
  std::string to_json() const;
};

std::string synthetic_spec_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const std::string& text);

struct Dataset {
  InteractionLog log;
  Catalog catalog;  // image features at their native width
  ColdSplit split;
};

/// Generates or loads the data and builds the cold split. Missing files
/// raise DataError before anything else happens.
Dataset load_dataset(const RunConfig& config);

}  // namespace m2vae::cli
