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

// Checkpoint container:
//   "M2VC" | u32 version | u64 manifest bytes | manifest JSON
//          | u64 payload bytes | payload (little-endian float64)
// The manifest holds the config, tensor name -> (shape, offset) map, RNG
// state and early-stopping counters. Tensors are stored under the prefixes
// param/, adam.m/, adam.v/ and best/.

#include <filesystem>
#include <optional>

#include "m2vae/training.hpp"

namespace m2vae {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  TrainingState state;
};

/// Writes to a sibling temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const TrainConfig& config, const TrainingState& state);

/// Throws DataError on a malformed or truncated file. When expected is
/// given, a tensor whose shape differs is an error naming that tensor.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelDims>& expected = {});

}  // namespace m2vae
