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

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace m2vae {

/// Model/objective variants. Only `full` is the complete model; the rest
/// each remove or replace one component.
enum class Variant {
  kFull,
  kWoCommon,
  kEarlyGenerate,
  kNaiveMoe,
  kWeightedPoe,
  kWoDcl,
  kWoCo,
};

inline constexpr std::array<Variant, 7> kAllVariants = {
    Variant::kFull,     Variant::kWoCommon,    Variant::kEarlyGenerate, Variant::kNaiveMoe,
    Variant::kWeightedPoe, Variant::kWoDcl, Variant::kWoCo,
};

std::string_view variant_name(Variant v);
std::string_view variant_description(Variant v);
std::optional<Variant> parse_variant(std::string_view name);
/// Comma-separated list of every valid name, for error messages.
std::string variant_names();

}  // namespace m2vae
