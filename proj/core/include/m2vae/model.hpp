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

// Forward computations: type-specific Gaussian encoders, attention pooling,
// product-of-experts common view, user-conditioned gating, view fusion,
// joint posterior, conditional decoder and cold-item scoring.
//
// Convention for every Gaussian: heads emit a log-variance s, so the
// sampling std is exp(s/2) and the PoE precision is 1 / (exp(s) + 1e-8).
//
// The graph namespace builds differentiable computations on an ad::Tape;
// the free functions below it are value-level wrappers over the same code.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "m2vae/autodiff.hpp"
#include "m2vae/datasets.hpp"
#include "m2vae/params.hpp"

namespace m2vae {

inline constexpr double kPrecisionEpsilon = 1e-8;

struct GaussianLatent {
  std::vector<double> mean;
  std::vector<double> log_var;

  std::size_t dim() const { return mean.size(); }
  std::vector<double> stddev() const;
  std::vector<double> precision() const;
  bool finite() const;
};

enum class View { kAttribute, kImage };
enum class Activation { kTanh, kLinear };

struct ModelOptions {
  /// Replace the linear log-variance mix of the view fusion with the
  /// moment-matched Gaussian of the gate-weighted mixture. Off by default.
  bool moment_matched_fusion = false;
  /// Linear is only meant for gradient-check toys.
  Activation decoder_activation = Activation::kTanh;
};

/// Standard-normal draws for the four sampled latents of one example.
struct LatentNoise {
  std::vector<double> attr, image, common, joint;

  static LatentNoise zeros(std::size_t d);
  static LatentNoise draw(std::size_t d, Rng& rng);
};

struct ItemContent {
  std::span<const std::uint32_t> attributes;
  std::span<const double> image;
};

ItemContent item_content(const Catalog& catalog, std::uint32_t item);

/// Every intermediate of one training forward pass.
struct ForwardTrace {
  GaussianLatent z_id, z_attr, z_image, z_common, z_fused, z_joint;
  std::vector<double> sample_attr, sample_image, sample_common, sample_joint;
  double gate_attr = 0.5;
  double gate_image = 0.5;
  std::vector<double> pooled_attr;     // a_i
  std::vector<double> image;           // c_i
  std::vector<double> item_embedding;  // e_i
  std::vector<double> user_embedding;  // u_t
  std::vector<double> e_new;
};

namespace graph {

struct GaussianVar {
  ad::Var mean;
  ad::Var log_var;

  GaussianLatent values() const { return {mean.to_vector(), log_var.to_vector()}; }
};

GaussianVar constant(ad::Tape& tape, const GaussianLatent& z);

GaussianVar encode(ad::Var x, const ParamBinder& p, GaussianHead ModelParams::*head);
ad::Var atten_pool(ad::Tape& tape, std::span<const std::uint32_t> active, const ParamBinder& p);

/// Precision-weighted product of experts. When scales is non-empty each
/// expert's precision is multiplied by the matching (size-1) scale.
GaussianVar poe(std::span<const GaussianVar> experts, std::span<const ad::Var> scales = {});
ad::Var reparameterize(const GaussianVar& z, ad::Var noise);
ad::Var self_gate(ad::Var user, View view, const ParamBinder& p);
/// Size-2 softmax (attr, image) over the per-view MoE logits.
ad::Var moe_gate(ad::Var user_attr, ad::Var user_image, ad::Var z_attr, ad::Var z_image, const ParamBinder& p);
GaussianVar fuse_views(const GaussianVar& z_attr, const GaussianVar& z_image, const GaussianVar& z_common,
                       ad::Var gates, Variant variant, const ModelOptions& options, const ParamBinder& p);
GaussianVar fuse_joint(const GaussianVar& z_id, const GaussianVar& z_fused);
ad::Var decode(ad::Var z, ad::Var pooled_attr, ad::Var image, const ParamBinder& p, Activation act);

/// Content-side latents of one item; independent of the user.
struct ContentVars {
  ad::Var pooled_attr;
  ad::Var image;
  GaussianVar attr;
  GaussianVar image_latent;
  GaussianVar common;
};

ContentVars encode_content(ad::Tape& tape, const ItemContent& item, const ParamBinder& p);

/// Fusion gates for the variant; user-independent variants return (0.5, 0.5).
ad::Var gates_for(ad::Tape& tape, ad::Var user, ad::Var z_attr, ad::Var z_image, const ParamBinder& p);

struct TraceVars {
  ad::Var item_embedding, user_embedding;
  GaussianVar id;
  ContentVars content;
  ad::Var sample_attr, sample_image, sample_common;
  ad::Var gates;
  GaussianVar fused;
  GaussianVar joint;
  ad::Var sample_joint;
  ad::Var e_new;

  ForwardTrace values() const;
};

TraceVars forward_train(ad::Tape& tape, const ParamBinder& p, const ModelOptions& options,
                        const ItemContent& item, std::uint32_t item_id, std::uint32_t user_id,
                        const LatentNoise& noise);

/// Deterministic cold-item path: gates from the latent means, z = mu_f,
/// e_new = decode(mu_f, a_i, c_i). Never reads the item ID embedding.
ad::Var infer_cold(ad::Tape& tape, const ParamBinder& p, const ModelOptions& options, const ItemContent& item,
                   ad::Var user);

}  // namespace graph

GaussianLatent encode_id(std::span<const double> e, const ModelParams& params);
std::vector<double> atten_pool(std::span<const std::uint32_t> active, const ModelParams& params);
GaussianLatent encode_attr(std::span<const std::uint32_t> active, const ModelParams& params);
GaussianLatent encode_image(std::span<const double> c, const ModelParams& params);
GaussianLatent poe_common(const GaussianLatent& z_attr, const GaussianLatent& z_image);
std::vector<double> reparameterize(const GaussianLatent& z, std::span<const double> noise);
std::vector<double> self_gate(std::span<const double> user, View view, const ModelParams& params);

struct Gates {
  double attr = 0.5;
  double image = 0.5;
};

Gates moe_gate(std::span<const double> user_attr, std::span<const double> user_image,
               std::span<const double> z_attr, std::span<const double> z_image, const ModelParams& params);
GaussianLatent fuse_views(const GaussianLatent& z_attr, const GaussianLatent& z_image,
                          const GaussianLatent& z_common, Gates gates, const ModelParams& params,
                          const ModelOptions& options = {});
GaussianLatent fuse_joint(const GaussianLatent& z_id, const GaussianLatent& z_fused);
std::vector<double> decode(std::span<const double> z, std::span<const double> pooled_attr,
                           std::span<const double> image, const ModelParams& params,
                           const ModelOptions& options = {});

ForwardTrace forward_train(const ModelParams& params, const ModelOptions& options, const Catalog& catalog,
                           std::uint32_t item, std::uint32_t user, const LatentNoise& noise);

struct ColdScore {
  std::vector<double> e_new;
  double score = 0.0;
};

/// Throws DataError when the item has neither attributes nor a non-zero
/// image feature vector.
ColdScore infer_cold(const ModelParams& params, const ModelOptions& options, const ItemContent& item,
                     std::span<const double> user_embedding);
ColdScore infer_cold(const ModelParams& params, const ModelOptions& options, const Catalog& catalog,
                     std::uint32_t item, std::uint32_t user);

}  // namespace m2vae
