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
#include <functional>
#include <string>
#include <string_view>

#include "m2vae/autodiff.hpp"
#include "m2vae/tensor.hpp"
#include "m2vae/variant.hpp"

namespace m2vae {

/// Shapes of the model. Latent, embedding and (projected) image widths are
/// all tied to d.
struct ModelDims {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t attributes = 0;
  std::size_t d = 0;
  std::size_t hidden = 0;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Affine heads producing a diagonal Gaussian (mean, log-variance).
struct GaussianHead {
  Tensor w_mu, b_mu, w_logvar, b_logvar;
  friend bool operator==(const GaussianHead&, const GaussianHead&) = default;
};

/// Every trainable tensor. Tensors a variant does not use stay empty and
/// are skipped by visit().
struct ModelParams {
  ModelDims dims;
  Variant variant = Variant::kFull;

  Tensor user_emb;      // M x d
  Tensor item_emb;      // N x d
  Tensor attr_emb;      // n x d
  Tensor attn_query;    // 1 x d
  Tensor attr_default;  // 1 x d

  GaussianHead enc_id;
  GaussianHead enc_attr;
  GaussianHead enc_image;

  Tensor gate_attr_w, gate_attr_b;
  Tensor gate_image_w, gate_image_b;

  Tensor moe_attr_w, moe_image_w;  // d x d
  Tensor moe_a;                    // 1 x d, shared across views

  Tensor dec_w1, dec_b1;  // 3d x h, 1 x h
  Tensor dec_w2, dec_b2;  // h x d, 1 x d

  // early_generate: concat(a_i, c_i) -> tanh layer -> Gaussian head.
  Tensor early_w1, early_b1;
  GaussianHead early_head;
  // weighted_poe: log of the per-view precision multipliers (attr, image, common).
  Tensor wpoe_log_w;

  /// Zero-filled tensors of the right shapes for dims and variant.
  static ModelParams allocate(const ModelDims& dims, Variant variant);

  ModelParams zeros_like() const;

  /// Calls f(name, tensor) for every non-empty tensor in a fixed order.
  void visit(const std::function<void(std::string_view, const Tensor&)>& f) const;
  void visit_mutable(const std::function<void(std::string_view, Tensor&)>& f);

  std::size_t parameter_count() const;
  bool all_finite() const;
  Tensor* find(std::string_view name);
  const Tensor* find(std::string_view name) const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Pairs each parameter with the tensor that receives its gradient.
class ParamBinder {
 public:
  ParamBinder(const ModelParams& params, ModelParams* grads) : params_(&params), grads_(grads) {}

  ad::ParamRef operator()(Tensor ModelParams::*member) const {
    return {&(params_->*member), grads_ ? &(grads_->*member) : nullptr};
  }
  ad::ParamRef operator()(GaussianHead ModelParams::*head, Tensor GaussianHead::*member) const {
    return {&((params_->*head).*member), grads_ ? &((grads_->*head).*member) : nullptr};
  }
  const ModelParams& params() const { return *params_; }

 private:
  const ModelParams* params_;
  ModelParams* grads_;
};

}  // namespace m2vae
