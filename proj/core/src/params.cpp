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
#include "m2vae/params.hpp"

#include <algorithm>

#include "m2vae/errors.hpp"

namespace m2vae {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kWoCommon: return "wo_common";
    case Variant::kEarlyGenerate: return "early_generate";
    case Variant::kNaiveMoe: return "naive_moe";
    case Variant::kWeightedPoe: return "weighted_poe";
    case Variant::kWoDcl: return "wo_dcl";
    case Variant::kWoCo: return "wo_co";
  }
  return "?";
}

std::string_view variant_description(Variant v) {
  switch (v) {
    case Variant::kFull: return "complete model";
    case Variant::kWoCommon: return "common view dropped from fusion";
    case Variant::kEarlyGenerate: return "common view generated from concatenated raw features";
    case Variant::kNaiveMoe: return "fusion gates fixed at 0.5, no user conditioning";
    case Variant::kWeightedPoe: return "fusion by precision-weighted product of experts";
    case Variant::kWoDcl: return "disentangled contrastive loss disabled";
    case Variant::kWoCo: return "co-occurrence contrastive loss disabled";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (Variant v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  return std::nullopt;
}

std::string variant_names() {
  std::string out;
  for (Variant v : kAllVariants) {
    if (!out.empty()) out += ", ";
    out += variant_name(v);
  }
  return out;
}

namespace {

bool uses_user_gates(Variant v) { return v != Variant::kNaiveMoe && v != Variant::kWeightedPoe; }

GaussianHead make_head(std::size_t in, std::size_t out) {
  return {Tensor(in, out), Tensor::vector(out), Tensor(in, out), Tensor::vector(out)};
}

template <typename Params, typename Fn>
void visit_impl(Params& p, Fn&& f) {
  auto head = [&f](const std::string& prefix, auto& h) {
    f(prefix + ".w_mu", h.w_mu);
    f(prefix + ".b_mu", h.b_mu);
    f(prefix + ".w_logvar", h.w_logvar);
    f(prefix + ".b_logvar", h.b_logvar);
  };
  auto one = [&f](const std::string& name, auto& t) {
    if (!t.empty()) f(name, t);
  };
  one("emb.user", p.user_emb);
  one("emb.item", p.item_emb);
  one("emb.attr", p.attr_emb);
  one("attn.query", p.attn_query);
  one("attn.default", p.attr_default);
  head("enc.id", p.enc_id);
  head("enc.attr", p.enc_attr);
  head("enc.image", p.enc_image);
  one("gate.attr.w", p.gate_attr_w);
  one("gate.attr.b", p.gate_attr_b);
  one("gate.image.w", p.gate_image_w);
  one("gate.image.b", p.gate_image_b);
  one("moe.attr.w", p.moe_attr_w);
  one("moe.image.w", p.moe_image_w);
  one("moe.a", p.moe_a);
  one("dec.w1", p.dec_w1);
  one("dec.b1", p.dec_b1);
  one("dec.w2", p.dec_w2);
  one("dec.b2", p.dec_b2);
  if (!p.early_w1.empty()) {
    one("early.w1", p.early_w1);
    one("early.b1", p.early_b1);
    head("early.head", p.early_head);
  }
  one("wpoe.log_w", p.wpoe_log_w);
}

}  // namespace

ModelParams ModelParams::allocate(const ModelDims& dims, Variant variant) {
  if (dims.d == 0) throw ConfigError("model: d must be positive");
  if (dims.hidden == 0) throw ConfigError("model: decoder hidden width must be positive");
  if (dims.users == 0 || dims.items == 0) throw ConfigError("model: empty user or item vocabulary");
  const std::size_t d = dims.d;
  ModelParams p;
  p.dims = dims;
  p.variant = variant;
  p.user_emb = Tensor(dims.users, d);
  p.item_emb = Tensor(dims.items, d);
  if (dims.attributes > 0) p.attr_emb = Tensor(dims.attributes, d);
  p.attn_query = Tensor::vector(d);
  p.attr_default = Tensor::vector(d);
  p.enc_id = make_head(d, d);
  p.enc_attr = make_head(d, d);
  p.enc_image = make_head(d, d);
  if (uses_user_gates(variant)) {
    p.gate_attr_w = Tensor(d, d);
    p.gate_attr_b = Tensor::vector(d);
    p.gate_image_w = Tensor(d, d);
    p.gate_image_b = Tensor::vector(d);
    p.moe_attr_w = Tensor(d, d);
    p.moe_image_w = Tensor(d, d);
    p.moe_a = Tensor::vector(d);
  }
  p.dec_w1 = Tensor(3 * d, dims.hidden);
  p.dec_b1 = Tensor::vector(dims.hidden);
  p.dec_w2 = Tensor(dims.hidden, d);
  p.dec_b2 = Tensor::vector(d);
  if (variant == Variant::kEarlyGenerate) {
    p.early_w1 = Tensor(2 * d, dims.hidden);
    p.early_b1 = Tensor::vector(dims.hidden);
    p.early_head = make_head(dims.hidden, d);
  }
  if (variant == Variant::kWeightedPoe) p.wpoe_log_w = Tensor::vector(3);
  return p;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  z.visit_mutable([](std::string_view, Tensor& t) { t.fill(0.0); });
  return z;
}

void ModelParams::visit_mutable(const std::function<void(std::string_view, Tensor&)>& f) {
  visit_impl(*this, [&f](const std::string& name, Tensor& t) { f(name, t); });
}

void ModelParams::visit(const std::function<void(std::string_view, const Tensor&)>& f) const {
  visit_impl(*this, [&f](const std::string& name, const Tensor& t) { f(name, t); });
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  visit([&n](std::string_view, const Tensor& t) { n += t.size(); });
  return n;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  visit([&ok](std::string_view, const Tensor& t) { ok = ok && t.all_finite(); });
  return ok;
}

Tensor* ModelParams::find(std::string_view name) {
  Tensor* out = nullptr;
  visit_mutable([&](std::string_view n, Tensor& t) {
    if (n == name) out = &t;
  });
  return out;
}

const Tensor* ModelParams::find(std::string_view name) const {
  const Tensor* out = nullptr;
  visit([&](std::string_view n, const Tensor& t) {
    if (n == name) out = &t;
  });
  return out;
}

}  // namespace m2vae
