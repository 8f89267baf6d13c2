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
#include "m2vae/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "m2vae/errors.hpp"

namespace m2vae {

std::vector<double> GaussianLatent::stddev() const {
  std::vector<double> out(log_var.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(0.5 * log_var[i]);
  return out;
}

std::vector<double> GaussianLatent::precision() const {
  std::vector<double> out(log_var.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (std::exp(log_var[i]) + kPrecisionEpsilon);
  return out;
}

bool GaussianLatent::finite() const {
  auto ok = [](double x) { return std::isfinite(x); };
  return std::all_of(mean.begin(), mean.end(), ok) && std::all_of(log_var.begin(), log_var.end(), ok);
}

LatentNoise LatentNoise::zeros(std::size_t d) {
  return {std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), std::vector<double>(d, 0.0),
          std::vector<double>(d, 0.0)};
}

LatentNoise LatentNoise::draw(std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentNoise n = zeros(d);
  for (auto* v : {&n.attr, &n.image, &n.common, &n.joint}) {
    for (auto& x : *v) x = normal(rng);
  }
  return n;
}

ItemContent item_content(const Catalog& catalog, std::uint32_t item) {
  return {catalog.attributes.rows.at(item), catalog.image_features.row(item)};
}

namespace graph {

using ad::Var;

GaussianVar constant(ad::Tape& tape, const GaussianLatent& z) {
  return {tape.constant(z.mean), tape.constant(z.log_var)};
}

GaussianVar encode(Var x, const ParamBinder& p, GaussianHead ModelParams::*head) {
  ad::Tape& tape = *x.tape();
  Var mean = ad::vecmat(x, p(head, &GaussianHead::w_mu)) + tape.param(p(head, &GaussianHead::b_mu));
  Var log_var = ad::vecmat(x, p(head, &GaussianHead::w_logvar)) + tape.param(p(head, &GaussianHead::b_logvar));
  return {mean, log_var};
}

Var atten_pool(ad::Tape& tape, std::span<const std::uint32_t> active, const ParamBinder& p) {
  if (active.empty()) return tape.param(p(&ModelParams::attr_default));
  Var query = tape.param(p(&ModelParams::attn_query));
  std::vector<Var> rows;
  std::vector<Var> scores;
  rows.reserve(active.size());
  scores.reserve(active.size());
  for (auto j : active) {
    rows.push_back(tape.row(p(&ModelParams::attr_emb), j));
    scores.push_back(ad::dot(query, rows.back()));
  }
  Var weights = ad::softmax(ad::concat(scores));
  Var pooled = ad::element(weights, 0) * rows[0];
  for (std::size_t k = 1; k < rows.size(); ++k) pooled = pooled + ad::element(weights, k) * rows[k];
  return pooled;
}

GaussianVar poe(std::span<const GaussianVar> experts, std::span<const Var> scales) {
  Var num, den;
  for (std::size_t m = 0; m < experts.size(); ++m) {
    Var precision = ad::reciprocal(ad::exp(experts[m].log_var) + kPrecisionEpsilon);
    if (!scales.empty()) precision = scales[m] * precision;
    Var weighted = experts[m].mean * precision;
    num = m == 0 ? weighted : num + weighted;
    den = m == 0 ? precision : den + precision;
  }
  return {num / den, -ad::log(den)};
}

Var reparameterize(const GaussianVar& z, Var noise) {
  return z.mean + ad::exp(z.log_var * 0.5) * noise;
}

Var self_gate(Var user, View view, const ParamBinder& p) {
  ad::Tape& tape = *user.tape();
  const bool attr = view == View::kAttribute;
  Var pre = ad::vecmat(user, p(attr ? &ModelParams::gate_attr_w : &ModelParams::gate_image_w)) +
            tape.param(p(attr ? &ModelParams::gate_attr_b : &ModelParams::gate_image_b));
  return user * ad::logistic(pre);
}

Var moe_gate(Var user_attr, Var user_image, Var z_attr, Var z_image, const ParamBinder& p) {
  ad::Tape& tape = *user_attr.tape();
  Var a = tape.param(p(&ModelParams::moe_a));
  Var logit_attr = ad::dot(a, ad::vecmat(user_attr * z_attr, p(&ModelParams::moe_attr_w)));
  Var logit_image = ad::dot(a, ad::vecmat(user_image * z_image, p(&ModelParams::moe_image_w)));
  return ad::softmax(ad::concat({logit_attr, logit_image}));
}

namespace {

// Gaussian with the first two moments of sum_k w_k N(mu_k, exp(s_k)).
GaussianVar moment_matched(std::span<const GaussianVar> parts, std::span<const Var> weights) {
  Var mean, second;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    Var m = weights[k] * parts[k].mean;
    Var s = weights[k] * (ad::exp(parts[k].log_var) + ad::square(parts[k].mean));
    mean = k == 0 ? m : mean + m;
    second = k == 0 ? s : second + s;
  }
  return {mean, ad::log(second - ad::square(mean))};
}

}  // namespace

GaussianVar fuse_views(const GaussianVar& z_attr, const GaussianVar& z_image, const GaussianVar& z_common,
                       Var gates, Variant variant, const ModelOptions& options, const ParamBinder& p) {
  ad::Tape& tape = *gates.tape();
  if (variant == Variant::kWeightedPoe) {
    Var log_w = tape.param(p(&ModelParams::wpoe_log_w));
    const GaussianVar experts[] = {z_attr, z_image, z_common};
    const Var scales[] = {ad::exp(ad::element(log_w, 0)), ad::exp(ad::element(log_w, 1)),
                          ad::exp(ad::element(log_w, 2))};
    return poe(experts, scales);
  }
  Var g_attr = ad::element(gates, 0);
  Var g_image = ad::element(gates, 1);
  const bool with_common = variant != Variant::kWoCommon;
  if (options.moment_matched_fusion) {
    if (!with_common) {
      const GaussianVar parts[] = {z_attr, z_image};
      const Var w[] = {g_attr, g_image};
      return moment_matched(parts, w);
    }
    const GaussianVar parts[] = {z_attr, z_image, z_common};
    const Var w[] = {g_attr * 0.5, g_image * 0.5, tape.constant(0.5)};
    return moment_matched(parts, w);
  }
  Var mean = g_attr * z_attr.mean + g_image * z_image.mean;
  Var log_var = g_attr * z_attr.log_var + g_image * z_image.log_var;
  if (!with_common) return {mean, log_var};
  return {(mean + z_common.mean) * 0.5, (log_var + z_common.log_var) * 0.5};
}

GaussianVar fuse_joint(const GaussianVar& z_id, const GaussianVar& z_fused) {
  return {(z_id.mean + z_fused.mean) * 0.5, (z_id.log_var + z_fused.log_var) * 0.5};
}

Var decode(Var z, Var pooled_attr, Var image, const ParamBinder& p, Activation act) {
  ad::Tape& tape = *z.tape();
  Var hidden = ad::vecmat(ad::concat({z, pooled_attr, image}), p(&ModelParams::dec_w1)) +
               tape.param(p(&ModelParams::dec_b1));
  if (act == Activation::kTanh) hidden = ad::tanh(hidden);
  return ad::vecmat(hidden, p(&ModelParams::dec_w2)) + tape.param(p(&ModelParams::dec_b2));
}

ContentVars encode_content(ad::Tape& tape, const ItemContent& item, const ParamBinder& p) {
  ContentVars c;
  c.pooled_attr = atten_pool(tape, item.attributes, p);
  c.image = tape.constant(item.image);
  c.attr = encode(c.pooled_attr, p, &ModelParams::enc_attr);
  c.image_latent = encode(c.image, p, &ModelParams::enc_image);
  if (p.params().variant == Variant::kEarlyGenerate) {
    Var hidden = ad::tanh(ad::vecmat(ad::concat({c.pooled_attr, c.image}), p(&ModelParams::early_w1)) +
                          tape.param(p(&ModelParams::early_b1)));
    c.common = encode(hidden, p, &ModelParams::early_head);
  } else {
    const GaussianVar experts[] = {c.attr, c.image_latent};
    c.common = poe(experts);
  }
  return c;
}

Var gates_for(ad::Tape& tape, Var user, Var z_attr, Var z_image, const ParamBinder& p) {
  const Variant v = p.params().variant;
  if (v == Variant::kNaiveMoe || v == Variant::kWeightedPoe) return tape.constant({0.5, 0.5});
  Var user_attr = self_gate(user, View::kAttribute, p);
  Var user_image = self_gate(user, View::kImage, p);
  return moe_gate(user_attr, user_image, z_attr, z_image, p);
}

ForwardTrace TraceVars::values() const {
  ForwardTrace t;
  t.z_id = id.values();
  t.z_attr = content.attr.values();
  t.z_image = content.image_latent.values();
  t.z_common = content.common.values();
  t.z_fused = fused.values();
  t.z_joint = joint.values();
  t.sample_attr = sample_attr.to_vector();
  t.sample_image = sample_image.to_vector();
  t.sample_common = sample_common.to_vector();
  t.sample_joint = sample_joint.to_vector();
  t.gate_attr = gates[0];
  t.gate_image = gates[1];
  t.pooled_attr = content.pooled_attr.to_vector();
  t.image = content.image.to_vector();
  t.item_embedding = item_embedding.to_vector();
  t.user_embedding = user_embedding.to_vector();
  t.e_new = e_new.to_vector();
  return t;
}

TraceVars forward_train(ad::Tape& tape, const ParamBinder& p, const ModelOptions& options,
                        const ItemContent& item, std::uint32_t item_id, std::uint32_t user_id,
                        const LatentNoise& noise) {
  TraceVars t;
  t.item_embedding = tape.row(p(&ModelParams::item_emb), item_id);
  t.user_embedding = tape.row(p(&ModelParams::user_emb), user_id);
  t.id = encode(t.item_embedding, p, &ModelParams::enc_id);
  t.content = encode_content(tape, item, p);
  t.sample_attr = reparameterize(t.content.attr, tape.constant(noise.attr));
  t.sample_image = reparameterize(t.content.image_latent, tape.constant(noise.image));
  t.sample_common = reparameterize(t.content.common, tape.constant(noise.common));
  t.gates = gates_for(tape, t.user_embedding, t.sample_attr, t.sample_image, p);
  t.fused = fuse_views(t.content.attr, t.content.image_latent, t.content.common, t.gates, p.params().variant,
                       options, p);
  t.joint = fuse_joint(t.id, t.fused);
  t.sample_joint = reparameterize(t.joint, tape.constant(noise.joint));
  t.e_new = decode(t.sample_joint, t.content.pooled_attr, t.content.image, p, options.decoder_activation);
  return t;
}

Var infer_cold(ad::Tape& tape, const ParamBinder& p, const ModelOptions& options, const ItemContent& item,
               Var user) {
  ContentVars c = encode_content(tape, item, p);
  Var gates = gates_for(tape, user, c.attr.mean, c.image_latent.mean, p);
  GaussianVar fused = fuse_views(c.attr, c.image_latent, c.common, gates, p.params().variant, options, p);
  return decode(fused.mean, c.pooled_attr, c.image, p, options.decoder_activation);
}

}  // namespace graph

namespace {

ParamBinder frozen(const ModelParams& params) { return ParamBinder(params, nullptr); }

}  // namespace

GaussianLatent encode_id(std::span<const double> e, const ModelParams& params) {
  ad::Tape tape;
  return graph::encode(tape.constant(e), frozen(params), &ModelParams::enc_id).values();
}

std::vector<double> atten_pool(std::span<const std::uint32_t> active, const ModelParams& params) {
  ad::Tape tape;
  return graph::atten_pool(tape, active, frozen(params)).to_vector();
}

GaussianLatent encode_attr(std::span<const std::uint32_t> active, const ModelParams& params) {
  ad::Tape tape;
  auto p = frozen(params);
  return graph::encode(graph::atten_pool(tape, active, p), p, &ModelParams::enc_attr).values();
}

GaussianLatent encode_image(std::span<const double> c, const ModelParams& params) {
  ad::Tape tape;
  return graph::encode(tape.constant(c), frozen(params), &ModelParams::enc_image).values();
}

GaussianLatent poe_common(const GaussianLatent& z_attr, const GaussianLatent& z_image) {
  ad::Tape tape;
  const graph::GaussianVar experts[] = {graph::constant(tape, z_attr), graph::constant(tape, z_image)};
  return graph::poe(experts).values();
}

std::vector<double> reparameterize(const GaussianLatent& z, std::span<const double> noise) {
  ad::Tape tape;
  return graph::reparameterize(graph::constant(tape, z), tape.constant(noise)).to_vector();
}

std::vector<double> self_gate(std::span<const double> user, View view, const ModelParams& params) {
  ad::Tape tape;
  return graph::self_gate(tape.constant(user), view, frozen(params)).to_vector();
}

Gates moe_gate(std::span<const double> user_attr, std::span<const double> user_image,
               std::span<const double> z_attr, std::span<const double> z_image, const ModelParams& params) {
  ad::Tape tape;
  auto g = graph::moe_gate(tape.constant(user_attr), tape.constant(user_image), tape.constant(z_attr),
                           tape.constant(z_image), frozen(params));
  return {g[0], g[1]};
}

GaussianLatent fuse_views(const GaussianLatent& z_attr, const GaussianLatent& z_image,
                          const GaussianLatent& z_common, Gates gates, const ModelParams& params,
                          const ModelOptions& options) {
  ad::Tape tape;
  return graph::fuse_views(graph::constant(tape, z_attr), graph::constant(tape, z_image),
                           graph::constant(tape, z_common), tape.constant({gates.attr, gates.image}),
                           params.variant, options, frozen(params))
      .values();
}

GaussianLatent fuse_joint(const GaussianLatent& z_id, const GaussianLatent& z_fused) {
  ad::Tape tape;
  return graph::fuse_joint(graph::constant(tape, z_id), graph::constant(tape, z_fused)).values();
}

std::vector<double> decode(std::span<const double> z, std::span<const double> pooled_attr,
                           std::span<const double> image, const ModelParams& params, const ModelOptions& options) {
  ad::Tape tape;
  return graph::decode(tape.constant(z), tape.constant(pooled_attr), tape.constant(image), frozen(params),
                       options.decoder_activation)
      .to_vector();
}

ForwardTrace forward_train(const ModelParams& params, const ModelOptions& options, const Catalog& catalog,
                           std::uint32_t item, std::uint32_t user, const LatentNoise& noise) {
  ad::Tape tape;
  return graph::forward_train(tape, frozen(params), options, item_content(catalog, item), item, user, noise)
      .values();
}

ColdScore infer_cold(const ModelParams& params, const ModelOptions& options, const ItemContent& item,
                     std::span<const double> user_embedding) {
  const bool has_image = std::any_of(item.image.begin(), item.image.end(), [](double x) { return x != 0.0; });
  if (item.attributes.empty() && !has_image) {
    throw DataError("cold item has neither attributes nor image features");
  }
  ad::Tape tape;
  ad::Var user = tape.constant(user_embedding);
  ad::Var e_new = graph::infer_cold(tape, frozen(params), options, item, user);
  return {e_new.to_vector(), ad::dot(user, e_new).scalar()};
}

ColdScore infer_cold(const ModelParams& params, const ModelOptions& options, const Catalog& catalog,
                     std::uint32_t item, std::uint32_t user) {
  return infer_cold(params, options, item_content(catalog, item), params.user_emb.row(user));
}

}  // namespace m2vae
