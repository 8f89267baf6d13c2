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
#include "m2vae/losses.hpp"

#include <cmath>

#include "m2vae/errors.hpp"

namespace m2vae {

double LossBreakdown::recompose() const {
  return ((recon + kl_joint + kl_unique_a + kl_unique_c) + bpr) + alpha * dcl + beta * co;
}

void LossBreakdown::check_finite() const {
  const auto names = loss_term_names();
  const auto values = loss_term_values(*this);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!std::isfinite(values[i])) throw NumericError("non-finite loss term: " + names[i]);
  }
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  recon += o.recon;
  kl_joint += o.kl_joint;
  kl_unique_a += o.kl_unique_a;
  kl_unique_c += o.kl_unique_c;
  dcl += o.dcl;
  co += o.co;
  bpr += o.bpr;
  total += o.total;
  alpha = o.alpha;
  beta = o.beta;
  tau = o.tau;
  return *this;
}

LossBreakdown LossBreakdown::scaled(double k) const {
  LossBreakdown b = *this;
  for (double* x : {&b.recon, &b.kl_joint, &b.kl_unique_a, &b.kl_unique_c, &b.dcl, &b.co, &b.bpr, &b.total}) {
    *x *= k;
  }
  return b;
}

std::vector<std::string> loss_term_names() {
  return {"recon", "kl_joint", "kl_unique_a", "kl_unique_c", "dcl", "co", "bpr", "total"};
}

std::vector<double> loss_term_values(const LossBreakdown& b) {
  return {b.recon, b.kl_joint, b.kl_unique_a, b.kl_unique_c, b.dcl, b.co, b.bpr, b.total};
}

namespace graph {

using ad::Var;

Var recon_mse(Var e, Var e_new) { return ad::mean(ad::square(e - e_new)); }

Var kl_gaussians(const GaussianVar& q, const GaussianVar& p, bool stop_prior_gradient) {
  Var mp = stop_prior_gradient ? ad::detach(p.mean) : p.mean;
  Var sp = stop_prior_gradient ? ad::detach(p.log_var) : p.log_var;
  Var inv_var_p = ad::exp(-sp);
  Var terms = (ad::exp(q.log_var) + ad::square(q.mean - mp)) * inv_var_p + (sp - q.log_var) + -1.0;
  return ad::sum(terms) * 0.5;
}

Var kl_to_standard(const GaussianVar& q) {
  Var terms = ad::exp(q.log_var) + ad::square(q.mean) - q.log_var + -1.0;
  return ad::sum(terms) * 0.5;
}

Var dcl_loss(Var z_attr, Var z_image, Var z_common, Var pooled_attr, Var image, double tau) {
  if (!(tau > 0.0)) throw ConfigError("dcl temperature must be positive");
  Var attr_term = ad::cosine(z_attr, pooled_attr) - ad::cosine(z_attr, z_common);
  Var image_term = ad::cosine(z_image, image) - ad::cosine(z_image, z_common);
  return (attr_term * (-1.0 / tau)) + (image_term * (-1.0 / tau));
}

Var co_loss(Var e_new, std::span<const Var> positives, std::span<const Var> negatives, double tau_co) {
  if (positives.empty()) throw DataError("co-occurrence loss needs at least one positive");
  if (!(tau_co > 0.0)) throw ConfigError("co-occurrence temperature must be positive");
  std::vector<Var> logits(negatives.size() + 1);
  for (std::size_t k = 0; k < negatives.size(); ++k) {
    logits[k + 1] = ad::cosine(e_new, negatives[k]) * (1.0 / tau_co);
  }
  Var total;
  for (std::size_t m = 0; m < positives.size(); ++m) {
    Var pos = ad::cosine(e_new, positives[m]) * (1.0 / tau_co);
    logits[0] = pos;
    Var term = ad::logsumexp(ad::concat(logits)) - pos;
    total = m == 0 ? term : total + term;
  }
  return total * (1.0 / static_cast<double>(positives.size()));
}

Var bpr_loss(Var e_new, Var user, Var neg_user) {
  return ad::softplus(-(ad::dot(e_new, user) - ad::dot(e_new, neg_user)));
}

LossBreakdown LossVars::breakdown(const LossWeights& w) const {
  LossBreakdown b;
  b.recon = recon.scalar();
  b.kl_joint = kl_joint.scalar();
  b.kl_unique_a = kl_unique_a.scalar();
  b.kl_unique_c = kl_unique_c.scalar();
  b.dcl = dcl.scalar();
  b.co = co.scalar();
  b.bpr = bpr.scalar();
  b.total = total.scalar();
  b.alpha = w.alpha;
  b.beta = w.beta;
  b.tau = w.tau;
  return b;
}

LossVars total_loss(const TraceVars& t, const TrainTriple& triple, const ParamBinder& p, const LossWeights& w) {
  ad::Tape& tape = *t.e_new.tape();
  LossVars l;
  l.recon = recon_mse(t.item_embedding, t.e_new);
  l.kl_joint = kl_gaussians(t.joint, t.fused, w.stop_prior_gradient);
  l.kl_unique_a = kl_to_standard(t.content.attr);
  l.kl_unique_c = kl_to_standard(t.content.image_latent);
  if (w.kl_weight != 1.0) {
    l.kl_joint = l.kl_joint * w.kl_weight;
    l.kl_unique_a = l.kl_unique_a * w.kl_weight;
    l.kl_unique_c = l.kl_unique_c * w.kl_weight;
  }
  l.dcl = dcl_loss(t.sample_attr, t.sample_image, t.sample_common, t.content.pooled_attr, t.content.image, w.tau);

  const auto items = p(&ModelParams::item_emb);
  std::vector<Var> pos, neg;
  pos.reserve(triple.co_pos.size());
  neg.reserve(triple.co_neg.size());
  for (auto v : triple.co_pos) pos.push_back(tape.row(items, v));
  for (auto v : triple.co_neg) neg.push_back(tape.row(items, v));
  l.co = co_loss(t.e_new, pos, neg, w.tau_co);

  l.bpr = bpr_loss(t.e_new, t.user_embedding, tape.row(p(&ModelParams::user_emb), triple.neg_user));
  l.total = ((l.recon + l.kl_joint + l.kl_unique_a + l.kl_unique_c) + l.bpr) + l.dcl * w.alpha + l.co * w.beta;
  return l;
}

}  // namespace graph

namespace {

graph::GaussianVar make(ad::Tape& tape, const GaussianLatent& z) { return graph::constant(tape, z); }

}  // namespace

double recon_mse(std::span<const double> e, std::span<const double> e_new) {
  ad::Tape tape;
  return graph::recon_mse(tape.constant(e), tape.constant(e_new)).scalar();
}

double kl_gaussians(const GaussianLatent& q, const GaussianLatent& p) {
  ad::Tape tape;
  return graph::kl_gaussians(make(tape, q), make(tape, p), false).scalar();
}

double kl_to_standard(const GaussianLatent& q) {
  ad::Tape tape;
  return graph::kl_to_standard(make(tape, q)).scalar();
}

double dcl_loss(std::span<const double> z_attr, std::span<const double> z_image, std::span<const double> z_common,
                std::span<const double> pooled_attr, std::span<const double> image, double tau) {
  ad::Tape tape;
  return graph::dcl_loss(tape.constant(z_attr), tape.constant(z_image), tape.constant(z_common),
                         tape.constant(pooled_attr), tape.constant(image), tau)
      .scalar();
}

double co_loss(std::span<const double> e_new, const std::vector<std::vector<double>>& positives,
               const std::vector<std::vector<double>>& negatives, double tau_co) {
  ad::Tape tape;
  std::vector<ad::Var> pos, neg;
  for (const auto& v : positives) pos.push_back(tape.constant(v));
  for (const auto& v : negatives) neg.push_back(tape.constant(v));
  return graph::co_loss(tape.constant(e_new), pos, neg, tau_co).scalar();
}

double bpr_loss(std::span<const double> e_new, std::span<const double> user, std::span<const double> neg_user) {
  ad::Tape tape;
  return graph::bpr_loss(tape.constant(e_new), tape.constant(user), tape.constant(neg_user)).scalar();
}

LossBreakdown total_loss(const ForwardTrace& t, const TrainTriple& triple, const ModelParams& params,
                         const LossWeights& w) {
  LossBreakdown b;
  b.recon = recon_mse(t.item_embedding, t.e_new);
  b.kl_joint = kl_gaussians(t.z_joint, t.z_fused) * w.kl_weight;
  b.kl_unique_a = kl_to_standard(t.z_attr) * w.kl_weight;
  b.kl_unique_c = kl_to_standard(t.z_image) * w.kl_weight;
  b.dcl = dcl_loss(t.sample_attr, t.sample_image, t.sample_common, t.pooled_attr, t.image, w.tau);
  std::vector<std::vector<double>> pos, neg;
  for (auto v : triple.co_pos) {
    auto r = params.item_emb.row(v);
    pos.emplace_back(r.begin(), r.end());
  }
  for (auto v : triple.co_neg) {
    auto r = params.item_emb.row(v);
    neg.emplace_back(r.begin(), r.end());
  }
  b.co = co_loss(t.e_new, pos, neg, w.tau_co);
  b.bpr = bpr_loss(t.e_new, t.user_embedding, params.user_emb.row(triple.neg_user));
  b.alpha = w.alpha;
  b.beta = w.beta;
  b.tau = w.tau;
  b.total = b.recompose();
  b.check_finite();
  return b;
}

}  // namespace m2vae
