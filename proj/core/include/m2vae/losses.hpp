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

// Training objectives. MSE is a mean over dimensions, KL terms are sums over
// dimensions, and every similarity is cosine with norms floored at 1e-12.

#include <span>
#include <string>
#include <vector>

#include "m2vae/autodiff.hpp"
#include "m2vae/datasets.hpp"
#include "m2vae/model.hpp"
#include "m2vae/params.hpp"

namespace m2vae {

struct LossWeights {
  double alpha = 0.5;
  double beta = 0.5;
  double tau = 0.1;
  double tau_co = 1.0;
  /// Treat the conditional prior of the joint KL as a fixed target.
  bool stop_prior_gradient = true;
  /// Multiplies the three KL terms. Stays at 1 unless KL annealing is on,
  /// in which case the breakdown identity holds with the annealed terms.
  double kl_weight = 1.0;
};

struct LossBreakdown {
  double recon = 0.0;
  double kl_joint = 0.0;
  double kl_unique_a = 0.0;
  double kl_unique_c = 0.0;
  double dcl = 0.0;
  double co = 0.0;
  double bpr = 0.0;
  double total = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double tau = 0.0;

  /// Recomposes total from the terms in the same order as total_loss.
  double recompose() const;
  /// Throws NumericError naming the first non-finite term.
  void check_finite() const;
  LossBreakdown& operator+=(const LossBreakdown& other);
  LossBreakdown scaled(double k) const;
};

/// Term names in breakdown order, for logs.
std::vector<std::string> loss_term_names();
std::vector<double> loss_term_values(const LossBreakdown& b);

namespace graph {

ad::Var recon_mse(ad::Var e, ad::Var e_new);
ad::Var kl_gaussians(const GaussianVar& q, const GaussianVar& p, bool stop_prior_gradient);
ad::Var kl_to_standard(const GaussianVar& q);
ad::Var dcl_loss(ad::Var z_attr, ad::Var z_image, ad::Var z_common, ad::Var pooled_attr, ad::Var image,
                 double tau);
ad::Var co_loss(ad::Var e_new, std::span<const ad::Var> positives, std::span<const ad::Var> negatives,
                double tau_co);
ad::Var bpr_loss(ad::Var e_new, ad::Var user, ad::Var neg_user);

struct LossVars {
  ad::Var recon, kl_joint, kl_unique_a, kl_unique_c, dcl, co, bpr, total;

  LossBreakdown breakdown(const LossWeights& w) const;
};

/// Builds the weighted objective for one triple on the trace's tape.
LossVars total_loss(const TraceVars& trace, const TrainTriple& triple, const ParamBinder& p,
                    const LossWeights& w);

}  // namespace graph

double recon_mse(std::span<const double> e, std::span<const double> e_new);
double kl_gaussians(const GaussianLatent& q, const GaussianLatent& p);
double kl_to_standard(const GaussianLatent& q);
double dcl_loss(std::span<const double> z_attr, std::span<const double> z_image, std::span<const double> z_common,
                std::span<const double> pooled_attr, std::span<const double> image, double tau);
/// Throws DataError when positives is empty.
double co_loss(std::span<const double> e_new, const std::vector<std::vector<double>>& positives,
               const std::vector<std::vector<double>>& negatives, double tau_co);
double bpr_loss(std::span<const double> e_new, std::span<const double> user, std::span<const double> neg_user);

LossBreakdown total_loss(const ForwardTrace& trace, const TrainTriple& triple, const ModelParams& params,
                         const LossWeights& w);

}  // namespace m2vae
