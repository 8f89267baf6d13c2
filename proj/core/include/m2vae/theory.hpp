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

// Numeric checks of the fusion-density inequalities and a Monte Carlo ELBO
// comparison between PoE fusion and the hybrid (mixture + product) posterior
// on a 1-D toy.
//
// For q_j in (0,1) and weights alpha on the simplex with 0 < alpha_j < 1:
//   sum_j alpha_j q_j  >=  prod_j q_j^alpha_j  >  prod_j q_j.
// The first relation is evaluated in long double with a rounding allowance
// of a few ulps; the second is checked in the log domain, where it reads
// sum_j (1 - alpha_j) * (-log q_j) > 0.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace m2vae {

struct AmgmCheck {
  long double arithmetic = 0;  // sum alpha_j q_j
  long double geometric = 0;   // prod q_j^alpha_j
  long double product = 0;     // prod q_j
  /// arithmetic - geometric.
  long double amgm_margin = 0;
  /// sum (1 - alpha_j)(-log q_j), the log of geometric / product.
  long double strict_log_margin = 0;
  bool equal_q = false;
  bool amgm_holds = false;
  bool strict_holds = false;
};

/// Evaluates the chain for one draw. Inputs outside the domain are still
/// evaluated, which is how a violation fixture is produced.
AmgmCheck check_amgm(std::span<const long double> q, std::span<const long double> alpha);

/// Margin of sum alpha_j q_j > prod q_j; strict when positive.
long double fusion_density_margin(std::span<const long double> q, std::span<const long double> alpha);

struct TheoryOptions {
  std::size_t draws = 100000;
  std::uint64_t seed = 0;
  std::size_t components = 2;
  /// Appends the out-of-domain draw q = (2, 2), alpha = (0.5, 0.5), which
  /// violates both relations.
  bool inject_violation = false;
};

struct ToySpec {
  double mu_a = -2.0;
  double log_var_a = 0.0;
  double mu_c = 2.0;
  double log_var_c = 0.0;
  double gate_a = 0.5;  // gate_c = 1 - gate_a
  /// Shared linear decoder p(x | z) = N(x; w z + b, exp(log_var_x)).
  double w = 1.0;
  double b = 0.0;
  double log_var_x = 0.0;
  double x = 0.5;
};

/// q_hybrid = 1/2 (gate_a N_a + gate_c N_c) + 1/2 N_a N_c, normalized. The
/// product of two Gaussian densities is Z N_poe with Z = N(mu_a; mu_c,
/// var_a + var_c), so q_hybrid is the three-component mixture returned here.
struct HybridMixture {
  std::vector<double> weights;  // (a, c, poe), sum to 1
  std::vector<double> means;
  std::vector<double> variances;
  double product_mass = 0.0;  // Z

  double log_density(double z) const;
};

HybridMixture hybrid_posterior(const ToySpec& toy);
/// (mean, variance) of the precision-weighted product.
std::pair<double, double> poe_posterior(const ToySpec& toy);

struct ElboGapReport {
  std::size_t mc_samples = 0;
  double elbo_hybrid = 0.0;
  double elbo_poe = 0.0;
  double se_hybrid = 0.0;
  double se_poe = 0.0;
  /// elbo_hybrid - elbo_poe, with the standard error of the difference.
  double gap = 0.0;
  double gap_se = 0.0;
  double kl_hybrid_mc = 0.0;
  double kl_poe_mc = 0.0;
  double kl_hybrid_se = 0.0;
  double kl_poe_se = 0.0;
  double kl_hybrid_grid = 0.0;
  double kl_poe_closed = 0.0;
  /// Grid integral of the unnormalized hybrid against its closed-form mass.
  double normalizer_grid = 0.0;
  double normalizer_closed = 0.0;
  /// Per-sample ELBO integrands (hybrid, poe); filled when requested.
  std::vector<std::pair<double, double>> samples;
};

ElboGapReport estimate_elbo_gap(const ToySpec& toy, std::size_t mc_samples, std::uint64_t seed,
                                bool keep_samples = false);

/// KL(q || N(0,1)) by trapezoidal integration of a log-density on [lo, hi].
double kl_to_standard_grid(const std::function<double(double)>& log_q, double lo, double hi, std::size_t points);

struct TheoryReport {
  std::size_t draws = 0;
  std::size_t amgm_violations = 0;
  std::size_t density_violations = 0;
  std::size_t equality_cases = 0;
  long double min_amgm_margin = 0;
  long double min_strict_log_margin = 0;
  long double min_density_margin = 0;
  std::optional<ElboGapReport> elbo;

  bool passed() const { return amgm_violations == 0 && density_violations == 0; }
  std::string to_text() const;
};

/// AM-GM chain over seeded draws; fills draws, amgm_violations and margins.
TheoryReport check_amgm_chain(const TheoryOptions& options);
/// The end-to-end strict inequality; fills draws and density_violations.
TheoryReport compare_fusion_densities(const TheoryOptions& options);
/// Both checks plus the ELBO gap on the toy.
TheoryReport verify_theory(const TheoryOptions& options, const ToySpec& toy = {}, std::size_t mc_samples = 100000);

}  // namespace m2vae
